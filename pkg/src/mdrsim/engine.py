"""Round-based simulation loop and metric aggregation.

Time is discrete: one round is one second, and every in-flight share moves
exactly one hop per round.  A message injected in round ``r`` takes its first
hop in round ``r + 1``, so a direct delivery has a delay of one round.

Random streams
--------------
All randomness hangs off ``numpy.random.SeedSequence(seed, spawn_key=key)``
with the following integer keys (``fkey`` is the compromise fraction in
millionths):

* ``(run, 0)``            deployment, batteries and every reshuffle
* ``(run, 1)``            ordering of nodes for compromise
* ``(run, 2, fkey)``      message schedule and endpoints
* ``(run, 3, fkey)``      forwarding choices: each injected message draws an
  ``(n, C)`` block of uniforms in injection order and share ``i`` owns row ``i``

No key mentions the policy: the four policies of a sweep are compared on
identical fields, compromised sets, traffic and random draws.  Deployment and
compromise ordering depend on the run alone, so compromised sets are nested
across fractions.
Each share owning its row makes a round's outcome independent of the
order in which shares are processed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .adversary import AdversaryState, compromise_nodes
from .coding import Share, ShareStatus, compromised, lbc_split, reconstructable
from .config import ConfigError, ScenarioConfig
from .election import ElectionTrace, SpecialNodeTable, elect_all
from .routing import RoutingContext, step
from .topology import NodeId, ReshufflePlan, Topology, deploy_nodes

log = logging.getLogger(__name__)

WORLD, COMPROMISE, TRAFFIC, ROUTING = range(4)


def fraction_key(fraction: float) -> int:
    return int(round(fraction * 1_000_000))


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


class ShareStream:
    """A share's pre-drawn uniforms, consumed one per random forwarding choice.

    Only random-phase forwards draw, and each one spends a unit of the
    counter, so ``counter`` values always suffice.
    """

    __slots__ = ("u", "pos")

    def __init__(self, u: np.ndarray):
        self.u = u.tolist()
        self.pos = 0

    def integers(self, high: int) -> int:
        """Uniform integer in ``[0, high)``."""
        x = self.u[self.pos]
        self.pos += 1
        return int(x * high)


@dataclass
class MessageRecord:
    id: int
    source: NodeId
    destination: NodeId
    injected: int
    shares: list[Share] = field(default_factory=list)
    finished: list[int | None] = field(default_factory=list)  # round each share terminated


@dataclass
class RunLog:
    config: ScenarioConfig
    run: int
    messages: list[MessageRecord] = field(default_factory=list)
    compromised: frozenset[NodeId] = frozenset()
    adversary: AdversaryState | None = None
    elections: ElectionTrace = field(default_factory=ElectionTrace)
    hop_log: list[tuple] | None = None
    special_history: list[frozenset[NodeId]] = field(default_factory=list)


@dataclass
class MetricsReport:
    policy: str
    compromise_fraction: float
    compromised_nodes: int
    runs: int
    sim_rounds: int
    messages_sent: int = 0
    messages_delivered: int = 0
    messages_compromised: int = 0
    shares_total: int = 0
    shares_delivered: int = 0
    shares_dropped: int = 0
    shares_intercepted: int = 0
    dead_end_drops: int = 0
    timeout_drops: int = 0
    looped_shares: int = 0  # traces that visit some node twice
    delay_sum: float = 0.0
    payload_units: float = 1.0

    @property
    def pdr(self) -> float | None:
        if self.messages_sent == 0:
            return None
        return self.messages_delivered / self.messages_sent

    @property
    def drop_rate(self) -> float | None:
        if self.shares_total == 0:
            return None
        return (self.shares_dropped + self.shares_intercepted) / self.shares_total

    @property
    def throughput(self) -> float:
        """Reconstructed payload units per round, averaged over runs."""
        return self.messages_delivered * self.payload_units / (self.runs * self.sim_rounds)

    @property
    def avg_delay(self) -> float | None:
        if self.messages_delivered == 0:
            return None
        return self.delay_sum / self.messages_delivered

    def merge(self, other: "MetricsReport") -> "MetricsReport":
        merged = MetricsReport(
            policy=self.policy,
            compromise_fraction=self.compromise_fraction,
            compromised_nodes=self.compromised_nodes,
            runs=self.runs + other.runs,
            sim_rounds=self.sim_rounds,
            payload_units=self.payload_units,
        )
        for name in (
            "messages_sent", "messages_delivered", "messages_compromised", "shares_total",
            "shares_delivered", "shares_dropped", "shares_intercepted", "dead_end_drops",
            "timeout_drops", "looped_shares", "delay_sum",
        ):
            setattr(merged, name, getattr(self, name) + getattr(other, name))
        return merged


def compute_metrics(log: RunLog) -> MetricsReport:
    cfg = log.config
    params = cfg.coding
    report = MetricsReport(
        policy=cfg.policy.value,
        compromise_fraction=cfg.compromise_fraction,
        compromised_nodes=len(log.compromised),
        runs=1,
        sim_rounds=cfg.sim_rounds,
        payload_units=cfg.payload_units,
    )
    for msg in log.messages:
        report.messages_sent += 1
        report.shares_total += len(msg.shares)
        arrivals = []
        stolen = set()
        for share, done in zip(msg.shares, msg.finished):
            if len(set(share.trace)) != len(share.trace):
                report.looped_shares += 1
            if share.status is ShareStatus.DELIVERED:
                report.shares_delivered += 1
                arrivals.append(done)
            elif share.status is ShareStatus.INTERCEPTED:
                report.shares_intercepted += 1
                stolen.add(share.index)
            else:
                report.shares_dropped += 1
                if share.drop_reason == "dead-end":
                    report.dead_end_drops += 1
                elif share.drop_reason == "timeout":
                    report.timeout_drops += 1
        delivered = {s.index for s in msg.shares if s.status is ShareStatus.DELIVERED}
        if reconstructable(delivered, params):
            report.messages_delivered += 1
            arrivals.sort()
            report.delay_sum += arrivals[params.k - 1] - msg.injected
        if compromised(stolen, params):
            report.messages_compromised += 1
    return report


class Simulation:
    """One run of one (policy, fraction) cell."""

    def __init__(self, config: ScenarioConfig, run: int = 0, trace_hops: bool = False):
        self.config = config
        # optional reordering of the in-flight list before each round's hops
        self.share_order = None
        self.run = run
        seed = config.seed
        fkey = fraction_key(config.compromise_fraction)
        self._world = stream(seed, run, WORLD)
        self._traffic = stream(seed, run, TRAFFIC, fkey)
        self._routing = stream(seed, run, ROUTING, fkey)

        topo = deploy_nodes(config, self._world)
        # the world stream is only read by reshuffles from here on
        n_shuffles = (config.sim_rounds - 1) // config.reshuffle_period if config.reshuffle_period else 0
        self._shuffles = ReshufflePlan(topo, self._world, n_shuffles)
        table = elect_all(topo, SpecialNodeTable.empty(topo.num_domains))
        adversary = compromise_nodes(
            topo, config.compromise_fraction, table, stream(seed, run, COMPROMISE)
        )
        topo = topo.with_compromised(adversary.compromised)
        self.log = RunLog(config, run, compromised=adversary.compromised, adversary=adversary)
        self.log.elections.record(table)
        self.log.special_history.append(frozenset(table.current))
        self.ctx = RoutingContext(
            policy=config.policy,
            topology=topo,
            specials=table,
            adversary=adversary,
            strict_links=config.strict_special_links,
            hop_log=[] if trace_hops else None,
        )
        self.log.hop_log = self.ctx.hop_log
        self.in_flight: list[tuple[Share, ShareStream, MessageRecord]] = []
        self._schedule = self._plan_traffic()

    @property
    def topology(self) -> Topology:
        return self.ctx.topology

    def _plan_traffic(self) -> dict[int, list[tuple[NodeId, NodeId]]]:
        cfg = self.config
        rounds = np.sort(
            self._traffic.integers(0, cfg.sim_rounds // 2, size=cfg.messages_per_run, endpoint=True)
        )
        schedule: dict[int, list[tuple[NodeId, NodeId]]] = {}
        for r in rounds:
            schedule.setdefault(int(r), []).append(self.draw_endpoints())
        return schedule

    def draw_endpoints(self) -> tuple[NodeId, NodeId]:
        """Uniform (src, dst) over distinct uncompromised nodes in different domains.

        Falls back to same-domain pairs only if no cross-domain pair exists.
        """
        topo = self.topology
        eligible = np.flatnonzero(~topo.compromised)
        if len(eligible) < 2:
            raise ConfigError("fewer than two uncompromised nodes: no source/destination pair")
        domains = topo.domain[eligible]
        cross = len(set(domains.tolist())) > 1
        while True:
            src, dst = self._traffic.choice(eligible, size=2, replace=True)
            if src == dst:
                continue
            if cross and topo.domain[src] == topo.domain[dst]:
                continue
            return int(src), int(dst)

    def inject_message(self, src: NodeId, dst: NodeId, round_: int) -> list[Share]:
        if src == dst:
            raise ConfigError("source and destination must differ")
        if src in self.ctx.adversary.compromised or dst in self.ctx.adversary.compromised:
            raise ConfigError("source and destination must be uncompromised")
        msg_id = len(self.log.messages)
        shares = lbc_split(msg_id, src, dst, self.config.coding, self.config.counter)
        record = MessageRecord(msg_id, src, dst, round_, shares, [None] * len(shares))
        self.log.messages.append(record)
        block = self._routing.random((len(shares), self.config.counter))
        for share in shares:
            self.in_flight.append((share, ShareStream(block[share.index]), record))
        return shares

    def _round(self, r: int) -> None:
        cfg = self.config
        ctx = self.ctx
        if r > 0 and cfg.election_period and r % cfg.election_period == 0:
            ctx.specials = elect_all(ctx.topology, ctx.specials)
            self.log.elections.record(ctx.specials)
            self.log.special_history.append(frozenset(ctx.specials.current))
        if r > 0 and cfg.reshuffle_period and r % cfg.reshuffle_period == 0:
            ctx.topology = self._shuffles.apply(ctx.topology, ctx.epoch)
            ctx.epoch += 1
        if self.in_flight:
            still = []
            batch = self.in_flight if self.share_order is None else self.share_order(self.in_flight)
            for share, rng, record in batch:
                step(share, ctx, rng)
                if share.in_flight:
                    still.append((share, rng, record))
                else:
                    record.finished[share.index] = r
            self.in_flight = still
        for src, dst in self._schedule.get(r, ()):
            self.inject_message(src, dst, r)

    def run_all(self) -> RunLog:
        for r in range(self.config.sim_rounds):
            self._round(r)
        for share, _, record in self.in_flight:
            share.status = ShareStatus.DROPPED
            share.drop_reason = "timeout"
            record.finished[share.index] = self.config.sim_rounds
        self.in_flight = []
        return self.log


def simulate_run(config: ScenarioConfig, run: int, trace_hops: bool = False) -> RunLog:
    return Simulation(config, run, trace_hops).run_all()


def run_simulation(config: ScenarioConfig) -> MetricsReport:
    """Run ``config.runs`` independent runs and pool their metrics."""
    report = None
    for run in range(config.runs):
        part = compute_metrics(simulate_run(config, run))
        report = part if report is None else report.merge(part)
        log.debug("run %d: pdr=%s", run, part.pdr)
    return report
