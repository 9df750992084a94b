"""Per-share forwarding policies and the counter-driven hop loop.

Each share first takes up to ``C`` policy-driven hops (the random phase).  If
the counter runs out before delivery the share switches for good to the
minimum-hop route toward its destination.

The two multi-domain policies add a special-node branch: while the share is
outside the destination's domain it jumps onto an adjacent special node, and
special nodes hand it to the special node of the next domain on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .adversary import AdversaryState, on_forward
from .coding import Share, ShareStatus
from .config import RoutingPolicy
from .election import SpecialNodeTable
from .topology import NodeId, Topology, domain_coords

DELIVER = "deliver"
FORWARD = "forward"
DROP = "drop"


@dataclass(frozen=True)
class StepDecision:
    action: str
    next: NodeId | None = None
    reason: str | None = None
    special_link: bool = False

    @classmethod
    def deliver(cls, destination: NodeId) -> "StepDecision":
        return cls(DELIVER, destination)

    @classmethod
    def forward(cls, next_hop: NodeId, special_link: bool = False) -> "StepDecision":
        return cls(FORWARD, int(next_hop), special_link=special_link)

    @classmethod
    def drop(cls, reason: str) -> "StepDecision":
        return cls(DROP, reason=reason)


class NoRoute(Exception):
    """No path exists between the requested endpoints."""


def _untraversed(nbrs: np.ndarray, trace: Sequence[NodeId], num_nodes: int) -> np.ndarray:
    seen = np.zeros(num_nodes, dtype=bool)
    seen[trace] = True
    return nbrs[~seen[nbrs]]


# -- baselines ----------------------------------------------------------------


def prp_step(share: Share, current: NodeId, topology: Topology, rng: np.random.Generator) -> StepDecision:
    """Purely random propagation: uniform pick over one-hop neighbours."""
    nbrs = topology.neighbors(current)
    if len(nbrs) == 0:
        return StepDecision.drop("isolated")
    if topology.is_neighbor(current, share.destination):
        return StepDecision.deliver(share.destination)
    return StepDecision.forward(nbrs[rng.integers(len(nbrs))])


def nrrp_step(share: Share, current: NodeId, topology: Topology, rng: np.random.Generator) -> StepDecision:
    """Non-repetitive random propagation: never re-enter a node on the trace."""
    nbrs = topology.neighbors(current)
    if len(nbrs) == 0:
        return StepDecision.drop("isolated")
    if topology.is_neighbor(current, share.destination):
        return StepDecision.deliver(share.destination)
    cands = _untraversed(nbrs, share.trace, topology.num_nodes)
    if len(cands) == 0:
        return StepDecision.drop("dead-end")
    return StepDecision.forward(cands[rng.integers(len(cands))])


# -- multi-domain ---------------------------------------------------------------


def grid_distance(a: int, b: int, shape: tuple[int, int]) -> int:
    (ra, ca), (rb, cb) = domain_coords(a, shape), domain_coords(b, shape)
    return abs(ra - rb) + abs(ca - cb)


def next_domain(current: int, target: int, shape: tuple[int, int]) -> int:
    """Grid neighbour of ``current`` closest to ``target``; lowest id on ties."""
    rows, cols = shape
    r, c = domain_coords(current, shape)
    options = []
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        rr, cc = r + dr, c + dc
        if 0 <= rr < rows and 0 <= cc < cols:
            d = rr * cols + cc
            options.append((grid_distance(d, target, shape), d))
    return min(options)[1]


def cross_domain(
    share: Share, sp_from: NodeId, specials: SpecialNodeTable, topology: Topology
) -> StepDecision:
    """Hand the share from one special node to the next domain's special node."""
    shape = topology.grid
    src_domain = specials.domain_of_special(sp_from)
    if src_domain is None:
        raise ValueError(f"node {sp_from} is not a current special node")
    target = int(topology.domain[share.destination])
    nxt = next_domain(src_domain, target, shape)
    return StepDecision.forward(specials.special_of(nxt), special_link=True)


def _special_branch(
    share: Share,
    current: NodeId,
    topology: Topology,
    specials: SpecialNodeTable,
    no_revisit: bool,
    strict_links: bool,
) -> StepDecision | None:
    # Returns None when no special-node move applies and the caller should
    # fall back to its neighbour selection rule.
    dst_domain = int(topology.domain[share.destination])
    cur_domain = int(topology.domain[current])
    if cur_domain == dst_domain or not specials.current:
        return None
    shape = topology.grid
    if specials.domain_of_special(current) is not None:
        decision = cross_domain(share, current, specials, topology)
        target = decision.next
        if strict_links and not topology.is_neighbor(current, target):
            return None
        if no_revisit and target in share.trace:
            return None
        return decision
    cur_gap = grid_distance(cur_domain, dst_domain, shape)
    best = None
    for d, sp in enumerate(specials.current):
        if d == dst_domain or not topology.is_neighbor(current, sp):
            continue
        gap = grid_distance(d, dst_domain, shape)
        if gap > cur_gap or (no_revisit and sp in share.trace):
            continue
        if best is None or (gap, sp) < best:
            best = (gap, sp)
    if best is None:
        return None
    return StepDecision.forward(best[1])


def mdron_step(
    share: Share,
    current: NodeId,
    topology: Topology,
    specials: SpecialNodeTable,
    rng: np.random.Generator,
    strict_links: bool = False,
) -> StepDecision:
    """Multi-domain routing with overlap: revisits are allowed."""
    nbrs = topology.neighbors(current)
    if len(nbrs) == 0:
        return StepDecision.drop("isolated")
    if topology.is_neighbor(current, share.destination):
        return StepDecision.deliver(share.destination)
    decision = _special_branch(share, current, topology, specials, False, strict_links)
    if decision is not None:
        return decision
    return StepDecision.forward(nbrs[rng.integers(len(nbrs))])


def mdrwon_step(
    share: Share,
    current: NodeId,
    topology: Topology,
    specials: SpecialNodeTable,
    rng: np.random.Generator,
    strict_links: bool = False,
) -> StepDecision:
    """Multi-domain routing without overlap.

    Outside the destination's domain the untraversed neighbour closest
    (Euclidean) to the current domain's special node is taken, lowest id on
    ties.  Inside the destination's domain no handoff is pending and the pick
    is uniform over untraversed neighbours.
    """
    nbrs = topology.neighbors(current)
    if len(nbrs) == 0:
        return StepDecision.drop("isolated")
    if topology.is_neighbor(current, share.destination):
        return StepDecision.deliver(share.destination)
    decision = _special_branch(share, current, topology, specials, True, strict_links)
    if decision is not None:
        return decision
    cands = _untraversed(nbrs, share.trace, topology.num_nodes)
    if len(cands) == 0:
        return StepDecision.drop("dead-end")
    cur_domain = int(topology.domain[current])
    if specials.current and cur_domain != int(topology.domain[share.destination]):
        anchor = topology.positions[specials.special_of(cur_domain)]
        diff = topology.positions[cands] - anchor
        dist = np.hypot(diff[:, 0], diff[:, 1])
        return StepDecision.forward(cands[int(np.argmin(dist))])
    return StepDecision.forward(cands[rng.integers(len(cands))])


# -- minimum hop ----------------------------------------------------------------


def hop_distances(topology: Topology, target: NodeId, blocked: np.ndarray | None = None) -> np.ndarray:
    """BFS hop counts to ``target`` (-1 where unreachable), skipping ``blocked``."""
    n = topology.num_nodes
    x, y = topology.positions[:, 0], topology.positions[:, 1]
    r2 = topology.range * topology.range
    dist = np.full(n, -1, dtype=np.int64)
    open_ = np.ones(n, dtype=bool) if blocked is None else ~blocked
    dist[target] = 0
    open_[target] = False
    frontier = np.array([target])
    level = 0
    while len(frontier):
        level += 1
        cand = np.flatnonzero(open_)
        if len(cand) == 0:
            break
        # only frontier-to-unvisited distances are needed at each level
        dx = x[frontier][:, None] - x[cand][None, :]
        dy = y[frontier][:, None] - y[cand][None, :]
        frontier = cand[(dx * dx + dy * dy <= r2).any(axis=0)]
        dist[frontier] = level
        open_[frontier] = False
    return dist


def min_hop_route(
    from_: NodeId, to: NodeId, topology: Topology, avoid: Iterable[NodeId] = ()
) -> list[NodeId]:
    """Shortest path in hops, lexicographically smallest among ties.

    Nodes in ``avoid`` (other than the endpoints) are never used as relays.
    Raises :class:`NoRoute` when the endpoints are disconnected.
    """
    if from_ == to:
        raise ValueError("min-hop route needs distinct endpoints")
    blocked = None
    avoid = [v for v in avoid if v != from_ and v != to]
    if avoid:
        blocked = np.zeros(topology.num_nodes, dtype=bool)
        blocked[avoid] = True
    dist = hop_distances(topology, to, blocked)
    if dist[from_] < 0:
        raise NoRoute(f"no route from {from_} to {to}")
    path = [int(from_)]
    node = from_
    while node != to:
        nbrs = topology.neighbors(node)
        # lowest id first among neighbours one hop closer
        node = int(nbrs[dist[nbrs] == dist[node] - 1][0])
        path.append(node)
    return path


# -- hop loop -------------------------------------------------------------------


@dataclass
class RoutingContext:
    """Everything a share needs to take one hop in the current round."""

    policy: RoutingPolicy
    topology: Topology
    specials: SpecialNodeTable
    adversary: AdversaryState
    strict_links: bool = False
    epoch: int = 0
    hop_log: list[tuple] | None = None

    def policy_step(self, share: Share, rng: np.random.Generator) -> StepDecision:
        cur = share.current
        if self.policy is RoutingPolicy.PRP:
            return prp_step(share, cur, self.topology, rng)
        if self.policy is RoutingPolicy.NRRP:
            return nrrp_step(share, cur, self.topology, rng)
        if self.policy is RoutingPolicy.MDRON:
            return mdron_step(share, cur, self.topology, self.specials, rng, self.strict_links)
        return mdrwon_step(share, cur, self.topology, self.specials, rng, self.strict_links)


def _finish(share: Share, status: ShareStatus, reason: str | None = None) -> None:
    share.status = status
    share.drop_reason = reason
    share.route = []


def _plan_route(share: Share, ctx: RoutingContext) -> bool:
    avoid = share.trace if ctx.policy.no_revisit else ()
    try:
        route = min_hop_route(share.current, share.destination, ctx.topology, avoid)
    except NoRoute:
        _finish(share, ShareStatus.DROPPED, "disconnected")
        return False
    share.route = route[1:]
    share.route_base = share.hops
    share.route_len = len(route) - 1
    share.route_epoch = ctx.epoch
    return True


def step(share: Share, ctx: RoutingContext, rng: np.random.Generator) -> Share:
    """Move an in-flight share by exactly one hop (or terminate it)."""
    if not share.in_flight:
        return share
    cur = share.current
    if share.phase == "random" and share.counter > 0:
        decision = ctx.policy_step(share, rng)
        if decision.action == DROP:
            _finish(share, ShareStatus.DROPPED, decision.reason)
            return share
        nxt = decision.next
        counter_before = share.counter
        if decision.action == FORWARD:
            share.counter -= 1
    else:
        if share.phase != "minhop":
            share.phase = "minhop"
            share.route = []
        if not share.route or share.route_epoch != ctx.epoch:
            if not _plan_route(share, ctx):
                return share
        nxt = share.route.pop(0)
        counter_before = share.counter
    if ctx.hop_log is not None:
        ctx.hop_log.append((share.message, share.index, cur, nxt, counter_before, share.phase))
    on_forward(share, nxt, ctx.adversary)
    share.trace.append(nxt)
    if share.status is ShareStatus.INTERCEPTED:
        share.route = []
        return share
    if nxt == share.destination:
        _finish(share, ShareStatus.DELIVERED)
    elif share.phase == "random" and share.counter == 0:
        share.phase = "minhop"
    return share


def advance(
    share: Share,
    ctx: RoutingContext,
    rng: np.random.Generator,
    max_hops: int | None = None,
) -> Share:
    """Step ``share`` until it terminates or ``max_hops`` hops have been taken."""
    taken = 0
    while share.in_flight and (max_hops is None or taken < max_hops):
        step(share, ctx, rng)
        taken += 1
    return share
