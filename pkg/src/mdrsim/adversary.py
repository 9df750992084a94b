"""Node-compromise adversary: a fixed set of captured nodes that swallow shares.

Every share forwarded onto a compromised node is intercepted: it never moves
again, counts as a drop, and its index is added to what the adversary holds
for that message.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .coding import Share, ShareStatus, compromised
from .config import CodingParams, ConfigError
from .election import SpecialNodeTable
from .topology import NodeId, Topology


@dataclass
class AdversaryState:
    compromised: frozenset[NodeId] = frozenset()
    intercepted: dict[int, set[int]] = field(default_factory=lambda: defaultdict(set))

    def holds(self, message: int) -> frozenset[int]:
        return frozenset(self.intercepted.get(message, ()))


def compromised_count(fraction: float, num_nodes: int) -> int:
    # guard against 0.29 * 100 == 28.999999999999996
    return math.floor(fraction * num_nodes + 1e-9)


def compromise_nodes(
    topology: Topology,
    fraction: float,
    specials: SpecialNodeTable,
    rng: np.random.Generator,
    exclude: Iterable[NodeId] = (),
) -> AdversaryState:
    """Capture ``floor(fraction * N)`` nodes uniformly among non-special nodes.

    The draw is a random ordering of the eligible nodes truncated to the
    required count, so two calls sharing an rng state give nested sets for
    increasing fractions.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"compromise fraction outside [0, 1]: {fraction}")
    n = topology.num_nodes
    count = compromised_count(fraction, n)
    limit = n - topology.num_domains - 2
    if count > limit:
        raise ConfigError(
            f"cannot compromise {count} of {n} nodes: at most {limit} leave room "
            f"for {topology.num_domains} special nodes plus a source and destination"
        )
    blocked = set(specials.current) | set(exclude)
    eligible = np.array([v for v in range(n) if v not in blocked], dtype=np.int64)
    if count > len(eligible):
        raise ConfigError(f"only {len(eligible)} eligible nodes for {count} compromises")
    order = rng.permutation(eligible)
    return AdversaryState(compromised=frozenset(int(v) for v in order[:count]))


def on_forward(share: Share, next_hop: NodeId, adversary: AdversaryState) -> Share:
    if next_hop in adversary.compromised:
        share.status = ShareStatus.INTERCEPTED
        adversary.intercepted[share.message].add(share.index)
    return share


def message_compromised(adversary: AdversaryState, msg: int, params: CodingParams) -> bool:
    return compromised(adversary.holds(msg), params)
