"""Threshold share splitting.

Messages are cut into ``n`` erasure-coded shares, any ``k`` of which rebuild
the message.  Payload bits are never simulated: only which share indices end
up where matters, so reconstruction reduces to counting distinct indices.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Collection

from .config import CodingParams, ConfigError
from .topology import NodeId

MessageId = int


class ShareStatus(str, enum.Enum):
    IN_FLIGHT = "in-flight"
    DELIVERED = "delivered"
    DROPPED = "dropped"
    INTERCEPTED = "intercepted"


@dataclass
class Share:
    message: MessageId
    index: int
    source: NodeId
    destination: NodeId
    counter: int
    trace: list[NodeId] = field(default_factory=list)
    status: ShareStatus = ShareStatus.IN_FLIGHT
    drop_reason: str | None = None
    phase: str = "random"
    route: list[NodeId] = field(default_factory=list)
    # hops taken before the current min-hop route was planned, and its length
    route_base: int = 0
    route_len: int = 0
    route_epoch: int = -1

    def __post_init__(self) -> None:
        if not self.trace:
            self.trace = [self.source]

    @property
    def current(self) -> NodeId:
        return self.trace[-1]

    @property
    def hops(self) -> int:
        return len(self.trace) - 1

    @property
    def in_flight(self) -> bool:
        return self.status is ShareStatus.IN_FLIGHT


def lbc_split(
    message: MessageId, src: NodeId, dst: NodeId, params: CodingParams, counter: int
) -> list[Share]:
    if params.k > params.n:
        raise ConfigError(f"threshold k={params.k} exceeds share count n={params.n}")
    if counter < 0:
        raise ConfigError(f"counter must be >= 0, got {counter}")
    return [Share(message, i, src, dst, counter) for i in range(params.n)]


def _check_indices(indices: Collection[int], params: CodingParams) -> None:
    bad = [i for i in indices if not 0 <= i < params.n]
    if bad:
        raise ValueError(f"share indices {bad} outside [0, {params.n})")


def reconstructable(delivered_indices: Collection[int], params: CodingParams) -> bool:
    _check_indices(delivered_indices, params)
    return len(set(delivered_indices)) >= params.k


def compromised(intercepted_indices: Collection[int], params: CodingParams) -> bool:
    """True when the adversary holds enough shares to decode the message."""
    _check_indices(intercepted_indices, params)
    return len(set(intercepted_indices)) >= params.k
