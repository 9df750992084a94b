"""Special node election: the strongest battery in each domain wins.

A per-domain history keeps recent winners out of the next elections; once
every candidate has served, the history starts over.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .topology import NodeId, NodeState, Topology


class ElectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpecialNodeTable:
    current: tuple[NodeId, ...] = ()
    history: tuple[tuple[NodeId, ...], ...] = ()

    @classmethod
    def empty(cls, num_domains: int) -> "SpecialNodeTable":
        return cls(current=(), history=((),) * num_domains)

    @property
    def specials(self) -> frozenset[NodeId]:
        return frozenset(self.current)

    def special_of(self, domain: int) -> NodeId:
        return self.current[domain]

    def domain_of_special(self, node: NodeId) -> int | None:
        try:
            return self.current.index(node)
        except ValueError:
            return None


def elect_special_node(domain_members: Sequence[NodeState], history: Iterable[NodeId]) -> NodeId:
    """Id of the highest-battery member not in ``history``, lowest id on ties.

    If every member is already in the history it is ignored for this call.
    """
    if not domain_members:
        raise ElectionError("cannot elect a special node in an empty domain")
    seen = set(history)
    candidates = [m for m in domain_members if m.id not in seen] or list(domain_members)
    best = candidates[0]
    for m in candidates[1:]:
        if m.battery > best.battery or (m.battery == best.battery and m.id < best.id):
            best = m
    return best.id


def candidate_order(topology: Topology, domain: int) -> list[NodeId]:
    """Uncompromised members of ``domain`` by descending battery, then id."""
    key = ("candidates", domain)
    order = topology._cache.get(key)
    if order is None:
        members = topology.members(domain)
        members = members[~topology.compromised[members]]
        bat = topology.battery[members]
        order = [int(v) for v in members[np.lexsort((members, -bat))]]
        topology._cache[key] = order
    return order


def elect_all(topology: Topology, table: SpecialNodeTable) -> SpecialNodeTable:
    """Run one election round in every domain.

    Compromised nodes are not eligible candidates, so a special node is never
    under adversary control.
    """
    num_domains = topology.num_domains
    history = table.history if len(table.history) == num_domains else ((),) * num_domains
    current: list[NodeId] = []
    new_history: list[tuple[NodeId, ...]] = []
    for d in range(num_domains):
        order = candidate_order(topology, d)
        if not order:
            raise ElectionError(f"domain {d} has no uncompromised member to elect")
        used = set(history[d])
        winner = next((v for v in order if v not in used), None)
        if winner is None:
            winner = order[0]
            new_history.append((winner,))
        else:
            new_history.append(history[d] + (winner,))
        current.append(winner)
    return SpecialNodeTable(current=tuple(current), history=tuple(new_history))


@dataclass
class ElectionTrace:
    """Rows of (iteration, domain, special_node); iterations and domains 1-based."""

    rows: list[tuple[int, int, NodeId]] = field(default_factory=list)

    def record(self, table: SpecialNodeTable) -> None:
        iteration = 1 + (self.rows[-1][0] if self.rows else 0)
        for d, node in enumerate(table.current):
            self.rows.append((iteration, d + 1, node))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "domain", "special_node"])
        writer.writerows(self.rows)
        return buf.getvalue()
