"""Node deployment, domain grid, hello-message neighbour tables and reshuffles.

A :class:`Topology` is treated as immutable: every mutating operation returns
a new instance sharing nothing writable with the old one.  Adjacency is built
lazily on first use, so reshuffles that no share ever observes cost only the
position draw.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .config import ConfigError, ScenarioConfig

NodeId = int
DomainId = int


@dataclass(frozen=True)
class NodeState:
    id: NodeId
    position: tuple[float, float]
    battery: int
    domain: DomainId
    compromised: bool
    neighbors: frozenset[NodeId]


@dataclass(frozen=True)
class DomainState:
    id: DomainId
    cell: tuple[float, float, float, float]  # x0, y0, x1, y1
    members: tuple[NodeId, ...]


def grid_shape(num_domains: int) -> tuple[int, int]:
    """Rows and columns of the domain grid."""
    if num_domains < 2:
        raise ConfigError(f"need at least 2 domains, got {num_domains}")
    if num_domains == 2:
        return 1, 2
    side = math.isqrt(num_domains)
    if side * side != num_domains:
        raise ConfigError(f"domain count must be 2 or a perfect square, got {num_domains}")
    return side, side


def domain_coords(domain: DomainId, shape: tuple[int, int]) -> tuple[int, int]:
    """(row, col) of a domain in the grid; ids run row-major from the origin."""
    return divmod(domain, shape[1])


@dataclass(frozen=True, eq=False)
class Topology:
    area: tuple[float, float]
    range: float
    positions: np.ndarray  # (N, 2) float64
    battery: np.ndarray  # (N,) int64
    domain: np.ndarray  # (N,) int64, -1 before partitioning
    compromised: np.ndarray  # (N,) bool
    grid: tuple[int, int] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        for arr in (self.positions, self.battery, self.domain, self.compromised):
            arr.flags.writeable = False

    @property
    def num_nodes(self) -> int:
        return len(self.positions)

    @property
    def num_domains(self) -> int:
        return 0 if self.grid is None else self.grid[0] * self.grid[1]

    # -- adjacency -------------------------------------------------------

    @property
    def adjacency(self) -> np.ndarray:
        adj = self._cache.get("adj")
        if adj is None:
            adj = _disc_adjacency(self.positions, self.range)
            adj.flags.writeable = False
            self._cache["adj"] = adj
        return adj

    def neighbors(self, v: NodeId) -> np.ndarray:
        """Sorted neighbour ids of ``v`` (cached per topology instance)."""
        nbrs = self._cache.setdefault("nbrs", {})
        out = nbrs.get(v)
        if out is None:
            adj = self._cache.get("adj")
            if adj is not None:
                out = np.flatnonzero(adj[v])
            else:
                # one row of the disc graph; same arithmetic as _disc_adjacency
                xy = self._cache.get("xy")
                if xy is None:
                    xy = self._cache["xy"] = (
                        np.ascontiguousarray(self.positions[:, 0]),
                        np.ascontiguousarray(self.positions[:, 1]),
                        self.range * self.range,
                    )
                x, y, r2 = xy
                dx = x - x[v]
                dy = y - y[v]
                row = dx * dx + dy * dy <= r2
                row[v] = False
                out = row.nonzero()[0]
            nbrs[v] = out
        return out

    def is_neighbor(self, u: NodeId, v: NodeId) -> bool:
        if u == v:
            return False
        adj = self._cache.get("adj")
        if adj is not None:
            return bool(adj[u, v])
        dx = self.positions[u, 0] - self.positions[v, 0]
        dy = self.positions[u, 1] - self.positions[v, 1]
        return bool(dx * dx + dy * dy <= self.range * self.range)

    def distance(self, u: NodeId, v: NodeId) -> float:
        (x0, y0), (x1, y1) = self.positions[u], self.positions[v]
        return math.hypot(x1 - x0, y1 - y0)

    # -- views -----------------------------------------------------------

    def node(self, v: NodeId) -> NodeState:
        x, y = self.positions[v]
        return NodeState(
            id=int(v),
            position=(float(x), float(y)),
            battery=int(self.battery[v]),
            domain=int(self.domain[v]),
            compromised=bool(self.compromised[v]),
            neighbors=frozenset(int(u) for u in self.neighbors(v)),
        )

    @property
    def nodes(self) -> list[NodeState]:
        return [self.node(v) for v in range(self.num_nodes)]

    def members(self, d: DomainId) -> np.ndarray:
        key = ("members", d)
        out = self._cache.get(key)
        if out is None:
            out = np.flatnonzero(self.domain == d)
            self._cache[key] = out
        return out

    def cell(self, d: DomainId) -> tuple[float, float, float, float]:
        if self.grid is None:
            raise ConfigError("topology has not been partitioned into domains")
        rows, cols = self.grid
        r, c = domain_coords(d, self.grid)
        cw, ch = self.area[0] / cols, self.area[1] / rows
        return (c * cw, r * ch, (c + 1) * cw, (r + 1) * ch)

    @property
    def domains(self) -> list[DomainState]:
        return [
            DomainState(d, self.cell(d), tuple(int(v) for v in self.members(d)))
            for d in range(self.num_domains)
        ]

    def evolve(self, **changes) -> "Topology":
        values = dict(
            area=self.area,
            range=self.range,
            positions=self.positions,
            battery=self.battery,
            domain=self.domain,
            compromised=self.compromised,
            grid=self.grid,
        )
        values.update(changes)
        return Topology(**values)

    def with_compromised(self, nodes: Iterable[NodeId]) -> "Topology":
        flags = np.zeros(self.num_nodes, dtype=bool)
        flags[list(nodes)] = True
        topo = self.evolve(compromised=flags)
        topo._cache.update({k: v for k, v in self._cache.items() if k in ("adj", "nbrs") or k[0] == "members"})
        return topo

    def dumps(self) -> str:
        """Canonical line-oriented CSV: id,x,y,battery,domain,compromised."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "x", "y", "battery", "domain", "compromised"])
        for v in range(self.num_nodes):
            x, y = self.positions[v]
            writer.writerow(
                [v, repr(float(x)), repr(float(y)), int(self.battery[v]),
                 int(self.domain[v]), int(self.compromised[v])]
            )
        return buf.getvalue()


def load_topology(text: str, area: tuple[float, float], range_: float, num_domains: int) -> Topology:
    """Inverse of :meth:`Topology.dumps` (domains taken from the file)."""
    rows = list(csv.DictReader(io.StringIO(text)))
    rows.sort(key=lambda r: int(r["id"]))
    return Topology(
        area=(float(area[0]), float(area[1])),
        range=float(range_),
        positions=np.array([[float(r["x"]), float(r["y"])] for r in rows]),
        battery=np.array([int(r["battery"]) for r in rows], dtype=np.int64),
        domain=np.array([int(r["domain"]) for r in rows], dtype=np.int64),
        compromised=np.array([r["compromised"] == "1" for r in rows], dtype=bool),
        grid=grid_shape(num_domains),
    )


def _disc_adjacency(positions: np.ndarray, radius: float) -> np.ndarray:
    x, y = positions[:, 0], positions[:, 1]
    dx = x[:, None] - x[None, :]
    dy = y[:, None] - y[None, :]
    adj = dx * dx + dy * dy <= radius * radius
    np.fill_diagonal(adj, False)
    return adj


def deploy_nodes(config: ScenarioConfig, rng: np.random.Generator) -> Topology:
    """Scatter nodes uniformly, draw batteries, partition and build neighbours."""
    w, h = config.area
    if not (w > 0 and h > 0):
        raise ConfigError("zero-area deployment region")
    if config.num_nodes < 2:
        raise ConfigError(f"need at least 2 nodes to route, got {config.num_nodes}")
    positions = rng.uniform(0.0, 1.0, size=(config.num_nodes, 2)) * np.array([w, h])
    lo, hi = config.battery_range
    battery = rng.integers(lo, hi, size=config.num_nodes, endpoint=True).astype(np.int64)
    topo = Topology(
        area=(w, h),
        range=float(config.range),
        positions=positions,
        battery=battery,
        domain=np.full(config.num_nodes, -1, dtype=np.int64),
        compromised=np.zeros(config.num_nodes, dtype=bool),
    )
    topo = partition_domains(topo, config.num_domains)
    return build_neighbor_tables(topo)


def assign_domains(positions: np.ndarray, area: tuple[float, float], shape: tuple[int, int]) -> np.ndarray:
    rows, cols = shape
    w, h = area
    col = np.minimum((positions[:, 0] / (w / cols)).astype(np.int64), cols - 1)
    row = np.minimum((positions[:, 1] / (h / rows)).astype(np.int64), rows - 1)
    return row * cols + col


def partition_domains(topology: Topology, num_domains: int) -> Topology:
    """Assign each node to the equal-size grid cell containing it.

    Cells are half-open ``[x0, x1) x [y0, y1)`` except along the far edges of
    the area, which are closed.
    """
    shape = grid_shape(num_domains)
    domain = assign_domains(topology.positions, topology.area, shape)
    topo = topology.evolve(domain=domain, grid=shape)
    topo._cache.update({k: v for k, v in topology._cache.items() if k in ("adj", "nbrs")})
    return topo


def build_neighbor_tables(topology: Topology) -> Topology:
    """Hello-message exchange: every node learns all nodes within range."""
    topology.adjacency
    return topology


def _cell_positions(topology: Topology, u: np.ndarray) -> np.ndarray:
    # Map unit-square draws of shape (..., N, 2) into each node's own cell.
    rows, cols = topology.grid
    w, h = topology.area
    cw, ch = w / cols, h / rows
    r, c = np.divmod(topology.domain, cols)
    x = (c + u[..., 0]) * cw
    y = (r + u[..., 1]) * ch
    # Rounding can land a point exactly on the upper edge of a half-open cell.
    x = np.minimum(x, np.nextafter((c + 1) * cw, -np.inf))
    y = np.minimum(y, np.nextafter((r + 1) * ch, -np.inf))
    return np.stack([x, y], axis=-1)


def _relocated(topology: Topology, positions: np.ndarray) -> Topology:
    topo = topology.evolve(positions=positions)
    # membership, batteries and flags are unchanged, so are the per-domain views
    topo._cache.update({k: v for k, v in topology._cache.items() if isinstance(k, tuple)})
    return topo


def reshuffle_positions(topology: Topology, rng: np.random.Generator) -> Topology:
    """Redraw every node uniformly inside its own domain cell."""
    if topology.grid is None:
        raise ConfigError("cannot reshuffle an unpartitioned topology")
    u = rng.uniform(0.0, 1.0, size=(topology.num_nodes, 2))
    return _relocated(topology, _cell_positions(topology, u))


class ReshufflePlan:
    """Pre-draws ``count`` consecutive reshuffles from ``rng`` in one batch.

    ``plan.apply(topology, j)`` equals the ``j``-th of ``count`` successive
    :func:`reshuffle_positions` calls on the same generator.
    """

    def __init__(self, topology: Topology, rng: np.random.Generator, count: int):
        if topology.grid is None:
            raise ConfigError("cannot reshuffle an unpartitioned topology")
        u = rng.uniform(0.0, 1.0, size=(count, topology.num_nodes, 2))
        self.positions = _cell_positions(topology, u)

    def __len__(self) -> int:
        return len(self.positions)

    def apply(self, topology: Topology, j: int) -> Topology:
        return _relocated(topology, np.array(self.positions[j]))


def topology_from_positions(
    positions: Sequence[Sequence[float]],
    area: tuple[float, float] = (100.0, 100.0),
    range_: float = 50.0,
    num_domains: int = 4,
    battery: Sequence[int] | None = None,
) -> Topology:
    """Hand-built topology, mostly for tests and fixtures."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(pos)
    topo = Topology(
        area=(float(area[0]), float(area[1])),
        range=float(range_),
        positions=pos,
        battery=np.asarray(battery if battery is not None else [100] * n, dtype=np.int64),
        domain=np.full(n, -1, dtype=np.int64),
        compromised=np.zeros(n, dtype=bool),
    )
    return build_neighbor_tables(partition_domains(topo, num_domains))
