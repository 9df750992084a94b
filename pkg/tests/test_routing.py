import itertools
from collections import Counter, deque

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.sparse.csgraph import floyd_warshall

from mdrsim.adversary import AdversaryState
from mdrsim.coding import Share, ShareStatus
from mdrsim.config import RoutingPolicy, ScenarioConfig
from mdrsim.election import SpecialNodeTable, elect_all
from mdrsim.routing import (
    DELIVER,
    DROP,
    FORWARD,
    NoRoute,
    RoutingContext,
    advance,
    cross_domain,
    grid_distance,
    mdron_step,
    mdrwon_step,
    min_hop_route,
    next_domain,
    nrrp_step,
    prp_step,
    step,
)
from mdrsim.topology import deploy_nodes, domain_coords, topology_from_positions


def share(src, dst, counter=10, trace=None):
    s = Share(0, 0, src, dst, counter)
    if trace:
        s.trace = list(trace)
    return s


def ctx_for(topo, policy, specials=None, compromised=()):
    return RoutingContext(
        policy=RoutingPolicy.parse(policy),
        topology=topo,
        specials=specials or SpecialNodeTable(),
        adversary=AdversaryState(compromised=frozenset(compromised)),
    )


def path_graph(n, gap=10.0):
    return topology_from_positions([[1 + i * gap, 1] for i in range(n)], area=(n * gap + 2, 10), range_=gap)


# a hub 0 at the centre with four spokes 1..4 and a far destination 5 off spoke 1
STAR = [[50, 50], [50, 60], [60, 50], [50, 40], [40, 50], [50, 75]]


def test_prp_delivers_when_adjacent():
    topo = path_graph(3)
    d = prp_step(share(0, 1), 0, topo, np.random.default_rng(0))
    assert d.action == DELIVER and d.next == 1


def test_prp_single_neighbour():
    topo = path_graph(3)
    d = prp_step(share(0, 2), 0, topo, np.random.default_rng(0))
    assert d.action == FORWARD and d.next == 1


def test_isolated_drop():
    topo = topology_from_positions([[1, 1], [90, 90]], range_=10)
    for fn in (prp_step, nrrp_step):
        assert fn(share(0, 1), 0, topo, np.random.default_rng(0)).reason == "isolated"


def test_prp_uniform_pick():
    topo = topology_from_positions(STAR, range_=10.5)
    assert sorted(topo.neighbors(0).tolist()) == [1, 2, 3, 4]
    rng = np.random.default_rng(123)
    counts = Counter(prp_step(share(0, 5), 0, topo, rng).next for _ in range(100_000))
    assert set(counts) == {1, 2, 3, 4}
    assert stats.chisquare([counts[v] for v in (1, 2, 3, 4)]).pvalue > 0.01


def test_nrrp_dead_end_and_forced_pick():
    topo = topology_from_positions(STAR, range_=10.5)
    d = nrrp_step(share(0, 5, trace=[1, 2, 3, 4, 0]), 0, topo, np.random.default_rng(0))
    assert d.action == DROP and d.reason == "dead-end"
    rng = np.random.default_rng(0)
    for _ in range(50):
        d = nrrp_step(share(0, 5, trace=[1, 2, 3, 0]), 0, topo, rng)
        assert d.next == 4


def test_nrrp_path_graph_never_revisits():
    # node 8 is far away, so every walk ends in a dead end
    topo = topology_from_positions([[1 + 10 * i, 1] for i in range(8)] + [[99, 99]], range_=10)
    rng = np.random.default_rng(5)
    for _ in range(10_000):
        start = int(rng.integers(0, 8))
        s = share(start, 8)
        cur = start
        while True:
            d = nrrp_step(s, cur, topo, rng)
            if d.action != FORWARD:
                break
            s.trace.append(d.next)
            cur = d.next
        assert len(set(s.trace)) == len(s.trace)


def four_domain_field():
    # one node per quadrant, plus relays; range covers only the neighbours shown
    pos = [
        [10, 10],  # 0 domain 0 (special)
        [40, 40],  # 1 domain 0
        [60, 40],  # 2 domain 1 (special)
        [40, 60],  # 3 domain 2 (special)
        [90, 90],  # 4 domain 3 (special)
        [60, 60],  # 5 domain 3
    ]
    topo = topology_from_positions(pos, range_=30)
    specials = SpecialNodeTable(current=(0, 2, 3, 4), history=((0,), (2,), (3,), (4,)))
    return topo, specials


def test_branch_order_destination_first():
    topo, specials = four_domain_field()
    # node 1 sees special 2 and the destination 5
    assert topo.is_neighbor(1, 2) and topo.is_neighbor(1, 5)
    rng = np.random.default_rng(0)
    for fn in (mdron_step, mdrwon_step):
        assert fn(share(1, 5), 1, topo, specials, rng).action == DELIVER
    assert prp_step(share(1, 5), 1, topo, rng).action == DELIVER
    assert nrrp_step(share(1, 5), 1, topo, rng).action == DELIVER


def test_special_neighbour_taken():
    topo, specials = four_domain_field()
    # 1 -> 4 (domain 3): specials 2 and 3 are adjacent, both one grid step from 3
    d = mdron_step(share(1, 4), 1, topo, specials, np.random.default_rng(0))
    assert d.action == FORWARD and d.next == 2
    d = mdrwon_step(share(1, 4, trace=[2, 1]), 1, topo, specials, np.random.default_rng(0))
    assert d.next == 3


def test_special_hands_off_across_domains():
    topo, specials = four_domain_field()
    d = mdron_step(share(2, 0), 2, topo, specials, np.random.default_rng(0))
    assert d.special_link and d.next == 0
    d = cross_domain(share(3, 4), 3, specials, topo)
    assert d.next == 4 and d.special_link


def test_cross_domain_two_domains():
    topo = topology_from_positions([[10, 10], [90, 10], [80, 20]], num_domains=2, range_=5)
    specials = SpecialNodeTable(current=(0, 1), history=((0,), (1,)))
    assert cross_domain(share(0, 2), 0, specials, topo).next == 1


def bfs_grid_distance(a, b, shape):
    rows, cols = shape
    seen = {a: 0}
    q = deque([a])
    while q:
        u = q.popleft()
        r, c = domain_coords(u, shape)
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < rows and 0 <= cc < cols and rr * cols + cc not in seen:
                seen[rr * cols + cc] = seen[u] + 1
                q.append(rr * cols + cc)
    return seen[b]


@pytest.mark.parametrize("shape", [(1, 2), (2, 2), (3, 3), (4, 4)])
def test_next_domain_against_grid_bfs(shape):
    n = shape[0] * shape[1]
    for a, b in itertools.permutations(range(n), 2):
        nxt = next_domain(a, b, shape)
        assert grid_distance(a, b, shape) == bfs_grid_distance(a, b, shape)
        assert bfs_grid_distance(a, nxt, shape) == 1
        assert bfs_grid_distance(nxt, b, shape) == bfs_grid_distance(a, b, shape) - 1
        best = [d for d in range(n) if bfs_grid_distance(a, d, shape) == 1
                and bfs_grid_distance(d, b, shape) == bfs_grid_distance(a, b, shape) - 1]
        assert nxt == min(best)


def test_diagonal_destination():
    assert next_domain(0, 3, (2, 2)) == 1
    assert next_domain(3, 0, (2, 2)) == 1


def test_mdrwon_nearest_to_special():
    # current node 1 in domain 0; special 0; untraversed neighbours 2 (closer to 0) and 3
    pos = [[5, 5], [20, 20], [12, 20], [28, 20], [90, 90], [60, 60], [95, 5], [5, 95], [95, 95]]
    topo = topology_from_positions(pos, range_=9)
    specials = SpecialNodeTable(current=(0, 6, 7, 8), history=((),) * 4)
    assert sorted(topo.neighbors(1).tolist()) == [2, 3]
    d = mdrwon_step(share(1, 4), 1, topo, specials, np.random.default_rng(0))
    assert d.next == 2
    d = mdrwon_step(share(1, 4, trace=[2, 1]), 1, topo, specials, np.random.default_rng(0))
    assert d.next == 3
    d = mdrwon_step(share(1, 4, trace=[2, 3, 1]), 1, topo, specials, np.random.default_rng(0))
    assert d.action == DROP and d.reason == "dead-end"


def test_mdron_uniform_without_special():
    topo = topology_from_positions(STAR + [[5, 5], [95, 5], [5, 95], [95, 95]], range_=10.5)
    specials = SpecialNodeTable(current=(6, 7, 8, 9), history=((),) * 4)
    rng = np.random.default_rng(3)
    counts = Counter(mdron_step(share(0, 9), 0, topo, specials, rng).next for _ in range(40_000))
    assert set(counts) == {1, 2, 3, 4}
    assert stats.chisquare(list(counts.values())).pvalue > 0.01


def test_mdron_revisits_on_cycle():
    # a ring of eight nodes, all in one domain, destination unreachable in the random phase
    ang = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    ring = np.c_[25 + 10 * np.cos(ang), 25 + 10 * np.sin(ang)]
    pos = np.vstack([ring, [[95, 95], [95, 5], [5, 95]]])
    topo = topology_from_positions(pos, range_=8)
    specials = SpecialNodeTable(current=(0, 9, 10, 8), history=((),) * 4)
    looped = 0
    for seed in range(200):
        s = share(0, 4, counter=6)
        ctx = ctx_for(topo, "MDRON", specials)
        rng = np.random.default_rng(seed)
        for _ in range(6):
            if not s.in_flight or s.phase != "random":
                break
            step(s, ctx, rng)
        looped += len(set(s.trace)) != len(s.trace)
    assert looped > 0


def test_min_hop_examples():
    topo = path_graph(3)
    assert min_hop_route(0, 2, topo) == [0, 1, 2]
    topo = topology_from_positions([[1, 1], [90, 90]], range_=10)
    with pytest.raises(NoRoute):
        min_hop_route(0, 1, topo)


def test_min_hop_disconnected_drops_share():
    topo = topology_from_positions([[1, 1], [90, 90]], range_=10)
    s = share(0, 1, counter=0)
    step(s, ctx_for(topo, "PRP"), np.random.default_rng(0))
    assert s.status is ShareStatus.DROPPED and s.drop_reason == "disconnected"


def random_graphs(count, n=50):
    rng = np.random.default_rng(2)
    for _ in range(count):
        pos = rng.uniform(0, 100, size=(n, 2))
        yield topology_from_positions(pos, range_=float(rng.uniform(18, 35)))


def test_min_hop_against_floyd_warshall():
    for topo in random_graphs(100):
        dist = floyd_warshall(topo.adjacency.astype(float), unweighted=True)
        for a in range(0, 50, 7):
            for b in range(50):
                if a == b:
                    continue
                if np.isinf(dist[a, b]):
                    with pytest.raises(NoRoute):
                        min_hop_route(a, b, topo)
                else:
                    path = min_hop_route(a, b, topo)
                    assert len(path) - 1 == dist[a, b]
                    assert all(topo.is_neighbor(u, v) for u, v in zip(path, path[1:]))


def test_min_hop_lexicographic():
    for topo in itertools.islice(random_graphs(20), 20):
        g = nx.from_numpy_array(topo.adjacency.astype(int))
        for a, b in [(0, 49), (3, 17), (10, 40)]:
            if not nx.has_path(g, a, b):
                continue
            expected = min(nx.all_shortest_paths(g, a, b))
            assert min_hop_route(a, b, topo) == expected


def test_min_hop_avoids_trace():
    # square 0-1-3 and 0-2-3; avoiding 1 forces the other side
    topo = topology_from_positions([[10, 10], [20, 10], [10, 20], [20, 20]], range_=10)
    assert min_hop_route(0, 3, topo) == [0, 1, 3]
    assert min_hop_route(0, 3, topo, avoid=[1]) == [0, 2, 3]


def test_counter_zero_is_pure_min_hop():
    topo = path_graph(6)
    s = share(0, 5, counter=0)
    advance(s, ctx_for(topo, "PRP"), np.random.default_rng(0))
    assert s.trace == [0, 1, 2, 3, 4, 5] and s.status is ShareStatus.DELIVERED


def test_delivery_in_random_phase_keeps_counter():
    topo = path_graph(3)
    s = share(0, 1, counter=10)
    advance(s, ctx_for(topo, "PRP"), np.random.default_rng(0))
    assert s.status is ShareStatus.DELIVERED and s.counter == 10 and s.trace == [0, 1]


def test_intercept_is_sticky():
    topo = path_graph(4)
    s = share(0, 3, counter=0)
    ctx = ctx_for(topo, "PRP", compromised={2})
    advance(s, ctx, np.random.default_rng(0))
    assert s.status is ShareStatus.INTERCEPTED and s.trace == [0, 1, 2]
    advance(s, ctx, np.random.default_rng(0))
    assert s.trace == [0, 1, 2]
    assert ctx.adversary.holds(0) == {0}


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    policy=st.sampled_from(list(RoutingPolicy)),
    counter=st.integers(0, 12),
)
def test_counter_and_hop_bound(seed, policy, counter):
    cfg = ScenarioConfig(num_nodes=80, range=25.0)
    rng = np.random.default_rng(seed)
    topo = deploy_nodes(cfg, rng)
    specials = elect_all(topo, SpecialNodeTable.empty(4))
    ctx = ctx_for(topo, policy, specials)
    src, dst = (int(v) for v in rng.choice(80, size=2, replace=False))
    s = share(src, dst, counter=counter)
    counters = [s.counter]
    while s.in_flight:
        step(s, ctx, rng)
        counters.append(s.counter)
    assert all(b in (a, a - 1) for a, b in zip(counters, counters[1:]))
    random_hops = counter - s.counter
    assert random_hops <= counter
    if s.status is ShareStatus.DELIVERED:
        if s.phase == "minhop":
            assert s.hops == s.route_base + s.route_len <= counter + s.route_len
        else:
            assert s.hops <= counter
    if policy.no_revisit:
        assert len(set(s.trace)) == len(s.trace)
    for u, v in zip(s.trace, s.trace[1:]):
        assert topo.is_neighbor(u, v) or (policy.multi_domain and {u, v} <= set(specials.current))


def test_step_is_deterministic():
    cfg = ScenarioConfig(num_nodes=120)
    topo = deploy_nodes(cfg, np.random.default_rng(1))
    specials = elect_all(topo, SpecialNodeTable.empty(4))
    for policy in RoutingPolicy:
        traces = []
        for _ in range(2):
            s = share(0, 119, counter=10)
            advance(s, ctx_for(topo, policy, specials), np.random.default_rng(77))
            traces.append(s.trace)
        assert traces[0] == traces[1]
