"""Graph utilities against brute-force oracles."""
import numpy as np

from spl_forge.graphs import (
    condensation_edges,
    count_simple_cycles,
    simple_cycles,
    strongly_connected_components,
)


def random_digraph(rng, n_max=8, p=0.3):
    n = int(rng.integers(1, n_max + 1))
    nodes = [f"n{i}" for i in range(n)]
    adj = {u: [] for u in nodes}
    for u in nodes:
        for v in nodes:
            if rng.random() < p:
                adj[u].append(v)
    return adj


def reachability_oracle(adj):
    """Floyd-Warshall style transitive closure."""
    nodes = sorted(adj)
    idx = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    reach = [[False] * n for _ in range(n)]
    for u in nodes:
        for v in adj[u]:
            reach[idx[u]][idx[v]] = True
    for k in range(n):
        for i in range(n):
            if reach[i][k]:
                for j in range(n):
                    if reach[k][j]:
                        reach[i][j] = True
    return nodes, idx, reach


def scc_oracle(adj):
    """Mutual-reachability partition (u ~ v iff u reaches v and v reaches u)."""
    nodes, idx, reach = reachability_oracle(adj)
    comps = []
    assigned = set()
    for u in nodes:
        if u in assigned:
            continue
        comp = [
            v for v in nodes
            if v == u
            or (reach[idx[u]][idx[v]] and reach[idx[v]][idx[u]])
        ]
        comps.append(sorted(comp))
        assigned.update(comp)
    return sorted(comps)


def cycle_oracle(edges, cap=100000):
    """Exhaustive DFS enumeration of node-simple directed cycles, counted once
    (anchored at their smallest node)."""
    nodes = sorted({u for u, _, _ in edges} | {v for _, v, _ in edges})
    out = {u: [] for u in nodes}
    for u, v, k in edges:
        out[u].append((v, k))
    count = 0

    def dfs(root, node, visited, keys):
        nonlocal count
        for v, k in out[node]:
            if v == root:
                count += 1
            elif v > root and v not in visited:
                dfs(root, v, visited | {v}, keys + [k])

    for root in nodes:
        dfs(root, root, {root}, [])
    return count


def test_scc_matches_reachability_oracle_on_1000_graphs():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        adj = random_digraph(rng)
        got = sorted(strongly_connected_components(adj))
        assert got == scc_oracle(adj)


def test_scc_component_order_is_by_smallest_member():
    adj = {"b": ["a"], "a": ["b"], "z": [], "c": ["c"]}
    comps = strongly_connected_components(adj)
    assert comps == [["a", "b"], ["c"], ["z"]]


def test_condensation_is_acyclic():
    rng = np.random.default_rng(99)
    for _ in range(200):
        adj = random_digraph(rng)
        comps = strongly_connected_components(adj)
        edges = condensation_edges(adj, comps)
        # acyclic: repeatedly strip sinks
        nodes = set(range(len(comps)))
        remaining = set(edges)
        while nodes:
            sinks = {n for n in nodes if not any(u == n for u, _ in remaining)}
            assert sinks, "condensation contains a cycle"
            nodes -= sinks
            remaining = {(u, v) for u, v in remaining if v not in sinks}


def test_cycle_count_matches_dfs_oracle():
    rng = np.random.default_rng(55)
    for _ in range(300):
        n = int(rng.integers(1, 6))
        nodes = [f"n{i}" for i in range(n)]
        edges = []
        eid = 0
        for u in nodes:
            for v in nodes:
                for _dup in range(int(rng.random() < 0.25) + int(rng.random() < 0.05)):
                    edges.append((u, v, f"e{eid}"))
                    eid += 1
        got, capped = count_simple_cycles(edges, cap=100000)
        assert not capped
        assert got == cycle_oracle(edges)


def test_cycle_enumeration_is_deterministic_and_capped():
    edges = [("a", "b", "e1"), ("b", "a", "e2"), ("a", "a", "e3"), ("b", "b", "e4")]
    found = list(simple_cycles(edges))
    assert found == list(simple_cycles(edges))
    assert len(found) == 3  # self-loops at a and b plus the 2-cycle
    n, capped = count_simple_cycles(edges, cap=2)
    assert capped and n == 2
