"""Directed-graph utilities shared by track construction and network analysis.

Graphs are adjacency mappings node -> iterable of successors.  Multigraphs
(parallel edges, as occur on physical tracks) are passed as explicit edge
lists.  All outputs are deterministically ordered.
"""
from __future__ import annotations

__all__ = [
    "strongly_connected_components",
    "condensation_edges",
    "simple_cycles",
    "count_simple_cycles",
    "CycleCountCapped",
]


class CycleCountCapped(Exception):
    """Internal signal: cycle enumeration hit its cap."""


def strongly_connected_components(adj: dict[str, list[str]]) -> list[list[str]]:
    """Tarjan's algorithm, iterative.

    Returns components as sorted member lists, ordered by smallest member id.
    """
    index: dict[str, int] = {}
    lowlink: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    counter = 0
    components: list[list[str]] = []

    for root in sorted(adj):
        if root in index:
            continue
        work = [(root, iter(sorted(adj.get(root, ()))))]
        index[root] = lowlink[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, succ = work[-1]
            advanced = False
            for w in succ:
                if w not in index:
                    index[w] = lowlink[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(sorted(adj.get(w, ())))))
                    advanced = True
                    break
                elif w in on_stack:
                    lowlink[v] = min(lowlink[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])
            if lowlink[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                components.append(sorted(comp))
    components.sort(key=lambda c: c[0])
    return components


def condensation_edges(
    adj: dict[str, list[str]], components: list[list[str]]
) -> list[tuple[int, int]]:
    """Edges between component indices (acyclic by construction)."""
    comp_of = {}
    for i, comp in enumerate(components):
        for n in comp:
            comp_of[n] = i
    edges = set()
    for u, succs in adj.items():
        for v in succs:
            cu, cv = comp_of[u], comp_of[v]
            if cu != cv:
                edges.add((cu, cv))
    return sorted(edges)


def simple_cycles(
    edges: list[tuple[str, str, str]], cap: int = 10_000
):
    """Enumerate node-simple directed cycles of a multigraph.

    ``edges`` are (src, dst, key) triples; parallel edges with distinct keys
    yield distinct cycles.  Each cycle is reported once, as the tuple of edge
    keys starting from its lexicographically smallest node.  Enumeration stops
    after ``cap`` cycles by raising CycleCountCapped (callers that only count
    catch it).

    Johnson-style search restricted to one root at a time: only nodes >= the
    current root participate, so every cycle is found exactly once at its
    smallest node.
    """
    nodes = sorted({u for u, _, _ in edges} | {v for _, v, _ in edges})
    out_edges: dict[str, list[tuple[str, str]]] = {n: [] for n in nodes}
    for u, v, k in sorted(edges, key=lambda e: (e[0], e[1], e[2])):
        out_edges[u].append((v, k))

    found = 0
    for root in nodes:
        # DFS over paths of nodes >= root, no repeated node except closing at root.
        path_nodes = [root]
        path_keys: list[str] = []
        on_path = {root}
        iters = [iter(out_edges[root])]
        while iters:
            advanced = False
            for v, k in iters[-1]:
                if v == root:
                    found += 1
                    if found > cap:
                        raise CycleCountCapped()
                    yield tuple(path_keys + [k])
                elif v > root and v not in on_path:
                    path_nodes.append(v)
                    path_keys.append(k)
                    on_path.add(v)
                    iters.append(iter(out_edges[v]))
                    advanced = True
                    break
            if not advanced:
                iters.pop()
                on_path.discard(path_nodes.pop())
                if path_keys:
                    path_keys.pop()


def count_simple_cycles(
    edges: list[tuple[str, str, str]], cap: int = 10_000
) -> tuple[int, bool]:
    """Number of node-simple directed cycles, and whether the cap was hit."""
    n = 0
    try:
        for _ in simple_cycles(edges, cap=cap):
            n += 1
    except CycleCountCapped:
        return cap, True
    return n, False


def adjacency_cycles(adj: dict[str, list[str]], cap: int = 10_000) -> tuple[int, bool]:
    """count_simple_cycles for a plain adjacency mapping (no parallel edges)."""
    edges = [(u, v, f"{u}->{v}") for u, succs in adj.items() for v in succs]
    return count_simple_cycles(edges, cap=cap)
