"""
Undirected tree interaction graphs.

Agents are numbered 1..N and edges 1..M in the public API; arrays returned by
this module are 0-indexed. Each edge keeps the (head, tail) orientation it was
given at construction.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicateEdge, HasCycle, NotConnected, NotUnit, SelfLoop
from .so3 import I3


@dataclass(frozen=True)
class TreeTopology:
    n_agents: int
    edges: tuple
    heads: np.ndarray = field(repr=False, compare=False)
    tails: np.ndarray = field(repr=False, compare=False)

    @property
    def n_edges(self):
        return len(self.edges)

    def head_edges(self, agent):
        """Edge ids (1-based) where `agent` is the head."""
        return [k + 1 for k, (h, _) in enumerate(self.edges) if h == agent]

    def tail_edges(self, agent):
        """Edge ids (1-based) where `agent` is the tail."""
        return [k + 1 for k, (_, t) in enumerate(self.edges) if t == agent]

    def neighbors(self, agent):
        out = []
        for h, t in self.edges:
            if h == agent:
                out.append(t)
            elif t == agent:
                out.append(h)
        return sorted(out)

    def to_dict(self):
        return {"agents": self.n_agents, "edges": [list(e) for e in self.edges]}


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def validate_tree(n_agents, edge_list):
    """
    Build a :class:`TreeTopology` from 1-based ``(head, tail)`` pairs.

    Raises
    ------
    SelfLoop, DuplicateEdge, HasCycle, NotConnected
    """
    n_agents = int(n_agents)
    if n_agents < 1:
        raise NotConnected("a graph needs at least one agent")
    edges = []
    seen = set()
    uf = _UnionFind(n_agents)
    for k, pair in enumerate(edge_list, start=1):
        head, tail = (int(x) for x in pair)
        for a in (head, tail):
            if not 1 <= a <= n_agents:
                raise NotConnected(f"edge {k} ({head}, {tail}) references unknown agent {a}")
        if head == tail:
            raise SelfLoop(f"edge {k} ({head}, {tail}) is a self-loop")
        key = frozenset((head, tail))
        if key in seen:
            raise DuplicateEdge(f"edge {k} ({head}, {tail}) duplicates an earlier edge")
        seen.add(key)
        if not uf.union(head - 1, tail - 1):
            raise HasCycle(f"edge {k} ({head}, {tail}) closes a cycle")
        edges.append((head, tail))
    roots = {uf.find(i) for i in range(n_agents)}
    if len(roots) != 1:
        raise NotConnected(f"graph has {len(roots)} connected components")
    heads = np.array([h - 1 for h, _ in edges], dtype=np.intp)
    tails = np.array([t - 1 for _, t in edges], dtype=np.intp)
    return TreeTopology(n_agents, tuple(edges), heads, tails)


def path_graph(n_agents):
    """Path 1-2-...-N with every edge oriented from the lower id to the higher."""
    return validate_tree(n_agents, [(i, i + 1) for i in range(1, n_agents)])


def random_tree(n_agents, rng):
    """Random labelled tree with random edge orientations (random attachment)."""
    order = rng.permutation(n_agents) + 1
    edges = []
    for idx in range(1, n_agents):
        a = int(order[idx])
        b = int(order[rng.integers(idx)])
        edges.append((a, b) if rng.random() < 0.5 else (b, a))
    rng.shuffle(edges)
    return validate_tree(n_agents, edges)


def incidence_matrix(t):
    """N x M incidence matrix: +1 at heads, -1 at tails."""
    H = np.zeros((t.n_agents, t.n_edges))
    cols = np.arange(t.n_edges)
    H[t.heads, cols] = 1.0
    H[t.tails, cols] = -1.0
    return H


def laplacian(t):
    H = incidence_matrix(t)
    return H @ H.T


def block_h_bar(t, rel):
    """
    3N x 3M matrix with block (i, k) equal to ``I`` if agent i heads edge k,
    ``-rel[k]`` if it is the tail, and zero otherwise.
    """
    rel = np.asarray(rel, dtype=float)
    if rel.shape != (t.n_edges, 3, 3):
        raise ValueError(f"expected {t.n_edges} edge rotations, got shape {rel.shape}")
    Hb = np.zeros((3 * t.n_agents, 3 * t.n_edges))
    for k in range(t.n_edges):
        i, j = t.heads[k], t.tails[k]
        Hb[3 * i : 3 * i + 3, 3 * k : 3 * k + 3] = I3
        Hb[3 * j : 3 * j + 3, 3 * k : 3 * k + 3] = -rel[k]
    return Hb


def bearing_laplacian(t, bearings, tol=1e-9):
    """
    ``(H kron I3) diag(P_b) (H kron I3)^T`` for unit per-edge bearings.

    Raises :class:`NotUnit` if any bearing is off the unit sphere by more than `tol`.
    """
    b = np.asarray(bearings, dtype=float).reshape(t.n_edges, 3)
    norms = np.linalg.norm(b, axis=1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise NotUnit("bearings must be unit vectors")
    P = I3 - b[:, :, None] * b[:, None, :]
    LB = np.zeros((3 * t.n_agents, 3 * t.n_agents))
    for k in range(t.n_edges):
        i, j = 3 * t.heads[k], 3 * t.tails[k]
        LB[i : i + 3, i : i + 3] += P[k]
        LB[j : j + 3, j : j + 3] += P[k]
        LB[i : i + 3, j : j + 3] -= P[k]
        LB[j : j + 3, i : i + 3] -= P[k]
    return LB
