"""Undirected communication graphs and directed-edge indexing.

Nodes are 0-based internally. Text IO (edge lists) is 1-based.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import ConnectivityFailure, InvalidSize

MAX_RETRIES = 1000


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    ``edges`` holds sorted pairs ``(i, j)`` with ``i < j``; ``adjacency[i]`` is
    the sorted neighbor tuple of node ``i``. ``retries`` records how many
    rejected samples a random generator drew before this one.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    adjacency: tuple[tuple[int, ...], ...] = field(repr=False)
    retries: int = field(default=0, compare=False)

    @classmethod
    def from_edges(cls, n, edges, retries=0):
        if n < 1:
            raise InvalidSize(f"graph needs at least one node, got n={n}")
        clean = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i + 1}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i + 1}, {j + 1}) outside 1..{n}")
            clean.add((min(i, j), max(i, j)))
        edges = tuple(sorted(clean))
        nbrs = [[] for _ in range(n)]
        for i, j in edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        adjacency = tuple(tuple(sorted(a)) for a in nbrs)
        return cls(n=n, edges=edges, adjacency=adjacency, retries=retries)

    def neighbors(self, i):
        return self.adjacency[i]

    def degree(self, i):
        return len(self.adjacency[i])

    @property
    def num_edges(self):
        return len(self.edges)

    def directed_index(self):
        return DirectedEdgeIndex.from_graph(self)

    def to_edge_list_text(self):
        """One ``"i j"`` line per undirected edge, 1-based."""
        return "\n".join(f"{i + 1} {j + 1}" for i, j in self.edges)

    @classmethod
    def from_edge_list_text(cls, text, n=None):
        pairs = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"edge list line {lineno}: expected 'i j', got {line!r}")
            i, j = int(parts[0]), int(parts[1])
            if i < 1 or j < 1:
                raise ValueError(f"edge list line {lineno}: nodes are 1-based")
            pairs.append((i - 1, j - 1))
        if n is None:
            n = max((max(p) for p in pairs), default=-1) + 1
        return cls.from_edges(n, pairs)


@dataclass(frozen=True)
class DirectedEdgeIndex:
    """Dense index over ordered pairs ``(i, j)`` for every undirected edge.

    Directed edges are laid out in lexicographic order of ``(i, j)``, so the
    block of node ``i``'s outgoing multipliers is contiguous.
    """

    pairs: tuple[tuple[int, int], ...]
    index: dict
    src: np.ndarray = field(repr=False)
    dst: np.ndarray = field(repr=False)
    reverse: np.ndarray = field(repr=False)

    @classmethod
    def from_graph(cls, g):
        pairs = tuple(sorted([(i, j) for i, j in g.edges] + [(j, i) for i, j in g.edges]))
        index = {p: k for k, p in enumerate(pairs)}
        src = np.array([p[0] for p in pairs], dtype=np.intp)
        dst = np.array([p[1] for p in pairs], dtype=np.intp)
        reverse = np.array([index[(j, i)] for i, j in pairs], dtype=np.intp)
        return cls(pairs=pairs, index=index, src=src, dst=dst, reverse=reverse)

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, pair):
        return self.index[pair]


def is_connected(g):
    """Breadth-first search from node 0 reaches every node."""
    if g.n == 0:
        return False
    seen = [False] * g.n
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in g.adjacency[i]:
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return all(seen)


def erdos_renyi(n, p, seed, max_retries=MAX_RETRIES):
    """Sample a connected G(n, p) graph by rejection.

    Attempt ``k`` draws from ``numpy.random.default_rng([seed, k])``, so the
    output depends only on ``(n, p, seed)``.

    Raises
    ------
    ConnectivityFailure
        No connected sample within ``max_retries`` attempts.
    """
    if n < 2:
        raise InvalidSize(f"erdos_renyi needs n >= 2, got {n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must lie in [0, 1], got {p}")
    iu, ju = np.triu_indices(n, k=1)
    for attempt in range(max_retries):
        rng = np.random.default_rng([int(seed), attempt])
        keep = rng.random(iu.size) < p
        g = Graph.from_edges(n, zip(iu[keep].tolist(), ju[keep].tolist()), retries=attempt)
        if is_connected(g):
            return g
    raise ConnectivityFailure(
        f"no connected G({n}, {p}) sample in {max_retries} attempts (seed={seed}); p is too small"
    )


def complete(n):
    if n < 2:
        raise InvalidSize(f"complete graph needs n >= 2, got {n}")
    return Graph.from_edges(n, combinations(range(n), 2))


def ring(n):
    if n < 3:
        raise InvalidSize(f"ring needs n >= 3, got {n}")
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def path(n):
    if n < 1:
        raise InvalidSize(f"path needs n >= 1, got {n}")
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def single_node():
    return Graph.from_edges(1, [])
