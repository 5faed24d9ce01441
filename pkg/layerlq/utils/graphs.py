from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Tuple

import numpy as np

from layerlq.errors import GraphError

Edge = Tuple[int, int, float]

HEADER_RE = re.compile(r"^nodes\s+(\d+)\s+undirected\s+(true|false)\s*$", re.I)


# ------------------------------------------------------------------------------
# Types
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class Graph:
    """Weighted, possibly signed graph stored as an edge list.

    Undirected graphs list both orientations of every edge; the constructor
    checks that the edge set is closed under (i, j, w) <-> (j, i, w).
    """

    node_count: int
    edges: Tuple[Edge, ...] = ()
    undirected: bool = True

    def __post_init__(self):
        if not isinstance(self.node_count, (int, np.integer)) or self.node_count < 1:
            raise GraphError(f"node_count must be a positive integer, got {self.node_count!r}")
        edges = tuple((int(t), int(h), float(w)) for t, h, w in self.edges)
        object.__setattr__(self, "edges", edges)

        seen: dict[tuple[int, int], float] = {}
        for t, h, w in edges:
            if not (0 <= t < self.node_count and 0 <= h < self.node_count):
                raise GraphError(f"edge ({t}, {h}) outside [0, {self.node_count})")
            if t == h:
                raise GraphError(f"self-loop at node {t}")
            if not math.isfinite(w) or w == 0.0:
                raise GraphError(f"edge ({t}, {h}) has invalid weight {w}")
            if (t, h) in seen:
                raise GraphError(f"duplicate edge ({t}, {h})")
            seen[(t, h)] = w

        if self.undirected:
            for (t, h), w in seen.items():
                if seen.get((h, t)) != w:
                    raise GraphError(f"undirected graph missing reverse edge ({h}, {t}, {w})")

    @classmethod
    def undirected_from_pairs(cls, node_count: int, pairs: Iterable[Edge]) -> "Graph":
        """Build an undirected graph from one orientation per edge."""
        edges: list[Edge] = []
        for t, h, w in pairs:
            edges.append((t, h, w))
            edges.append((h, t, w))
        return cls(node_count, tuple(edges), undirected=True)


@dataclass(frozen=True)
class GraphMatrices:
    adjacency: np.ndarray
    degree: np.ndarray
    laplacian: np.ndarray


# ------------------------------------------------------------------------------
# Matrices and products
# ------------------------------------------------------------------------------
def adjacency_of(g: Graph) -> np.ndarray:
    a = np.zeros((g.node_count, g.node_count))
    for t, h, w in g.edges:
        a[t, h] = w
    return a


def matrices_of(g: Graph) -> GraphMatrices:
    """Adjacency, degree and Laplacian L = D - A.

    Degree is the algebraic row sum, so negative (signed) edges reduce the
    degree and every Laplacian row still sums to zero.
    """
    a = adjacency_of(g)
    d = np.diag(a.sum(axis=1))
    return GraphMatrices(adjacency=a, degree=d, laplacian=d - a)


def laplacian_of(g: Graph) -> np.ndarray:
    return matrices_of(g).laplacian


def cartesian_product(g1: Graph, g2: Graph) -> Graph:
    """Cartesian product g1 □ g2; node (v1, v2) has flat index v1 * n2 + v2."""
    n1, n2 = g1.node_count, g2.node_count
    edges: list[Edge] = []
    # one coordinate moves along a factor edge, the other is held fixed
    for t, h, w in g1.edges:
        for v2 in range(n2):
            edges.append((t * n2 + v2, h * n2 + v2, w))
    for t, h, w in g2.edges:
        for v1 in range(n1):
            edges.append((v1 * n2 + t, v1 * n2 + h, w))
    return Graph(n1 * n2, tuple(edges), undirected=g1.undirected and g2.undirected)


def cartesian_product_many(graphs: Iterable[Graph]) -> Graph:
    graphs = list(graphs)
    if not graphs:
        raise GraphError("cartesian product of an empty graph list")
    out = graphs[0]
    for g in graphs[1:]:
        out = cartesian_product(out, g)
    return out


def from_adjacency(a: np.ndarray, undirected: bool | None = None) -> Graph:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphError(f"adjacency must be square, got shape {a.shape}")
    if np.any(np.diag(a) != 0):
        raise GraphError("adjacency has nonzero diagonal (self-loop)")
    if undirected is None:
        undirected = bool(np.array_equal(a, a.T))
    rows, cols = np.nonzero(a)
    edges = tuple((int(i), int(j), float(a[i, j])) for i, j in zip(rows, cols))
    return Graph(a.shape[0], edges, undirected=undirected)


# ------------------------------------------------------------------------------
# Edge-list file format
# ------------------------------------------------------------------------------
def parse_edge_list(text: str, source: str = "<string>") -> Graph:
    """Parse `nodes N undirected {true|false}` followed by `tail head weight` lines.

    Undirected files may list each edge once or in both orientations.
    """
    header = None
    raw: list[tuple[int, Edge]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if header is None:
            m = HEADER_RE.match(s)
            if not m:
                raise GraphError(f"expected 'nodes N undirected true|false' header in {source}", line=lineno)
            header = (int(m.group(1)), m.group(2).lower() == "true")
            continue
        parts = s.split()
        if len(parts) != 3:
            raise GraphError(f"expected 'tail head weight', got {s!r}", line=lineno)
        try:
            raw.append((lineno, (int(parts[0]), int(parts[1]), float(parts[2]))))
        except ValueError:
            raise GraphError(f"malformed edge {s!r}", line=lineno) from None

    if header is None:
        raise GraphError(f"missing header in {source}")
    n, undirected = header

    edges: dict[tuple[int, int], float] = {}
    for lineno, (t, h, w) in raw:
        if not (0 <= t < n and 0 <= h < n):
            raise GraphError(f"node index outside [0, {n})", line=lineno)
        if t == h:
            raise GraphError(f"self-loop at node {t}", line=lineno)
        if not math.isfinite(w) or w == 0.0:
            raise GraphError(f"invalid weight {w}", line=lineno)
        keys = [(t, h), (h, t)] if undirected else [(t, h)]
        for key in keys:
            if key in edges and edges[key] != w:
                raise GraphError(f"conflicting weights for edge {key}", line=lineno)
            edges[key] = w

    return Graph(n, tuple((t, h, w) for (t, h), w in sorted(edges.items())), undirected=undirected)


def read_edge_list(path: Path | str) -> Graph:
    path = Path(path)
    if not path.exists():
        raise GraphError(f"graph file not found: {path}")
    return parse_edge_list(path.read_text(encoding="utf-8"), source=str(path))


def format_edge_list(g: Graph) -> str:
    lines = [f"nodes {g.node_count} undirected {'true' if g.undirected else 'false'}"]
    for t, h, w in g.edges:
        if g.undirected and t > h:
            continue
        lines.append(f"{t} {h} {w:g}")
    return "\n".join(lines) + "\n"


def write_edge_list(g: Graph, path: Path | str) -> Path:
    path = Path(path)
    path.write_text(format_edge_list(g), encoding="utf-8")
    return path
