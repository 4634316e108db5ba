"""Sparse network topologies: generation, edge-list IO, and structural perturbations.

Graphs are stored in compressed neighbor-list form (CSR over arcs). Undirected
edges are stored in both directions so neighbor iteration never needs a
reverse lookup; this is the hot path for message aggregation during fitting.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import EdgeListParseError, ParameterError

logger = logging.getLogger(__name__)

GENERATOR_MODELS = ("ba", "ws", "er", "sbm", "rgm")


@dataclass(frozen=True)
class Graph:
    """Immutable unweighted graph in compressed neighbor-list form.

    ``neighbors[offsets[i]:offsets[i+1]]`` lists the neighbors of node ``i``
    in ascending order. For undirected graphs every edge appears in both
    node's slices, so ``len(neighbors) == 2 * num_edges``.
    """

    n: int
    offsets: np.ndarray
    neighbors: np.ndarray
    directed: bool = False

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.int64)
        neighbors = np.asarray(self.neighbors, dtype=np.int64)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "neighbors", neighbors)
        if self.n < 0:
            raise ParameterError("node count must be nonnegative")
        if offsets.shape != (self.n + 1,):
            raise ParameterError("offsets must have length n+1")
        if offsets[0] != 0 or offsets[-1] != len(neighbors):
            raise ParameterError("offsets must start at 0 and end at len(neighbors)")
        if np.any(np.diff(offsets) < 0):
            raise ParameterError("offsets must be non-decreasing")
        if len(neighbors) and (neighbors.min() < 0 or neighbors.max() >= self.n):
            raise ParameterError("neighbor index out of range")

    # -- basic accessors --------------------------------------------------

    @property
    def num_arcs(self) -> int:
        return int(len(self.neighbors))

    @property
    def num_edges(self) -> int:
        return self.num_arcs if self.directed else self.num_arcs // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def arc_src(self) -> np.ndarray:
        """Source node of each arc (cached; same order as ``neighbors``)."""
        cached = getattr(self, "_arc_src", None)
        if cached is None:
            cached = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
            object.__setattr__(self, "_arc_src", cached)
        return cached

    @property
    def arc_dst(self) -> np.ndarray:
        return self.neighbors

    def neighbors_of(self, i: int) -> np.ndarray:
        return self.neighbors[self.offsets[i] : self.offsets[i + 1]]

    def edge_array(self) -> np.ndarray:
        """Canonical edge list: sorted (u, v) pairs, u < v for undirected."""
        src, dst = self.arc_src, self.neighbors
        if self.directed:
            pairs = np.stack([src, dst], axis=1)
        else:
            keep = src < dst
            pairs = np.stack([src[keep], dst[keep]], axis=1)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return pairs[order]

    def aggregate_arcs(self, arc_values: np.ndarray) -> np.ndarray:
        """Sum per-arc values into their source node: out[i] = sum over arcs (i, j).

        ``arc_values`` has shape [A, ...]; returns [n, ...]. Uses a single
        segmented reduction over the CSR layout, so the accumulation order is
        the neighbor-list order and independent of any worker count.
        """
        arc_values = np.asarray(arc_values)
        if arc_values.shape[0] != self.num_arcs:
            raise ParameterError("arc_values must have one row per arc")
        out_shape = (self.n,) + arc_values.shape[1:]
        if self.num_arcs == 0:
            return np.zeros(out_shape, dtype=arc_values.dtype)
        starts = np.minimum(self.offsets[:-1], self.num_arcs - 1)
        out = np.add.reduceat(arc_values, starts, axis=0)
        empty = self.degrees == 0
        if empty.any():
            out[empty] = 0
        return out

    # -- construction ------------------------------------------------------

    @staticmethod
    def from_edges(n: int, edges: np.ndarray, directed: bool = False) -> "Graph":
        """Build a graph from an [E, 2] integer edge array.

        Self-loops are dropped and duplicates collapsed; for undirected graphs
        edges are symmetrized.
        """
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            if edges.min() < 0 or edges.max() >= n:
                raise ParameterError("edge endpoint out of range")
            edges = edges[edges[:, 0] != edges[:, 1]]
        if not directed and len(edges):
            lo = np.minimum(edges[:, 0], edges[:, 1])
            hi = np.maximum(edges[:, 0], edges[:, 1])
            edges = np.stack([lo, hi], axis=1)
        if len(edges):
            edges = np.unique(edges, axis=0)
        if not directed and len(edges):
            arcs = np.concatenate([edges, edges[:, ::-1]], axis=0)
        else:
            arcs = edges
        if len(arcs):
            order = np.lexsort((arcs[:, 1], arcs[:, 0]))
            arcs = arcs[order]
            counts = np.bincount(arcs[:, 0], minlength=n)
        else:
            counts = np.zeros(n, dtype=np.int64)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        neigh = arcs[:, 1] if len(arcs) else np.zeros(0, dtype=np.int64)
        return Graph(n=n, offsets=offsets, neighbors=neigh, directed=directed)

    def same_topology(self, other: "Graph") -> bool:
        return (
            self.n == other.n
            and self.directed == other.directed
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.neighbors, other.neighbors)
        )


# ---------------------------------------------------------------------------
# Random generators (all deterministic in seed)
# ---------------------------------------------------------------------------


def _ba_edges(n: int, m: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    if m < 1:
        raise ParameterError("ba: attachment m must be >= 1")
    if n < 2:
        raise ParameterError("ba: need n >= 2")
    core = min(m + 1, n)
    edges = [(i, j) for i in range(core) for j in range(i + 1, core)]
    repeated: list[int] = [v for e in edges for v in e]
    for v in range(core, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(repeated[int(rng.integers(len(repeated)))])
        for t in sorted(targets):
            edges.append((t, v))
            repeated.extend((t, v))
    return edges


def _ws_edges(n: int, k: int, p: float, rng: np.random.Generator) -> list[tuple[int, int]]:
    if k < 2 or k % 2 != 0 or k >= n:
        raise ParameterError("ws: k must be even with 2 <= k < n")
    if not 0.0 <= p <= 1.0:
        raise ParameterError("ws: rewire probability must be in [0, 1]")
    edge_set: set[tuple[int, int]] = set()
    ring = []
    for i in range(n):
        for off in range(1, k // 2 + 1):
            j = (i + off) % n
            e = (min(i, j), max(i, j))
            if e not in edge_set:
                edge_set.add(e)
                ring.append((i, j))
    for i, j in ring:
        if rng.random() < p:
            old = (min(i, j), max(i, j))
            for _ in range(100):
                w = int(rng.integers(n))
                cand = (min(i, w), max(i, w))
                if w != i and cand not in edge_set:
                    edge_set.remove(old)
                    edge_set.add(cand)
                    break
    return sorted(edge_set)


def _er_edges(n: int, p: float, rng: np.random.Generator) -> list[tuple[int, int]]:
    if not 0.0 <= p <= 1.0:
        raise ParameterError("er: p must be in [0, 1]")
    edges = []
    for i in range(n - 1):
        mask = rng.random(n - i - 1) < p
        for j in np.nonzero(mask)[0]:
            edges.append((i, i + 1 + int(j)))
    return edges


def _sbm_edges(
    n: int, sizes: list[int], probs: np.ndarray, rng: np.random.Generator
) -> list[tuple[int, int]]:
    sizes = [int(s) for s in sizes]
    if sum(sizes) != n:
        raise ParameterError("sbm: block sizes must sum to n")
    probs = np.asarray(probs, dtype=float)
    b = len(sizes)
    if probs.shape != (b, b):
        raise ParameterError("sbm: probability matrix must be square with one row per block")
    if np.any(probs < 0) or np.any(probs > 1):
        raise ParameterError("sbm: probabilities must be in [0, 1]")
    starts = np.concatenate([[0], np.cumsum(sizes)])
    edges: list[tuple[int, int]] = []
    for a in range(b):
        for c in range(a, b):
            p = probs[a, c]
            ia = np.arange(starts[a], starts[a + 1])
            ic = np.arange(starts[c], starts[c + 1])
            draw = rng.random((len(ia), len(ic)))
            if a == c:
                rows, cols = np.nonzero(np.triu(draw < p, k=1))
            else:
                rows, cols = np.nonzero(draw < p)
            for r, col in zip(rows, cols):
                edges.append((int(ia[r]), int(ic[col])))
    return edges


def _rgm_edges(n: int, radius: float, rng: np.random.Generator) -> list[tuple[int, int]]:
    if radius <= 0:
        raise ParameterError("rgm: radius must be positive")
    pts = rng.random((n, 2))
    edges: list[tuple[int, int]] = []
    r2 = radius * radius
    chunk = max(1, int(2e6 // max(n, 1)))
    for i0 in range(0, n, chunk):
        i1 = min(i0 + chunk, n)
        d2 = ((pts[i0:i1, None, :] - pts[None, :, :]) ** 2).sum(-1)
        rows, cols = np.nonzero(d2 <= r2)
        for r, c in zip(rows, cols):
            u = i0 + int(r)
            if u < c:
                edges.append((u, int(c)))
    return edges


def generate(model: str, n: int, seed: int, **params) -> Graph:
    """Generate a random graph. Supported models: ba, ws, er, sbm, rgm.

    Model parameters: ba(m), ws(k, p), er(p), sbm(sizes, probs), rgm(radius).
    Output is deterministic in (model, params, n, seed).
    """
    if n < 2:
        raise ParameterError("need at least 2 nodes")
    model = model.lower()
    rng = np.random.default_rng(seed)
    if model == "ba":
        edges = _ba_edges(n, int(params.get("m", 3)), rng)
    elif model == "ws":
        edges = _ws_edges(n, int(params.get("k", 4)), float(params.get("p", 0.1)), rng)
    elif model == "er":
        edges = _er_edges(n, float(params.get("p", 0.01)), rng)
    elif model == "sbm":
        edges = _sbm_edges(n, params["sizes"], params["probs"], rng)
    elif model == "rgm":
        edges = _rgm_edges(n, float(params.get("radius", 0.1)), rng)
    else:
        raise ParameterError(f"unknown graph model '{model}'")
    return Graph.from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2))


# ---------------------------------------------------------------------------
# Edge-list IO
# ---------------------------------------------------------------------------


def load_edge_list(path, directed: bool = False) -> Graph:
    """Load a whitespace-separated "src dst" edge list; '#' starts a comment.

    Node count is max id + 1. Duplicate lines collapse to one edge and
    self-loops are dropped (a warning reports how many).
    """
    edges = []
    n_loops = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise EdgeListParseError(f"expected 'src dst', got {raw.strip()!r}", lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise EdgeListParseError(f"non-integer node id in {raw.strip()!r}", lineno) from None
            if u < 0 or v < 0:
                raise EdgeListParseError("negative node id", lineno)
            if u == v:
                n_loops += 1
                edges.append((u, v))  # keeps the node id visible for n
                continue
            edges.append((u, v))
    if edges:
        arr = np.array(edges, dtype=np.int64)
        n = int(arr.max()) + 1
    else:
        arr = np.zeros((0, 2), dtype=np.int64)
        n = 0
    if n_loops:
        logger.warning("dropped %d self-loop(s) while loading %s", n_loops, path)
    return Graph.from_edges(n, arr, directed=directed)


def save_edge_list(g: Graph, path) -> None:
    """Write the canonical (deduplicated, sorted) edge list."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in g.edge_array():
            fh.write(f"{u} {v}\n")


# ---------------------------------------------------------------------------
# Structural perturbations
# ---------------------------------------------------------------------------


def remove_nodes(g: Graph, fraction: float, seed: int) -> tuple[Graph, np.ndarray]:
    """Delete a uniformly sampled floor(fraction*n) nodes with incident edges.

    Remaining nodes are re-indexed contiguously. Returns the new graph and an
    index map of length old-n with new ids (-1 for removed nodes).
    """
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError("fraction must be in [0, 1]")
    k = int(np.floor(fraction * g.n))
    rng = np.random.default_rng(seed)
    removed = rng.choice(g.n, size=k, replace=False) if k else np.zeros(0, dtype=np.int64)
    keep = np.ones(g.n, dtype=bool)
    keep[removed] = False
    index_map = np.full(g.n, -1, dtype=np.int64)
    index_map[keep] = np.arange(int(keep.sum()), dtype=np.int64)
    edges = g.edge_array()
    if len(edges):
        ok = keep[edges[:, 0]] & keep[edges[:, 1]]
        edges = index_map[edges[ok]]
    new_g = Graph.from_edges(int(keep.sum()), edges, directed=g.directed)
    return new_g, index_map


def remove_edges(g: Graph, fraction: float, seed: int) -> Graph:
    """Delete a uniformly sampled floor(fraction*|E|) edges (pairs if undirected)."""
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError("fraction must be in [0, 1]")
    edges = g.edge_array()
    k = int(np.floor(fraction * len(edges)))
    rng = np.random.default_rng(seed)
    drop = rng.choice(len(edges), size=k, replace=False) if k else np.zeros(0, dtype=np.int64)
    keep = np.ones(len(edges), dtype=bool)
    keep[drop] = False
    return Graph.from_edges(g.n, edges[keep], directed=g.directed)
