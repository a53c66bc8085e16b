"""
Communication graphs and neighbor-sparse weight matrices.

A :class:`Graph` is an undirected simple graph on nodes ``0..n-1``.  A
:class:`WeightMatrix` is a symmetric positive semi-definite matrix whose
off-diagonal sparsity follows the graph and whose null space is spanned by
the all-ones vector.  The network operator acting on stacked per-node
vectors is ``P kron I_d``; it is never formed explicitly here, see
:func:`apply_weight`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

NULL_TOL = 1e-9
MAX_RESAMPLES = 1000


class DisconnectedGraphError(ValueError):
    """Raised when a graph (or weight matrix) has more than one component."""


@dataclass(frozen=True)
class Graph:
    """Undirected graph with optional node coordinates in the unit square."""

    n: int
    edges: frozenset[tuple[int, int]]
    coords: np.ndarray | None = field(default=None, compare=False, repr=False)
    seed: int | None = None

    def __post_init__(self):
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))
        if self.coords is not None:
            coords = np.asarray(self.coords, dtype=float)
            if coords.shape != (self.n, 2):
                raise ValueError("coords must have shape (n, 2)")
            coords.setflags(write=False)
            object.__setattr__(self, "coords", coords)

    @classmethod
    def from_edges(cls, n, edges, coords=None, seed=None):
        return cls(n=n, edges=frozenset(tuple(e) for e in edges), coords=coords, seed=seed)

    @property
    def m(self) -> int:
        return len(self.edges)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1.0
        return A

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    def n_components(self) -> int:
        if self.m == 0:
            return self.n
        rows, cols = zip(*self.edges)
        A = coo_matrix((np.ones(self.m), (rows, cols)), shape=(self.n, self.n))
        return int(connected_components(A, directed=False)[0])

    def is_connected(self) -> bool:
        return self.n_components() == 1

    # -- edge-list text format ---------------------------------------------

    def to_edgelist(self) -> str:
        lines = [f"{self.n} {self.m}"]
        lines += [f"{i} {j}" for i, j in self.sorted_edges()]
        if self.coords is not None:
            lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(self.coords.tolist())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edgelist(cls, text: str) -> "Graph":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        n, m = int(rows[0][0]), int(rows[0][1])
        edges = [(int(a), int(b)) for a, b in rows[1 : 1 + m]]
        coords = None
        rest = rows[1 + m :]
        if rest:
            if len(rest) != n:
                raise ValueError(f"expected {n} coordinate lines, got {len(rest)}")
            coords = np.zeros((n, 2))
            for i, x, y in rest:
                coords[int(i)] = float(x), float(y)
        return cls.from_edges(n, edges, coords=coords)

    def save(self, path) -> None:
        Path(path).write_text(self.to_edgelist())

    @classmethod
    def load(cls, path) -> "Graph":
        return cls.from_edgelist(Path(path).read_text())


def complete_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def generate_geometric_graph(n: int, radius: float, seed: int) -> Graph:
    """Random geometric graph on the unit square, re-sampled until connected.

    Nodes are placed uniformly on ``[0, 1]^2`` and joined when their
    Euclidean distance is at most `radius`.  A disconnected sample is
    discarded and positions are redrawn with ``seed + 1``, ``seed + 2``, ...;
    the seed that produced the returned graph is stored on it.

    Raises
    ------
    RuntimeError
        If no connected sample is found in 1000 attempts.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if radius <= 0:
        raise ValueError("radius must be positive")
    for attempt in range(MAX_RESAMPLES):
        s = seed + attempt
        coords = np.random.default_rng(s).uniform(0.0, 1.0, size=(n, 2))
        dist = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)
        ii, jj = np.nonzero(np.triu(dist <= radius, k=1))
        g = Graph.from_edges(n, zip(ii.tolist(), jj.tolist()), coords=coords, seed=s)
        if g.is_connected():
            return g
    raise RuntimeError(
        f"no connected geometric graph with n={n}, radius={radius} "
        f"after {MAX_RESAMPLES} samples; radius is too small"
    )


class WeightMatrix:
    """Symmetric PSD mixing matrix with neighbor-sparse structure.

    Only symmetry and shape are checked on construction; :meth:`validate`
    runs the full invariant list.  Spectral data is computed lazily by full
    symmetric eigendecomposition and cached.
    """

    def __init__(self, entries):
        P = np.array(entries, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("weight matrix must be square")
        if not np.allclose(P, P.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(P).max())):
            raise ValueError("weight matrix must be symmetric")
        P = 0.5 * (P + P.T)
        P.setflags(write=False)
        self.entries = P
        self.n = P.shape[0]
        # padded neighbor lists (self included), ascending j
        nbrs = [np.flatnonzero((P[i] != 0) | (np.arange(self.n) == i)) for i in range(self.n)]
        width = max(len(nb) for nb in nbrs)
        idx = np.empty((self.n, width), dtype=np.intp)
        w = np.zeros((self.n, width))
        for i, nb in enumerate(nbrs):
            idx[i, : len(nb)] = nb
            idx[i, len(nb) :] = i
            w[i, : len(nb)] = P[i, nb]
        self._nbr_idx = idx
        self._nbr_w = w

    def __repr__(self):
        return f"WeightMatrix(n={self.n})"

    @property
    def matrix(self) -> np.ndarray:
        return self.entries

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.entries[i]) if j != i]

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    @cached_property
    def spectral(self) -> tuple[float, float, float]:
        lam = self.eigenvalues
        small = lam <= NULL_TOL
        if small.sum() > 1:
            raise DisconnectedGraphError(
                f"{int(small.sum())} eigenvalues below {NULL_TOL}: graph is disconnected"
            )
        lam_max = float(lam[-1])
        lam_min = float(lam[~small].min())
        return lam_max, lam_min, lam_max / lam_min

    @property
    def kappa(self) -> float:
        return self.spectral[2]

    def scaled(self, factor: float) -> "WeightMatrix":
        return WeightMatrix(self.entries * factor)

    def validate(self, *, normalized: bool = True, graph: Graph | None = None) -> None:
        """Assert every weight-matrix invariant; raises ``AssertionError``."""
        P = self.entries
        lam = self.eigenvalues
        lam_max = lam[-1]
        assert np.array_equal(P, P.T), "not symmetric"
        assert lam[0] >= -1e-10 * lam_max, f"not PSD (min eigenvalue {lam[0]:.3e})"
        ones = np.ones(self.n)
        assert np.linalg.norm(P @ ones) <= 1e-10 * np.linalg.norm(P, 2) * math.sqrt(self.n), \
            "all-ones vector is not in the null space"
        self.spectral  # raises on a multi-dimensional null space
        if normalized:
            assert abs(lam_max - 1.0) <= 1e-10, f"lambda_max = {lam_max!r}, expected 1"
        if graph is not None:
            mask = graph.adjacency() + np.eye(self.n)
            assert np.all(P[mask == 0] == 0), "entry outside the graph's sparsity pattern"


def build_weight_matrix(g: Graph, scheme: str = "normalized_laplacian") -> WeightMatrix:
    """Weight matrix of a connected graph, scaled so that lambda_max = 1.

    ``normalized_laplacian`` is the combinatorial Laplacian ``D - A``;
    ``metropolis`` is ``I - W`` with Metropolis-Hastings weights
    ``w_ij = 1 / (1 + max(deg_i, deg_j))``.
    """
    if not g.is_connected():
        raise DisconnectedGraphError("weight matrix requires a connected graph")
    A = g.adjacency()
    deg = A.sum(axis=1)
    if scheme == "normalized_laplacian":
        M = np.diag(deg) - A
    elif scheme == "metropolis":
        W = np.zeros_like(A)
        for i, j in g.edges:
            W[i, j] = W[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[np.diag_indices(g.n)] = 1.0 - W.sum(axis=1)
        M = np.eye(g.n) - W
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    lam_max = np.linalg.eigvalsh(M)[-1]
    return WeightMatrix(M / lam_max)


def spectral_bounds(P: WeightMatrix) -> tuple[float, float, float]:
    """Return ``(lambda_max, lambda_min_nonzero, kappa)`` of `P`.

    Eigenvalues at or below 1e-9 count as the null space; more than one
    such eigenvalue raises :class:`DisconnectedGraphError`.
    """
    return P.spectral


def apply_weight(P: WeightMatrix, s) -> np.ndarray:
    """Neighbor-sum product ``(P kron I_d) s`` on stacked per-node vectors.

    `s` has shape ``(n, d)`` (or ``(n,)`` for d = 1).  Row ``i`` of the
    result is ``sum_{j in N_i + {i}} p_ij s_j`` accumulated in ascending
    ``j``, so the output does not depend on how nodes are scheduled.
    """
    s = np.asarray(s, dtype=float)
    flat = s.ndim == 1
    S = s[:, None] if flat else s
    if S.ndim != 2 or S.shape[0] != P.n:
        raise ValueError(f"expected {P.n} per-node blocks, got shape {s.shape}")
    out = np.zeros_like(S)
    for t in range(P._nbr_idx.shape[1]):
        out += P._nbr_w[:, t, None] * S[P._nbr_idx[:, t]]
    return out[:, 0] if flat else out
