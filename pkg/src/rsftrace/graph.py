"""Weighted undirected graphs in compressed adjacency (CSR) form.

A :class:`Graph` stores, for each node, a contiguous run of ``(neighbor,
weight)`` pairs plus the precomputed degree vector. The Laplacian
``L = D - W`` is never built here; use :func:`laplacian_apply`.

Generators cover the synthetic families used in the benchmarks
(Barabasi-Albert, random regular, 3D lattice) and :func:`load_snap` reads
SNAP-style edge lists.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
import scipy.sparse as sp

__all__ = [
    "Graph",
    "from_edge_list",
    "load_snap",
    "save_graph",
    "load_graph",
    "gen_barabasi_albert",
    "gen_k_regular",
    "gen_grid3d",
    "gen_grid2d",
    "gen_powerlaw_cluster",
    "path_graph",
    "complete_graph",
    "star_graph",
    "laplacian_apply",
]


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable weighted undirected graph.

    ``indptr``/``indices``/``weights`` follow the scipy CSR convention and
    list every undirected edge twice (once per endpoint). ``labels`` holds the
    original node ids when the graph was loaded from a file with sparse ids.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    degrees: np.ndarray
    labels: np.ndarray | None = field(default=None, repr=False)
    name: str = ""

    def __post_init__(self):
        for arr in (self.indptr, self.indices, self.weights, self.degrees):
            arr.setflags(write=False)
        if self.labels is not None:
            self.labels.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.indices) // 2

    @property
    def d_max(self) -> float:
        return float(self.degrees.max()) if self.n else 0.0

    @property
    def d_avg(self) -> float:
        return float(self.degrees.sum() / self.n)

    @property
    def unit_weights(self) -> bool:
        return bool(np.all(self.weights == 1.0))

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(u, v, w)`` with ``u < v``, one entry per undirected edge."""
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        keep = rows < self.indices
        return rows[keep], self.indices[keep], self.weights[keep]

    def adjacency(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.weights, self.indices, self.indptr), shape=(self.n, self.n))

    def check(self) -> None:
        """Assert the structural invariants (symmetry, no loops, degree sums)."""
        A = self.adjacency()
        assert np.all(self.weights > 0)
        assert not np.any(A.diagonal())
        assert abs(A - A.T).max() == 0 if self.m else True
        for i in range(self.n):
            nb = self.neighbors(i)
            assert len(np.unique(nb)) == len(nb)
        assert np.allclose(self.degrees, np.asarray(A.sum(axis=1)).ravel())
        assert np.isclose(self.degrees.sum(), 2 * self.edges()[2].sum())


def _build(n: int, u: np.ndarray, v: np.ndarray, w: np.ndarray, labels=None, name="") -> Graph:
    # u, v, w: one row per undirected edge, already deduplicated
    rows = np.concatenate([u, v]).astype(np.int64)
    cols = np.concatenate([v, u]).astype(np.int64)
    vals = np.concatenate([w, w]).astype(np.float64)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    A.sort_indices()
    degrees = np.asarray(A.sum(axis=1), dtype=np.float64).ravel()
    return Graph(
        n=int(n),
        indptr=A.indptr.astype(np.int64),
        indices=A.indices.astype(np.int64),
        weights=A.data.astype(np.float64),
        degrees=degrees,
        labels=labels,
        name=name,
    )


def from_edge_list(edges: Iterable[Sequence], n: int, name: str = "") -> Graph:
    """Build a graph from ``(u, v)`` or ``(u, v, w)`` tuples.

    Self-loops are dropped and repeated undirected edges keep the weight of
    their first occurrence. Missing weights default to 1.
    """
    if n < 1:
        raise ValueError("graph needs at least one node")
    rows = [tuple(e) for e in edges]
    u = np.array([r[0] for r in rows], dtype=np.int64)
    v = np.array([r[1] for r in rows], dtype=np.int64)
    w = np.array([float(r[2]) if len(r) > 2 and r[2] is not None else 1.0 for r in rows])
    return _from_arrays(n, u, v, w, name=name)


def _from_arrays(n, u, v, w, labels=None, name="") -> Graph:
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    w = np.asarray(w, dtype=np.float64)
    if len(u) and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n):
        raise ValueError(f"node id out of range [0, {n})")
    if np.any(w <= 0):
        raise ValueError("edge weights must be strictly positive")
    loop = u == v
    u, v, w = u[~loop], v[~loop], w[~loop]
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    # np.unique returns the index of the first occurrence
    _, first = np.unique(lo * n + hi, return_index=True)
    first.sort()
    return _build(n, lo[first], hi[first], w[first], labels=labels, name=name)


def load_snap(path: str | os.PathLike, name: str | None = None) -> Graph:
    """Read a SNAP edge list: ``#`` comments, whitespace-separated id pairs.

    An optional third column is read as the edge weight. Node ids are remapped
    to ``0..n-1`` in increasing order of the original id; the original ids are
    kept in ``Graph.labels``.
    """
    src, dst, wts = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                a, b = int(parts[0]), int(parts[1])
                c = float(parts[2]) if len(parts) > 2 else 1.0
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: cannot parse {line!r}") from None
            src.append(a)
            dst.append(b)
            wts.append(c)
    if not src:
        raise ValueError(f"{path}: no edges found")
    ids = np.array(src + dst, dtype=np.int64)
    labels, inv = np.unique(ids, return_inverse=True)
    k = len(src)
    return _from_arrays(
        len(labels), inv[:k], inv[k:], wts, labels=labels,
        name=name if name is not None else os.path.basename(str(path)),
    )


def save_graph(g: Graph, path: str | os.PathLike) -> None:
    """Write ``g`` as an ``.npz`` archive holding n, the edge triplets and labels."""
    u, v, w = g.edges()
    extra = {} if g.labels is None else {"labels": g.labels}
    np.savez_compressed(path, n=g.n, u=u, v=v, w=w, name=g.name, **extra)


def load_graph(path: str | os.PathLike) -> Graph:
    with np.load(path) as z:
        labels = z["labels"] if "labels" in z.files else None
        return _from_arrays(int(z["n"]), z["u"], z["v"], z["w"], labels=labels, name=str(z["name"]))


def _from_networkx(G: nx.Graph, name: str) -> Graph:
    if G.number_of_edges():
        u, v = np.array(list(G.edges()), dtype=np.int64).T
    else:
        u = v = np.zeros(0, dtype=np.int64)
    return _from_arrays(G.number_of_nodes(), u, v, np.ones(len(u)), name=name)


def gen_barabasi_albert(n: int, k: int, rng_seed=None) -> Graph:
    """Preferential attachment graph with ``(n - k) * k`` edges.

    (10**4, 10) gives the 99900 edges of the benchmark family.
    """
    if not 1 <= k < n:
        raise ValueError(f"need n > k >= 1, got n={n}, k={k}")
    return _from_networkx(nx.barabasi_albert_graph(n, k, seed=_int_seed(rng_seed)), f"ba_{n}_{k}")


def gen_k_regular(n: int, k: int, rng_seed=None) -> Graph:
    if (n * k) % 2 or not 0 <= k < n:
        raise ValueError(f"no simple {k}-regular graph on {n} nodes")
    return _from_networkx(nx.random_regular_graph(k, n, seed=_int_seed(rng_seed)), f"kreg_{n}_{k}")


def gen_powerlaw_cluster(n: int, k: int, p: float, rng_seed=None) -> Graph:
    """Holme-Kim graph: preferential attachment plus triangle closure with prob ``p``."""
    if not 1 <= k < n:
        raise ValueError(f"need n > k >= 1, got n={n}, k={k}")
    G = nx.powerlaw_cluster_graph(n, k, p, seed=_int_seed(rng_seed))
    return _from_networkx(G, f"plc_{n}_{k}")


def _lattice(shape: tuple[int, ...], periodic: bool, name: str) -> Graph:
    n = int(np.prod(shape))
    idx = np.arange(n).reshape(shape)
    us, vs = [], []
    for ax, side in enumerate(shape):
        if periodic:
            us.append(idx.ravel())
            vs.append(np.roll(idx, -1, axis=ax).ravel())
        else:
            sl_a = [slice(None)] * len(shape)
            sl_b = [slice(None)] * len(shape)
            sl_a[ax] = slice(0, side - 1)
            sl_b[ax] = slice(1, side)
            us.append(idx[tuple(sl_a)].ravel())
            vs.append(idx[tuple(sl_b)].ravel())
    u, v = np.concatenate(us), np.concatenate(vs)
    return _from_arrays(n, u, v, np.ones(len(u)), name=name)


def gen_grid3d(side: int, periodic: bool = True) -> Graph:
    """``side**3`` lattice; with ``periodic`` each axis wraps around (torus)."""
    if side < 2:
        raise ValueError("side must be >= 2")
    return _lattice((side,) * 3, periodic, f"grid3d_{side}{'_torus' if periodic else ''}")


def gen_grid2d(rows: int, cols: int | None = None, periodic: bool = False) -> Graph:
    cols = rows if cols is None else cols
    if min(rows, cols) < 2:
        raise ValueError("grid sides must be >= 2")
    return _lattice((rows, cols), periodic, f"grid2d_{rows}x{cols}")


def path_graph(n: int) -> Graph:
    return from_edge_list([(i, i + 1) for i in range(n - 1)], n, name=f"path_{n}")


def complete_graph(n: int) -> Graph:
    return from_edge_list([(i, j) for i in range(n) for j in range(i + 1, n)], n, name=f"complete_{n}")


def star_graph(leaves: int) -> Graph:
    return from_edge_list([(0, j) for j in range(1, leaves + 1)], leaves + 1, name=f"star_{leaves}")


def laplacian_apply(g: Graph, x: np.ndarray) -> np.ndarray:
    """Return ``L @ x`` for ``L = D - W`` in O(n + m).

    ``x`` may be a vector of length n or an ``(n, k)`` block of vectors.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != g.n:
        raise ValueError(f"expected leading dimension {g.n}, got {x.shape[0]}")
    d = g.degrees if x.ndim == 1 else g.degrees[:, None]
    return d * x - g.adjacency() @ x


def _int_seed(rng_seed) -> int | None:
    if rng_seed is None or isinstance(rng_seed, (int, np.integer)):
        return rng_seed
    return int(np.random.default_rng(rng_seed).integers(2**31))
