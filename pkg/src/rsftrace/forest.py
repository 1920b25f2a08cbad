"""Random spanning forest sampling (Wilson's algorithm with q-absorption).

A forest drawn here has law

    P(phi) proportional to q**(#roots) * prod of the weights of its edges,

and the number of roots is an unbiased estimate of tr(q (L + qI)^-1).
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .graph import Graph

__all__ = [
    "ForestSample",
    "sample_forest",
    "sample_forest_conditional",
    "sample_parents",
    "spawn_seeds",
    "root_probabilities",
]

_ARRAYS: "weakref.WeakKeyDictionary[Graph, tuple]" = weakref.WeakKeyDictionary()


def kernel_arrays(g: Graph):
    """``(indptr, indices, cumw, weights, degrees)`` as used by the numba kernels."""
    try:
        return _ARRAYS[g]
    except KeyError:
        pass
    total = np.cumsum(g.weights)
    lens = np.diff(g.indptr)
    row_start = np.concatenate([[0.0], total])[g.indptr[:-1]]
    cumw = total - np.repeat(row_start, lens)
    arrs = (g.indptr, g.indices, cumw, g.weights, g.degrees)
    _ARRAYS[g] = arrs
    return arrs


def spawn_seeds(rng, count: int) -> np.ndarray:
    """Per-sample 32-bit seeds derived from ``rng`` (Generator, int or None)."""
    if isinstance(rng, np.random.Generator):
        entropy = int(rng.integers(2**63))
    else:
        entropy = rng
    return np.random.SeedSequence(entropy).generate_state(count, dtype=np.uint32)


def root_probabilities(g: Graph, q: float) -> np.ndarray:
    """Per-node probability ``q / (q + d_i)`` of rooting on the first visit."""
    return q / (q + g.degrees)


@dataclass(frozen=True, eq=False)
class ForestSample:
    """One rooted spanning forest.

    ``parent[i]`` is the next node on i's path to its root (``parent[r] == r``
    for roots). Trees are numbered by increasing root id.
    """

    parent: np.ndarray
    root_of: np.ndarray
    roots: np.ndarray
    first_visit_roots: np.ndarray
    tree_id: np.ndarray
    tree_sizes: np.ndarray
    steps: int

    @classmethod
    def from_parent(cls, parent, first_visit_roots=(), steps: int = 0) -> "ForestSample":
        """Build a sample from a parent array (roots point at themselves)."""
        parent = np.asarray(parent, dtype=np.int64)
        n = len(parent)
        root_of = np.empty(n, dtype=np.int64)
        _kernels.resolve_roots(parent, root_of)
        tree_id = np.empty(n, dtype=np.int64)
        sizes = np.empty(n, dtype=np.int64)
        k = _kernels.tree_labels(root_of, tree_id, sizes)
        return cls(parent, root_of, np.flatnonzero(parent == np.arange(n)),
                   np.asarray(first_visit_roots, dtype=np.int64), tree_id, sizes[:k].copy(), steps)

    @property
    def n(self) -> int:
        return len(self.parent)

    @property
    def n_roots(self) -> int:
        return len(self.roots)


def _run(g: Graph, q: float, x_mask, conditional: bool, seed) -> ForestSample:
    if not q > 0:
        raise ValueError("q must be positive")
    indptr, indices, cumw, _, deg = kernel_arrays(g)
    n = g.n
    nxt = np.empty(n, dtype=np.int64)
    in_tree = np.empty(n, dtype=np.bool_)
    seen = np.empty(n, dtype=np.bool_)
    first_root = np.empty(n, dtype=np.bool_)
    _seed_numba(int(spawn_seeds(seed, 1)[0]))
    steps = _kernels.wilson(indptr, indices, cumw, deg, float(q), x_mask, conditional,
                            nxt, in_tree, seen, first_root)
    return ForestSample.from_parent(nxt, np.flatnonzero(first_root), int(steps))


def sample_forest(g: Graph, q: float, rng=None) -> ForestSample:
    """Draw one forest with root weight ``q``.

    Nodes are walked from in index order; each occupancy of ``u`` is absorbed
    (``u`` becomes a root) with probability ``q / (q + d_u)``, otherwise the
    walk steps to a neighbor with probability proportional to the edge weight.
    """
    return _run(g, q, np.zeros(1, dtype=np.bool_), False, rng)


def sample_parents(g: Graph, q: float, N: int, rng=None, X=None):
    """Draw N forests at once, returning raw arrays instead of :class:`ForestSample`.

    Returns ``(parents, first_visit, steps)`` with shapes ``(N, n)``,
    ``(N, n)`` and ``(N,)``. With ``X`` every draw is conditioned on the
    first-visit root set ``X``. Meant for small graphs and statistical checks.
    """
    if not q > 0:
        raise ValueError("q must be positive")
    mask = np.zeros(1, dtype=np.bool_) if X is None else _root_mask(g, X)
    indptr, indices, cumw, _, deg = kernel_arrays(g)
    parents = np.empty((N, g.n), dtype=np.int64)
    first = np.empty((N, g.n), dtype=np.bool_)
    steps = np.empty(N, dtype=np.int64)
    _kernels.parent_batch(indptr, indices, cumw, deg, float(q), mask, X is not None,
                          spawn_seeds(rng, N), parents, first, steps)
    return parents, first, steps


def _root_mask(g: Graph, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.int64).ravel()
    if len(X) and (X.min() < 0 or X.max() >= g.n):
        raise ValueError(f"root set contains ids outside [0, {g.n})")
    mask = np.zeros(g.n, dtype=np.bool_)
    mask[X] = True
    isolated = (g.degrees == 0) & ~mask
    if isolated.any():
        raise ValueError(f"isolated node {int(np.flatnonzero(isolated)[0])} must belong to X")
    return mask


def sample_forest_conditional(g: Graph, q: float, X, rng=None) -> ForestSample:
    """Draw a forest conditioned on its first-visit root set being exactly ``X``.

    Nodes of ``X`` are rooted before any walk starts and the first occupancy of
    every other node is forced to move to a neighbor.
    """
    return _run(g, q, _root_mask(g, X), True, rng)


@_kernels.njit(cache=True)
def _seed_numba(seed):
    np.random.seed(seed)
