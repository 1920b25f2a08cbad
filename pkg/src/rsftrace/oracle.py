"""Brute-force ground truth on tiny graphs.

Rooted spanning forests are enumerated exhaustively (all acyclic edge
subsets times one root per tree), which is only feasible for a handful of
nodes. Control-variate values are computed here from dense matrices, with no
shared code with :mod:`rsftrace.estimators`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .graph import Graph

__all__ = [
    "ForestEnumeration",
    "enumerate_forests",
    "exact_stats",
    "dense_K",
    "dense_laplacian",
    "s_tilde_matrix",
    "s_bar_matrix",
    "dense_control_variates",
]

MAX_NODES = 7


def dense_laplacian(g: Graph) -> np.ndarray:
    A = g.adjacency().toarray()
    return np.diag(g.degrees) - A


def dense_K(g: Graph, q: float) -> np.ndarray:
    return q * np.linalg.inv(dense_laplacian(g) + q * np.eye(g.n))


@dataclass
class ForestEnumeration:
    """All rooted spanning forests of a graph with their probabilities.

    ``parents[f]`` is the parent array of forest f (roots point at
    themselves), ``weights[f]`` is ``q**|roots| * prod(w)``.
    """

    q: float
    parents: np.ndarray
    weights: np.ndarray

    @property
    def partition_function(self) -> float:
        return float(self.weights.sum())

    @property
    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def index(self) -> dict[tuple, int]:
        return {tuple(p): k for k, p in enumerate(self.parents)}


def _components(n, edges):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            return None
        parent[ra] = rb
    comps: dict[int, list[int]] = {}
    for v in range(n):
        comps.setdefault(find(v), []).append(v)
    return list(comps.values())


def _orient(n, edges, roots):
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    par = np.full(n, -1, dtype=np.int64)
    stack = list(roots)
    for r in roots:
        par[r] = r
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if par[v] < 0:
                par[v] = u
                stack.append(v)
    return par


def enumerate_forests(g: Graph, q: float) -> ForestEnumeration:
    if g.n > MAX_NODES:
        raise ValueError(f"enumeration limited to n <= {MAX_NODES}, got {g.n}")
    u, v, w = g.edges()
    edge_list = list(zip(u.tolist(), v.tolist()))
    parents, weights = [], []
    for mask in range(1 << len(edge_list)):
        chosen = [k for k in range(len(edge_list)) if mask >> k & 1]
        sub = [edge_list[k] for k in chosen]
        comps = _components(g.n, sub)
        if comps is None:
            continue
        weight = q ** len(comps) * float(np.prod(w[chosen])) if chosen else q ** len(comps)
        for roots in itertools.product(*comps):
            parents.append(_orient(g.n, sub, roots))
            weights.append(weight)
    return ForestEnumeration(q=q, parents=np.array(parents), weights=np.array(weights))


def _root_map(parent):
    root = parent.copy()
    for _ in range(len(parent)):
        root = parent[root]
    return root


def s_tilde_matrix(parent: np.ndarray) -> np.ndarray:
    """``S[i, j] = 1`` iff j is the root of i."""
    n = len(parent)
    S = np.zeros((n, n))
    S[np.arange(n), _root_map(parent)] = 1.0
    return S


def s_bar_matrix(parent: np.ndarray) -> np.ndarray:
    """``S[i, j] = 1/|T|`` when i and j share tree T, else 0."""
    root = _root_map(parent)
    same = root[:, None] == root[None, :]
    return same / same.sum(axis=0, keepdims=True)


def dense_control_variates(g: Graph, q: float, parent: np.ndarray) -> tuple[float, float]:
    """``(c_tilde, c_bar)`` as ``n - tr(K^-1 S)`` for both matrix estimators."""
    Kinv = (dense_laplacian(g) + q * np.eye(g.n)) / q
    return (
        g.n - float(np.trace(Kinv @ s_tilde_matrix(parent))),
        g.n - float(np.trace(Kinv @ s_bar_matrix(parent))),
    )


@dataclass
class ExactStats:
    mean_roots: float
    var_roots: float
    mean_c_tilde: float
    mean_c_bar: float
    var_c_tilde: float
    var_c_bar: float
    cov_tilde: float
    cov_bar: float
    alpha_star_tilde: float
    alpha_star_bar: float
    var_s_tilde: float
    var_s_bar: float
    alpha: float


def exact_stats(enum: ForestEnumeration, g: Graph, q: float, alpha: float = 0.0) -> ExactStats:
    """Exact moments of |roots| and both control variates under the forest law."""
    p = enum.probabilities
    roots = np.array([np.sum(par == np.arange(g.n)) for par in enum.parents], dtype=float)
    cv = np.array([dense_control_variates(g, q, par) for par in enum.parents])
    ct, cb = cv[:, 0], cv[:, 1]

    def mean(x):
        return float(p @ x)

    def cov(x, y):
        return float(p @ ((x - mean(x)) * (y - mean(y))))

    var_ct, var_cb = cov(ct, ct), cov(cb, cb)
    return ExactStats(
        mean_roots=mean(roots),
        var_roots=cov(roots, roots),
        mean_c_tilde=mean(ct),
        mean_c_bar=mean(cb),
        var_c_tilde=var_ct,
        var_c_bar=var_cb,
        cov_tilde=cov(roots, ct),
        cov_bar=cov(roots, cb),
        alpha_star_tilde=-cov(roots, ct) / var_ct if var_ct > 0 else 0.0,
        alpha_star_bar=-cov(roots, cb) / var_cb if var_cb > 0 else 0.0,
        var_s_tilde=cov(roots + alpha * ct, roots + alpha * ct),
        var_s_bar=cov(roots + alpha * cb, roots + alpha * cb),
        alpha=alpha,
    )
