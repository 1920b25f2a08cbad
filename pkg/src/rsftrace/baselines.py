"""Probe-based trace estimators and the shifted Laplacian solver behind them.

``solve_shifted`` runs Jacobi-preconditioned conjugate gradient on
``(L + qI) x = b``, one independent CG recursion per column when ``b`` is a
block. Hutchinson (Rademacher probes) and Girard (Gaussian probes) then
average ``a^T K a``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .estimators import EstimateRun
from .graph import Graph, laplacian_apply

__all__ = [
    "ProbeConfig",
    "CGInfo",
    "solve_shifted",
    "estimate_probe",
    "smooth",
    "dense_reference",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 2000


@dataclass(frozen=True)
class ProbeConfig:
    probe_kind: str = "rademacher"
    N: int = 100
    tol: float = 1e-8
    max_iter: int | None = None

    def __post_init__(self):
        if self.probe_kind not in ("rademacher", "gaussian"):
            raise ValueError(f"probe_kind must be rademacher or gaussian, got {self.probe_kind!r}")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.N < 1:
            raise ValueError("N must be >= 1")


@dataclass
class CGInfo:
    converged: bool
    iterations: int
    relres: np.ndarray
    # per iteration: energy 0.5 x^T A x - b^T x of every column (non-increasing)
    energy: list = field(default_factory=list, repr=False)
    # per iteration: relative recursive residual of every column
    residuals: list = field(default_factory=list, repr=False)


def solve_shifted(g: Graph, q: float, b: np.ndarray, tol: float = 1e-8,
                  max_iter: int | None = None) -> tuple[np.ndarray, CGInfo]:
    """Solve ``(L + qI) x = b`` to relative residual ``tol``.

    ``b`` may be a vector or an ``(n, k)`` block. Returns the solution and a
    :class:`CGInfo`; on non-convergence the last iterate is returned with
    ``converged=False``.
    """
    if not q > 0:
        raise ValueError("q must be positive")
    b = np.asarray(b, dtype=np.float64)
    vec = b.ndim == 1
    B = b[:, None] if vec else b
    if B.shape[0] != g.n:
        raise ValueError(f"right-hand side has {B.shape[0]} rows, graph has {g.n} nodes")
    max_iter = max_iter if max_iter is not None else 10 * g.n + 100
    diag = (g.degrees + q)[:, None]

    def op(X):
        return laplacian_apply(g, X) + q * X

    bnorm = np.linalg.norm(B, axis=0)
    bnorm[bnorm == 0] = 1.0
    X = np.zeros_like(B)
    R = B.copy()
    Z = R / diag
    P = Z.copy()
    rz = np.sum(R * Z, axis=0)
    energy, residuals = [np.zeros(B.shape[1])], []
    it = 0
    while True:
        relres = np.linalg.norm(R, axis=0) / bnorm
        residuals.append(relres)
        active = relres > tol
        if not active.any():
            R_true = B - op(X)
            if np.all(np.linalg.norm(R_true, axis=0) / bnorm <= tol) or it >= max_iter:
                break
            # recursive residual drifted below tol early: restart from the true one
            R = R_true
            Z = R / diag
            P = Z.copy()
            rz = np.sum(R * Z, axis=0)
            continue
        if it >= max_iter:
            break
        it += 1
        AP = op(P)
        pAp = np.sum(P * AP, axis=0)
        step = np.where(active, rz / np.where(pAp > 0, pAp, 1.0), 0.0)
        X += step * P
        R -= step * AP
        if it % 50 == 0:
            # refresh against drift of the recursive residual
            R = B - op(X)
        Z = R / diag
        rz_new = np.sum(R * Z, axis=0)
        beta = np.where(active, rz_new / np.where(rz > 0, rz, 1.0), 0.0)
        P = Z + beta * P
        rz = rz_new
        energy.append(-0.5 * np.sum(X * (B + R), axis=0))
    relres = np.linalg.norm(B - op(X), axis=0) / bnorm
    info = CGInfo(converged=bool(np.all(relres <= tol)), iterations=it, relres=relres,
                  energy=energy, residuals=residuals)
    return (X[:, 0] if vec else X), info


def _probes(kind: str, n: int, N: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "rademacher":
        return rng.choice(np.array([-1.0, 1.0]), size=(n, N))
    return rng.standard_normal((n, N))


def estimate_probe(g: Graph, q: float, cfg: ProbeConfig = ProbeConfig(), rng=None,
                   probes: np.ndarray | None = None, block: int = 32) -> EstimateRun:
    """Hutchinson/Girard estimate of tr(K) from ``cfg.N`` probes.

    Each probe value is ``q * a^T (L + qI)^-1 a``. Pass ``probes`` (n x N) to
    use fixed probe vectors instead of random ones. Probes are solved in
    blocks of ``block`` columns; per-probe time excludes one warm-up solve.
    """
    rng = np.random.default_rng(rng)
    A = _probes(cfg.probe_kind, g.n, cfg.N, rng) if probes is None else np.asarray(probes, float)
    N = A.shape[1]
    solve_shifted(g, q, A[:, :1], cfg.tol, cfg.max_iter)
    values = np.empty(N)
    iters, converged = [], True
    t0 = time.perf_counter()
    for s in range(0, N, block):
        cols = A[:, s:s + block]
        X, info = solve_shifted(g, q, cols, cfg.tol, cfg.max_iter)
        values[s:s + block] = q * np.sum(cols * X, axis=0)
        iters.append(info.iterations)
        converged &= info.converged
    elapsed = time.perf_counter() - t0
    method = "hutchinson_cg" if cfg.probe_kind == "rademacher" else "girard_cg"
    var = float(np.var(values, ddof=1)) if N > 1 else 0.0
    return EstimateRun(method, float(values.mean()), var, N, elapsed / N, seed=rng, values=values,
                       extra={"cg_iterations": iters, "converged": converged})


def smooth(g: Graph, q: float, y: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Tikhonov-smoothed signal ``K y``, the minimizer of ``q|y - z|^2 + z^T L z``."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (g.n,):
        raise ValueError(f"signal must have shape ({g.n},)")
    x, info = solve_shifted(g, q, y, tol)
    return q * x


def dense_reference(g: Graph, q: float, dense_limit: int = DENSE_LIMIT) -> tuple[np.ndarray, float]:
    """Dense ``K = q (L + qI)^-1`` and its trace via a Cholesky factorization."""
    if g.n > dense_limit:
        raise ValueError(f"dense reference limited to n <= {dense_limit}, got {g.n}")
    M = np.diag(g.degrees + q) - g.adjacency().toarray()
    K = q * scipy.linalg.cho_solve(scipy.linalg.cho_factor(M), np.eye(g.n))
    return K, float(np.trace(K))
