"""numba kernels for Wilson's algorithm with q-absorption.

Every sample ``s`` reseeds numba's thread-local generator with ``seeds[s]``
before drawing, so a batch gives the same forests whether it runs serially
or under ``prange``.
"""

import numpy as np
from numba import njit, prange

# no parent assigned yet; roots point at themselves instead
_UNSET = -1


@njit(cache=True, inline="always")
def _pick(indptr, indices, cumw, u, v):
    # neighbor j of u with cumw[k-1] <= v < cumw[k]; cumw restarts at 0 per row
    lo = indptr[u]
    hi = indptr[u + 1]
    k = lo + np.searchsorted(cumw[lo:hi], v, side="right")
    if k >= hi:
        k = hi - 1
    return indices[k]


@njit(cache=True)
def wilson(indptr, indices, cumw, deg, q, x_mask, conditional, nxt, in_tree, seen, first_root):
    """Fill ``nxt`` with one forest; return the number of occupancies.

    ``nxt[i]`` is the parent of i, or i itself for roots. ``first_root`` marks
    nodes absorbed on their first-ever occupancy. With ``conditional`` the
    nodes of ``x_mask`` are pre-installed roots and every other node's first
    occupancy is forced to move on.
    """
    n = len(deg)
    for i in range(n):
        in_tree[i] = False
        seen[i] = False
        first_root[i] = False
        nxt[i] = _UNSET
    if conditional:
        for i in range(n):
            if x_mask[i]:
                in_tree[i] = True
                seen[i] = True
                first_root[i] = True
                nxt[i] = i
    steps = 0
    for i in range(n):
        u = i
        while not in_tree[u]:
            steps += 1
            du = deg[u]
            r = np.random.random()
            first = not seen[u]
            seen[u] = True
            if conditional and first:
                v = r * du
            else:
                v = r * (q + du) - q
                if v < 0.0:
                    nxt[u] = u
                    if first:
                        first_root[u] = True
                    break
            j = _pick(indptr, indices, cumw, u, v)
            nxt[u] = j
            u = j
        u = i
        while not in_tree[u]:
            in_tree[u] = True
            u = nxt[u]
    return steps


@njit(cache=True)
def resolve_roots(nxt, root_of):
    """Follow parents to roots, writing ``root_of``; return the root count."""
    n = len(nxt)
    count = 0
    for i in range(n):
        if nxt[i] == i:
            root_of[i] = i
            count += 1
        else:
            root_of[i] = _UNSET
    for i in range(n):
        u = i
        while root_of[u] == _UNSET:
            u = nxt[u]
        r = root_of[u]
        u = i
        while root_of[u] == _UNSET:
            root_of[u] = r
            u = nxt[u]
    return count


@njit(cache=True)
def tree_labels(root_of, tree_id, sizes):
    """Number trees by increasing root id; fill ``tree_id`` and ``sizes``."""
    n = len(root_of)
    k = 0
    for i in range(n):
        if root_of[i] == i:
            tree_id[i] = k
            k += 1
    for t in range(k):
        sizes[t] = 0
    for i in range(n):
        t = tree_id[root_of[i]]
        tree_id[i] = t
        sizes[t] += 1
    return k


@njit(cache=True)
def c_tilde_sum(indptr, indices, weights, root_of):
    """Sum of w(i,j) over roots i and neighbors j not rooted at i; also edge visits."""
    total = 0.0
    visits = 0
    n = len(root_of)
    for i in range(n):
        if root_of[i] != i:
            continue
        for k in range(indptr[i], indptr[i + 1]):
            visits += 1
            if root_of[indices[k]] != i:
                total += weights[k]
    return total, visits


@njit(cache=True)
def c_bar_sum(indptr, indices, weights, tree_id, sizes):
    """Boundary weight of each node's tree, scaled by 1/|tree|, summed over nodes."""
    total = 0.0
    visits = 0
    n = len(tree_id)
    for i in range(n):
        ti = tree_id[i]
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            visits += 1
            if tree_id[indices[k]] != ti:
                acc += weights[k]
        total += acc / sizes[ti]
    return total, visits


def _forest_batch(indptr, indices, cumw, weights, deg, q, seeds, want_cv, out):
    """Columns of ``out``: roots, first-visit roots, steps, c_tilde sum, c_bar sum."""
    n = len(deg)
    dummy = np.zeros(1, dtype=np.bool_)
    for s in prange(len(seeds)):
        nxt = np.empty(n, dtype=np.int64)
        in_tree = np.empty(n, dtype=np.bool_)
        seen = np.empty(n, dtype=np.bool_)
        first_root = np.empty(n, dtype=np.bool_)
        root_of = np.empty(n, dtype=np.int64)
        np.random.seed(seeds[s])
        steps = wilson(indptr, indices, cumw, deg, q, dummy, False, nxt, in_tree, seen, first_root)
        nroots = resolve_roots(nxt, root_of)
        out[s, 0] = nroots
        out[s, 1] = first_root.sum()
        out[s, 2] = steps
        if want_cv:
            tree_id = np.empty(n, dtype=np.int64)
            sizes = np.empty(n, dtype=np.int64)
            tree_labels(root_of, tree_id, sizes)
            out[s, 3] = c_tilde_sum(indptr, indices, weights, root_of)[0]
            out[s, 4] = c_bar_sum(indptr, indices, weights, tree_id, sizes)[0]


def _stratum_batch(indptr, indices, cumw, deg, q, p_root, lo, hi, max_attempts, seeds, out):
    """Rejection-sample root sets with size in [lo, hi], then conditional forests.

    Columns of ``out``: roots, attempts, steps. ``attempts`` is -1 on failure.
    """
    n = len(deg)
    for s in prange(len(seeds)):
        nxt = np.empty(n, dtype=np.int64)
        in_tree = np.empty(n, dtype=np.bool_)
        seen = np.empty(n, dtype=np.bool_)
        first_root = np.empty(n, dtype=np.bool_)
        root_of = np.empty(n, dtype=np.int64)
        x_mask = np.empty(n, dtype=np.bool_)
        np.random.seed(seeds[s])
        attempts = 0
        ok = False
        while attempts < max_attempts:
            attempts += 1
            c = 0
            for i in range(n):
                b = np.random.random() < p_root[i]
                x_mask[i] = b
                if b:
                    c += 1
            if lo <= c <= hi:
                ok = True
                break
        if not ok:
            out[s, 0] = 0
            out[s, 1] = -1
            out[s, 2] = 0
            continue
        steps = wilson(indptr, indices, cumw, deg, q, x_mask, True, nxt, in_tree, seen, first_root)
        out[s, 0] = resolve_roots(nxt, root_of)
        out[s, 1] = attempts
        out[s, 2] = steps


forest_batch = njit(cache=True)(_forest_batch)
forest_batch_parallel = njit(cache=True, parallel=True)(_forest_batch)
stratum_batch = njit(cache=True)(_stratum_batch)
stratum_batch_parallel = njit(cache=True, parallel=True)(_stratum_batch)


@njit(cache=True)
def parent_batch(indptr, indices, cumw, deg, q, x_mask, conditional, seeds, parents, first, steps):
    """Store the parent array and first-visit mask of every sample (small graphs)."""
    n = len(deg)
    in_tree = np.empty(n, dtype=np.bool_)
    seen = np.empty(n, dtype=np.bool_)
    for s in range(len(seeds)):
        np.random.seed(seeds[s])
        steps[s] = wilson(indptr, indices, cumw, deg, q, x_mask, conditional,
                          parents[s], in_tree, seen, first[s])
