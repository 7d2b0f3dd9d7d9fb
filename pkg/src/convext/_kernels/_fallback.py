"""Pure-numpy implementations of the hot kernels.

This module is the reference backend; `convext._kernels._native` mirrors it
with compiled loops. Both use the same fixed pairwise reduction tree for
log-sum-exp so that results are deterministic for a given backend and agree
across backends to rounding noise.
"""

import numpy as np

BACKEND = "python"

_NEG_INF = float("-inf")


def _pairwise_tree_sum(a, axis):
    """Sum `a` along `axis` with an adjacent-pair halving tree.

    The tree shape (pairs (0,1), (2,3), ..., odd tail carried) is part of
    the backend contract.
    """
    a = np.moveaxis(a, axis, -1)
    n = a.shape[-1]
    while n > 1:
        half = n // 2
        head = a[..., 0:2 * half:2] + a[..., 1:2 * half:2]
        if n % 2:
            a = np.concatenate([head, a[..., n - 1:n]], axis=-1)
            n = half + 1
        else:
            a = head
            n = half
    return a[..., 0]


def logsumexp_1d(v):
    """log(sum_i exp(v[i])) with max shift; -inf entries contribute zero."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.size == 0:
        return _NEG_INF
    m = float(np.max(v))
    if m == _NEG_INF:
        return _NEG_INF
    return m + float(np.log(_pairwise_tree_sum(np.exp(v - m), axis=0)))


def logsumexp_rows(V):
    """Row-wise logsumexp of a 2-D array, same tree as logsumexp_1d."""
    V = np.ascontiguousarray(V, dtype=np.float64)
    m = np.max(V, axis=1)
    finite = m != _NEG_INF
    out = np.full(V.shape[0], _NEG_INF)
    if np.any(finite):
        W = V[finite] - m[finite, None]
        out[finite] = m[finite] + np.log(_pairwise_tree_sum(np.exp(W), axis=1))
    return out


def mixture_lse(A, lw, M):
    """out[t, x] = LSE_c(A[c, x] + lw[c] + M[c, t]).

    A: (C, X) component values on the x grid, lw: (C,) log-weights,
    M: (C, T) per-component offsets per t node. Reduction tree over c.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    lw = np.ascontiguousarray(lw, dtype=np.float64)
    M = np.ascontiguousarray(M, dtype=np.float64)
    C, X = A.shape
    T = M.shape[1]
    out = np.empty((T, X))
    base = A + lw[:, None]
    for t in range(T):
        V = base + M[:, t][:, None]
        m = V.max(axis=0)
        out[t] = m + np.log(_pairwise_tree_sum(np.exp(V - m[None, :]), axis=0))
    return out


def tilted_lse(A, D):
    """out[c, t] = LSE_x(A[c, x] + D[t, x]).

    -inf entries of D mark excluded cells. Reduction tree over x.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    D = np.ascontiguousarray(D, dtype=np.float64)
    C, X = A.shape
    T = D.shape[0]
    out = np.empty((C, T))
    for t in range(T):
        V = A + D[t][None, :]
        m = V.max(axis=1)
        ok = m != _NEG_INF
        row = np.full(C, _NEG_INF)
        if np.any(ok):
            W = V[ok] - m[ok, None]
            W[np.isnan(W)] = _NEG_INF  # -inf cell at the row max
            row[ok] = m[ok] + np.log(_pairwise_tree_sum(np.exp(W), axis=1))
        out[:, t] = row
    return out


def _lower_hull(xs, fs):
    """Indices of the lower convex hull of the points (xs[k], fs[k]).

    xs strictly increasing. The cross test runs in doubles, re-evaluated in
    extended precision only near ties, so near-collinear points cannot cost
    more than ~1 ulp in conjugate values.
    """
    xs = xs.tolist()
    fs = fs.tolist()
    ld = np.longdouble
    hull = []
    for k in range(len(xs)):
        xk = xs[k]
        fk = fs[k]
        while len(hull) >= 2:
            a, m = hull[-2], hull[-1]
            xa, fa = xs[a], fs[a]
            u = (fs[m] - fa) * (xk - xa)
            v = (fk - fa) * (xs[m] - xa)
            cross = u - v
            if abs(cross) <= 1e-12 * (abs(u) + abs(v)):
                cross = float((ld(fs[m]) - ld(fa)) * (ld(xk) - ld(xa))
                              - (ld(fk) - ld(fa)) * (ld(xs[m]) - ld(xa)))
            if cross >= 0:  # m on or above chord a->k
                hull.pop()
            else:
                break
        hull.append(k)
    return hull


def conjugate_lines(xs, F, xis):
    """out[l, j] = max_i(xs[i] * xis[j] - F[l, i]).

    +inf entries of F never attain the max; a line with no finite entry
    yields a -inf row. Linear-time hull sweep per line; xis must be
    increasing.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    F = np.ascontiguousarray(F, dtype=np.float64)
    xis = np.ascontiguousarray(xis, dtype=np.float64)
    L, N = F.shape
    Mn = xis.shape[0]
    xil = xis.tolist()
    out = np.full((L, Mn), _NEG_INF)
    for l in range(L):
        f = F[l]
        finite = np.isfinite(f)
        if not finite.any():
            continue
        xf = xs[finite]
        ff = f[finite]
        hull = _lower_hull(xf, ff)
        hx = xf[hull].tolist()
        hf = ff[hull].tolist()
        p = 0
        last = len(hull) - 1
        row = [0.0] * Mn
        for j in range(Mn):
            xi = xil[j]
            best = hx[p] * xi - hf[p]
            while p < last:
                cand = hx[p + 1] * xi - hf[p + 1]
                if cand > best:
                    p += 1
                    best = cand
                else:
                    break
            row[j] = best
        out[l] = row
    return out


def interp_eval(los, steps, counts, values, points):
    """Multilinear interpolation of a row-major grid at `points` (P, d).

    Corners with value +inf force +inf only when their weight is nonzero,
    so node values are reproduced exactly at nodes. Points are assumed to
    lie inside the box (callers validate).
    """
    los = np.asarray(los, dtype=np.float64)
    steps = np.asarray(steps, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    P, d = points.shape
    if d == 0:
        return np.full(P, float(values.reshape(-1)[0]))
    vals = values.reshape(-1)

    idx = np.empty((P, d), dtype=np.int64)
    frac = np.empty((P, d))
    for k in range(d):
        p = points[:, k]
        lo, st, cnt = los[k], steps[k], int(counts[k])
        i = np.clip(np.floor((p - lo) / st).astype(np.int64), 0, cnt - 2)
        xi = lo + i * st
        low = (p < xi) & (i > 0)
        i[low] -= 1
        xi = lo + i * st
        xip = lo + (i + 1) * st
        high = (p > xip) & (i < cnt - 2)
        i[high] += 1
        xi = lo + i * st
        xip = lo + (i + 1) * st
        idx[:, k] = i
        frac[:, k] = (p - xi) / (xip - xi)

    strides = np.ones(d, dtype=np.int64)
    for k in range(d - 2, -1, -1):
        strides[k] = strides[k + 1] * counts[k + 1]

    out = np.zeros(P)
    is_inf = np.zeros(P, dtype=bool)
    base = idx @ strides
    for corner in range(1 << d):
        offs = np.zeros(P, dtype=np.int64)
        w = np.ones(P)
        for k in range(d):
            if corner >> k & 1:
                offs += strides[k]
                w = w * frac[:, k]
            else:
                w = w * (1.0 - frac[:, k])
        v = vals[base + offs]
        vinf = np.isinf(v)
        is_inf |= vinf & (w > 0.0)
        out += w * np.where(vinf, 0.0, v)
    out[is_inf] = np.inf
    return out
