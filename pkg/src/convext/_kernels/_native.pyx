# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels, mirroring `_fallback` semantics.

The pairwise log-sum-exp tree is identical to the fallback's adjacent-pair
halving, so both backends are deterministic and agree to exp() rounding.
exp arguments below the IEEE underflow threshold are skipped: the result
is bit-identical (the term is exactly 0.0) and most mixture entries are
that far below the max in the contraction loop's hot path.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

BACKEND = "native"

cdef double UNDERFLOW = -746.0  # exp() is exactly +0.0 below this


cdef double _tree_sum(double* buf, Py_ssize_t n) nogil:
    cdef Py_ssize_t half, i
    while n > 1:
        half = n // 2
        for i in range(half):
            buf[i] = buf[2 * i] + buf[2 * i + 1]
        if n % 2:
            buf[half] = buf[n - 1]
            n = half + 1
        else:
            n = half
    return buf[0]


cdef double _lse_line(const double* v, Py_ssize_t n, double* scratch) nogil:
    cdef double m = -INFINITY
    cdef Py_ssize_t i
    cdef double d
    for i in range(n):
        if v[i] > m:
            m = v[i]
    if m == -INFINITY:
        return -INFINITY
    for i in range(n):
        d = v[i] - m
        scratch[i] = exp(d) if d > UNDERFLOW else 0.0
    return m + log(_tree_sum(scratch, n))


def logsumexp_1d(v):
    cdef cnp.ndarray[double, ndim=1] a = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    if n == 0:
        return -INFINITY
    cdef cnp.ndarray[double, ndim=1] scratch = np.empty(n)
    return _lse_line(&a[0], n, &scratch[0])


def logsumexp_rows(V):
    cdef cnp.ndarray[double, ndim=2] A = np.ascontiguousarray(V, dtype=np.float64)
    cdef Py_ssize_t L = A.shape[0], n = A.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(L)
    cdef cnp.ndarray[double, ndim=1] scratch = np.empty(max(n, 1))
    cdef Py_ssize_t l
    for l in range(L):
        out[l] = _lse_line(&A[l, 0], n, &scratch[0])
    return out


def mixture_lse(A, lw, M):
    """out[t, x] = LSE_c(A[c, x] + lw[c] + M[c, t]); tree over c."""
    cdef cnp.ndarray[double, ndim=2] At = np.ascontiguousarray(
        np.asarray(A, dtype=np.float64).T)          # (X, C)
    cdef cnp.ndarray[double, ndim=1] w = np.ascontiguousarray(lw, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] Mt = np.ascontiguousarray(
        np.asarray(M, dtype=np.float64).T)          # (T, C)
    cdef Py_ssize_t X = At.shape[0], C = At.shape[1], T = Mt.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((T, X))
    cdef cnp.ndarray[double, ndim=1] scratch = np.empty(C)
    cdef cnp.ndarray[double, ndim=1] wrow = np.empty(C)
    cdef Py_ssize_t t, x, c
    cdef double m, val, d
    with nogil:
        for t in range(T):
            for c in range(C):
                wrow[c] = w[c] + Mt[t, c]
            for x in range(X):
                m = -INFINITY
                for c in range(C):
                    val = At[x, c] + wrow[c]
                    scratch[c] = val
                    if val > m:
                        m = val
                if m == -INFINITY:
                    out[t, x] = -INFINITY
                    continue
                for c in range(C):
                    d = scratch[c] - m
                    scratch[c] = exp(d) if d > UNDERFLOW else 0.0
                out[t, x] = m + log(_tree_sum(&scratch[0], C))
    return out


def tilted_lse(A, D):
    """out[c, t] = LSE_x(A[c, x] + D[t, x]); tree over x."""
    cdef cnp.ndarray[double, ndim=2] Ac = np.ascontiguousarray(A, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] Dc = np.ascontiguousarray(D, dtype=np.float64)
    cdef Py_ssize_t C = Ac.shape[0], X = Ac.shape[1], T = Dc.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((C, T))
    cdef cnp.ndarray[double, ndim=1] scratch = np.empty(X)
    cdef Py_ssize_t c, t, x
    cdef double m, val, d
    with nogil:
        for c in range(C):
            for t in range(T):
                m = -INFINITY
                for x in range(X):
                    val = Ac[c, x] + Dc[t, x]
                    scratch[x] = val
                    if val > m:
                        m = val
                if m == -INFINITY:
                    out[c, t] = -INFINITY
                    continue
                for x in range(X):
                    d = scratch[x] - m
                    scratch[x] = exp(d) if d > UNDERFLOW else 0.0
                out[c, t] = m + log(_tree_sum(&scratch[0], X))
    return out


def conjugate_lines(xs, F, xis):
    """out[l, j] = max_i(xs[i] * xis[j] - F[l, i]); hull sweep per line."""
    cdef cnp.ndarray[double, ndim=1] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] Fc = np.ascontiguousarray(F, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] q = np.ascontiguousarray(xis, dtype=np.float64)
    cdef Py_ssize_t L = Fc.shape[0], N = Fc.shape[1], Mn = q.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.full((L, Mn), -INFINITY)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] hull = np.empty(N, dtype=np.int64)
    cdef Py_ssize_t l, i, j, hn, p
    cdef long double xa, fa, xm, fm, xk, fk, cross
    cdef double xi, best, cand
    cdef cnp.int64_t a, m
    with nogil:
        for l in range(L):
            hn = 0
            for i in range(N):
                fk = Fc[l, i]
                if fk == INFINITY:
                    continue
                xk = x[i]
                while hn >= 2:
                    a = hull[hn - 2]
                    m = hull[hn - 1]
                    xa = x[a]
                    fa = Fc[l, a]
                    xm = x[m]
                    fm = Fc[l, m]
                    cross = (fm - fa) * (xk - xa) - (fk - fa) * (xm - xa)
                    if cross >= 0:  # m on or above chord a -> k
                        hn -= 1
                    else:
                        break
                hull[hn] = i
                hn += 1
            if hn == 0:
                continue
            p = 0
            for j in range(Mn):
                xi = q[j]
                best = x[hull[p]] * xi - Fc[l, hull[p]]
                while p + 1 < hn:
                    cand = x[hull[p + 1]] * xi - Fc[l, hull[p + 1]]
                    if cand > best:
                        p += 1
                        best = cand
                    else:
                        break
                out[l, j] = best
    return out


def interp_eval(los, steps, counts, values, points):
    """Multilinear interpolation; +inf corners count only with weight > 0."""
    cdef cnp.ndarray[double, ndim=1] lo = np.ascontiguousarray(los, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] st = np.ascontiguousarray(steps, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cn = np.ascontiguousarray(counts, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] vals = np.ascontiguousarray(
        np.asarray(values, dtype=np.float64).reshape(-1))
    cdef cnp.ndarray[double, ndim=2] pts = np.ascontiguousarray(
        np.atleast_2d(np.asarray(points, dtype=np.float64)))
    cdef Py_ssize_t P = pts.shape[0], d = pts.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(P)
    if d == 0:
        out[:] = vals[0]
        return out
    cdef cnp.ndarray[cnp.int64_t, ndim=1] strides = np.ones(d, dtype=np.int64)
    cdef Py_ssize_t k
    for k in range(d - 2, -1, -1):
        strides[k] = strides[k + 1] * cn[k + 1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx = np.empty(d, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] frac = np.empty(d)
    cdef Py_ssize_t pnt, corner, b
    cdef cnp.int64_t i, offs
    cdef double pv, xi, xip, w, v, acc
    cdef bint inf_hit
    with nogil:
        for pnt in range(P):
            for k in range(d):
                pv = pts[pnt, k]
                i = <cnp.int64_t>((pv - lo[k]) / st[k])
                if i < 0:
                    i = 0
                if i > cn[k] - 2:
                    i = cn[k] - 2
                xi = lo[k] + i * st[k]
                if pv < xi and i > 0:
                    i -= 1
                    xi = lo[k] + i * st[k]
                xip = lo[k] + (i + 1) * st[k]
                if pv > xip and i < cn[k] - 2:
                    i += 1
                    xi = lo[k] + i * st[k]
                    xip = lo[k] + (i + 1) * st[k]
                idx[k] = i
                frac[k] = (pv - xi) / (xip - xi)
            acc = 0.0
            inf_hit = False
            for corner in range(1 << d):
                w = 1.0
                offs = 0
                for k in range(d):
                    if (corner >> k) & 1:
                        w *= frac[k]
                        offs += strides[k]
                    else:
                        w *= 1.0 - frac[k]
                for k in range(d):
                    offs += idx[k] * strides[k]
                v = vals[offs]
                if v == INFINITY:
                    if w > 0.0:
                        inf_hit = True
                else:
                    acc += w * v
            out[pnt] = INFINITY if inf_hit else acc
    return out
