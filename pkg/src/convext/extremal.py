"""The extremal convex function under the integral constraint.

E(phi)(x) is the pointwise sup of convex psi with log integral
e^(psi - phi) <= 0. The fast path computes it as the conjugate of the
log-Laplace transform logZ(a) = log integral e^(a . x - phi(x)) dx, since
an affine a . x + b is feasible exactly when b <= -logZ(a) and every
convex function is the sup of its affine minorants. That dual identity is
validated against `extremal_oracle`, an independent primal maximization
over discretely convex node values, which returns certified feasible
lower bounds.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError, InputError
from .grids import (ConvexityReport, GridFunction, GridSpec,
                    ProductGridFunction, joint_check)
from .integrals import log_trapezoid_weights
from .transforms import legendre_transform

__all__ = [
    "ExtremalResult",
    "HatPhi",
    "log_laplace",
    "extremal_function",
    "extremal_oracle",
    "hat_phi",
]

ORACLE_MAX_NODES = 100


@dataclass(frozen=True, eq=False)
class ExtremalResult:
    """E on the x grid, logZ on the dual grid, and the recorded (not
    asserted) log integral of e^(E - phi)."""

    E: GridFunction
    logZ: GridFunction
    feasibility_residual: float


@dataclass(frozen=True, eq=False)
class HatPhi:
    """Slicewise extremal function of a product weight, with the joint
    convexity probe attached."""

    values: ProductGridFunction
    joint_convexity: ConvexityReport


def log_laplace(phi: GridFunction, dual_spec: GridSpec) -> GridFunction:
    """logZ(a) = log integral e^(a . x - phi(x)) dx on the dual grid.

    Convex in a (a discrete Hoelder inequality, exact for the sum); +inf
    regions of phi carry no mass.
    """
    if dual_spec.dim != phi.spec.dim:
        raise DomainError("dual grid dimension does not match phi")
    xp = phi.spec.points()
    ap = dual_spec.points()
    lw = log_trapezoid_weights(phi.spec).reshape(-1)
    with np.errstate(invalid="ignore"):
        base = -phi.flat + lw
    base[np.isnan(base)] = -np.inf
    E = ap @ xp.T + base[None, :]
    vals = _kernels.logsumexp_rows(E) + np.log(phi.spec.cell_volume)
    return GridFunction(dual_spec, vals)


def extremal_function(phi: GridFunction, dual_spec: GridSpec) -> ExtremalResult:
    """E(phi) via the dual identity: conjugate of logZ back onto phi's grid.

    `dual_spec` should cover a padded slope range of phi, otherwise the
    sup over affine minorants is truncated. The feasibility residual of E
    itself is recorded for study; the sup of feasible functions need not
    be feasible.
    """
    logZ = log_laplace(phi, dual_spec)
    E = legendre_transform(logZ, phi.spec)
    lw = log_trapezoid_weights(phi.spec).reshape(-1)
    with np.errstate(invalid="ignore"):
        expo = E.flat - phi.flat + lw
    expo[np.isnan(expo)] = -np.inf
    feas = _kernels.logsumexp_1d(np.ascontiguousarray(expo)) + np.log(phi.spec.cell_volume)
    return ExtremalResult(E=E, logZ=logZ, feasibility_residual=float(feas))


def _curvature_matrix(n: int, h: float, x0: int) -> tuple[np.ndarray, np.ndarray]:
    """Map from (value, slope, nonneg curvatures) to 1-D node values."""
    L = np.zeros((n, n))
    L[:, 0] = 1.0
    idx = np.arange(n)
    L[:, 1] = h * idx
    for l in range(1, n - 1):
        L[:, l + 1] = h * np.maximum(0, idx - l)
    return L, L[x0]


def _line_hull(values: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Lower convex hull of (coords, values) evaluated at coords."""
    n = values.shape[0]
    hull = [0]
    for k in range(1, n):
        while len(hull) >= 2:
            a, m = hull[-2], hull[-1]
            cross = ((values[m] - values[a]) * (coords[k] - coords[a])
                     - (values[k] - values[a]) * (coords[m] - coords[a]))
            if cross >= 0:  # m on or above chord a->k
                hull.pop()
            else:
                break
        hull.append(k)
    return np.interp(coords, coords[hull], values[hull])


def extremal_oracle(phi: GridFunction, x0_index, iterations: int = 3000) -> float:
    """Primal lower bound for E(phi) at a grid node.

    Maximizes psi(x0) over node values psi subject to (i) discrete
    convexity (second differences >= 0 along axis and diagonal lines) and
    (ii) the trapezoid integral constraint, by projected subgradient
    ascent from the always-feasible start psi = phi - log(box volume).
    Every iterate is certified: it is projected into the convexity cone
    and shifted down by any positive integral residual before its value
    at x0 is recorded, so the returned value is a feasible lower bound.
    Deterministic for a given iteration count.
    """
    spec = phi.spec
    if spec.dim not in (1, 2):
        raise InputError("the oracle handles 1-D and 2-D grids")
    if spec.size > ORACLE_MAX_NODES:
        raise InputError(f"the oracle is limited to {ORACLE_MAX_NODES} nodes")
    if iterations < 1:
        raise InputError("iterations must be >= 1")
    if np.isinf(phi.values).any():
        raise InputError("the oracle requires finite phi")
    if isinstance(x0_index, (tuple, list)):
        x0 = int(np.ravel_multi_index(tuple(x0_index), spec.counts))
    else:
        x0 = int(x0_index)

    lw = np.exp(log_trapezoid_weights(spec).reshape(-1)) * spec.cell_volume
    phif = phi.flat

    def residual(psi_flat: np.ndarray) -> float:
        z = psi_flat - phif
        m = z.max()
        return float(m + np.log(np.sum(lw * np.exp(z - m))))

    def softmax(psi_flat: np.ndarray) -> np.ndarray:
        z = psi_flat - phif
        p = lw * np.exp(z - z.max())
        return p / p.sum()

    # Shifting psi by -residual(psi) keeps convexity and makes the integral
    # constraint tight, so the constrained sup equals the unconstrained
    # maximum of F(psi) = psi(x0) - residual(psi) over the convexity cone,
    # and F of any cone member is a certified feasible value.
    start = phif - np.log(spec.volume)

    if spec.dim == 1:
        n = spec.counts[0]
        h = spec.steps[0]
        L, row0 = _curvature_matrix(n, h, x0)
        theta = np.zeros(n)
        theta[0] = start[0]
        theta[1] = (start[1] - start[0]) / h
        theta[2:] = np.maximum(np.diff(start, 2) / h, 0.0)

        def F(th):
            psi = L @ th
            return psi[x0] - residual(psi), psi

        eta = 1.0
        Fv, psi = F(theta)
        best = Fv
        for _ in range(iterations):
            grad = row0 - L.T @ softmax(psi)
            while True:
                cand = theta + eta * grad
                cand[2:] = np.maximum(cand[2:], 0.0)
                Fc, psic = F(cand)
                if Fc >= Fv + 1e-14 or eta < 1e-13:
                    break
                eta *= 0.5
            if Fc > Fv:
                theta, Fv, psi = cand, Fc, psic
                best = max(best, Fv)
            eta = min(eta * 2.0, 1e6)
        return float(best)

    # 2-D: ascend F on node values, restoring discrete convexity after each
    # step by monotone hull sweeps along axis and diagonal lines
    coords = [spec.coords(0), spec.coords(1)]
    n0, n1 = spec.counts
    diag_step = float(np.hypot(spec.steps[0], spec.steps[1]))

    def convexify(v: np.ndarray, sweeps: int = 80) -> np.ndarray:
        v = v.reshape(n0, n1).copy()
        for _ in range(sweeps):
            before = v.copy()
            for i in range(n0):
                v[i] = _line_hull(v[i], coords[1])
            for j in range(n1):
                v[:, j] = _line_hull(v[:, j], coords[0])
            for flip in (False, True):
                w = np.fliplr(v) if flip else v
                for off in range(-(n0 - 1), n1):
                    diag = np.diagonal(w, offset=off).copy()
                    if diag.size >= 3:
                        t = np.arange(diag.size) * diag_step
                        ii = np.arange(max(0, -off), max(0, -off) + diag.size)
                        w[ii, ii + off] = _line_hull(diag, t)
                if flip:
                    v = np.fliplr(w)
                else:
                    v = w
            if np.max(np.abs(v - before)) <= 1e-13:
                break
        return v.reshape(-1)

    def F2(psi_flat):
        return psi_flat[x0] - residual(psi_flat)

    # affine ascent track: psi_a = a . (x - x0) has F2 = -residual, concave
    # and smooth in the slope a; max over cone members of F2 is attained on
    # an affine function, and max-combining two cone members stays in the
    # cone, so the node iterate may absorb the affine track.
    base = spec.points() - spec.points()[x0]

    a = np.zeros(2)
    eta_a = 1.0
    Fa = F2(base @ a)
    for _ in range(min(iterations, 200)):
        grad_a = -(softmax(base @ a) @ base)
        while True:
            cand_a = a + eta_a * grad_a
            Fc = F2(base @ cand_a)
            if Fc >= Fa + 1e-14 or eta_a < 1e-13:
                break
            eta_a *= 0.5
        if Fc > Fa:
            a, Fa = cand_a, Fc
        eta_a = min(eta_a * 2.0, 1e6)

    psi = start.copy()
    e0 = np.zeros(spec.size)
    e0[x0] = 1.0
    eta = 1.0
    Fv = F2(psi)
    best = max(Fv, Fa)
    aff = base @ a
    for k in range(iterations):
        if k % 10 == 0:
            merged = np.maximum(psi, aff - residual(aff))
            Fm = F2(merged)
            if Fm > Fv:
                psi, Fv = merged, Fm
        grad = e0 - softmax(psi)
        while True:
            cand = convexify(psi + eta * grad)
            Fc = F2(cand)
            if Fc >= Fv + 1e-14 or eta < 1e-13:
                break
            eta *= 0.5
        if Fc > Fv:
            psi, Fv = cand, Fc
            best = max(best, Fv)
        eta = min(eta * 2.0, 1e6)
    return float(best)


def hat_phi(phi: ProductGridFunction, dual_spec: GridSpec, *,
            samples: int = 1000, seed: int = 0) -> HatPhi:
    """Slicewise extremal function: out(t, .) = E(phi(t, .)) for every t
    node, with the joint convexity probe attached. Slices run in up to
    EXTENDER_THREADS worker threads (results independent of schedule)."""
    n_t = phi.n_slices
    out = np.empty((n_t, phi.x_spec.size))

    def work(j: int) -> None:
        try:
            res = extremal_function(phi.slice(j), dual_spec)
        except Exception as exc:
            raise DomainError(f"extremal function failed on t slice {j}: {exc}") from exc
        out[j] = res.E.flat

    threads = int(os.environ.get("EXTENDER_THREADS", "1") or "1")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(work, range(n_t)))
    else:
        for j in range(n_t):
            work(j)
    values = ProductGridFunction(phi.t_spec, phi.x_spec, out)
    return HatPhi(values=values, joint_convexity=joint_check(values, samples=samples, seed=seed))
