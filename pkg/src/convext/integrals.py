"""Stable log-domain quadrature on grids.

The normative quadrature is the trapezoid rule on the uniform grid: node
weight 2^-(number of axes on which the node is a boundary node) times the
cell volume. Everything is computed and stored in log space; exp of a grid
function is never materialized unshifted. The summation order is a fixed
pairwise tree so results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError, ShapeError
from .grids import GridFunction, GridSpec, ProductGridFunction
from .transforms import AffineFunction

__all__ = [
    "LogIntegralResult",
    "log_integral",
    "normalization_gap",
    "prekopa_marginal",
    "tilted_marginal",
    "constraint_residuals",
    "log_trapezoid_weights",
]

INF = float("inf")
UNDERFLOW_NATS = 745.0


@dataclass(frozen=True)
class LogIntegralResult:
    """log of a trapezoid integral of e^g, plus the fraction of nodes more
    than 745 nats below the maximum of the weighted integrand."""

    value: float
    underflow_fraction: float


def log_trapezoid_weights(spec: GridSpec) -> np.ndarray:
    """log of the per-node trapezoid weights (without the cell volume)."""
    w = np.zeros(spec.counts)
    for axis in range(spec.dim):
        edge = np.zeros(spec.counts[axis])
        edge[0] = edge[-1] = -np.log(2.0)
        shape = [1] * spec.dim
        shape[axis] = spec.counts[axis]
        w = w + edge.reshape(shape)
    return w


def _log_integral_raw(exponent: np.ndarray, spec: GridSpec) -> LogIntegralResult:
    """LSE of exponent + log trapezoid weights + log cell volume.

    -inf entries are excluded mass (zero integrand); raises if nothing is
    finite.
    """
    g = exponent + log_trapezoid_weights(spec)
    flat = np.ascontiguousarray(g.reshape(-1))
    m = float(np.max(flat))
    if m == -INF:
        raise DomainError("integrand has no finite cells")
    value = _kernels.logsumexp_1d(flat) + np.log(spec.cell_volume)
    under = float(np.count_nonzero(flat < m - UNDERFLOW_NATS)) / flat.size
    return LogIntegralResult(value=float(value), underflow_fraction=under)


def log_integral(g: GridFunction) -> LogIntegralResult:
    """log of the trapezoid integral of e^g over the box of g.

    The exponent must be real wherever it is integrated, so +inf values
    are a domain error here (use the marginal operations for weights with
    excluded regions).
    """
    if np.isinf(g.values).any():
        raise DomainError("log_integral requires a finite exponent (+inf found)")
    return _log_integral_raw(g.values, g.spec)


def normalization_gap(psi: GridFunction, phi0: GridFunction) -> float:
    """c = log integral of e^(psi - phi0); zero means the normalization
    holds, and callers renormalize by psi <- psi - c.

    +inf in phi0 is excluded mass; +inf in psi is a domain error.
    """
    if psi.spec != phi0.spec:
        raise ShapeError("psi and phi0 live on different grids")
    if np.isinf(psi.values).any():
        raise DomainError("psi must be finite for the normalization integral")
    with np.errstate(invalid="ignore"):
        e = psi.values - phi0.values
    e[np.isnan(e)] = -INF
    return _log_integral_raw(e, psi.spec).value


def prekopa_marginal(phi: ProductGridFunction) -> GridFunction:
    """Marginal in log form: out(t) = -log integral of e^(-phi(t, x)) dx.

    For jointly convex phi this is convex in t; the suite checks that
    numerically (it is the content of the marginal convexity theorem).
    """
    mat = phi.slices_matrix
    lw = log_trapezoid_weights(phi.x_spec).reshape(-1)
    logv = np.log(phi.x_spec.cell_volume)
    with np.errstate(invalid="ignore"):
        E = -mat + lw[None, :]
    E[np.isnan(E)] = -INF
    vals = _kernels.logsumexp_rows(E)
    bad = np.flatnonzero(vals == -INF)
    if bad.size:
        raise DomainError(f"t slice {int(bad[0])} is entirely +inf")
    return GridFunction(phi.t_spec, -(vals + logv))


def tilted_marginal(phi: ProductGridFunction, a: AffineFunction) -> GridFunction:
    """Marginal of the tilted weight phi - (a . x + b), anchored to zero at
    the t = 0 node: out(t) = -log integral e^-(phi(t,x) - a.x - b) dx,
    shifted so out(0) = 0."""
    if a.dim != phi.x_spec.dim:
        raise ShapeError("affine slope dimension does not match the x grid")
    j0 = phi.t_zero_index()
    lin = a(phi.x_spec.points())
    lw = log_trapezoid_weights(phi.x_spec).reshape(-1)
    with np.errstate(invalid="ignore"):
        E = -phi.slices_matrix + (lin + lw)[None, :]
    E[np.isnan(E)] = -INF
    vals = _kernels.logsumexp_rows(E)
    bad = np.flatnonzero(vals == -INF)
    if bad.size:
        raise DomainError(f"t slice {int(bad[0])} is entirely +inf")
    marg = -(vals + np.log(phi.x_spec.cell_volume))
    return GridFunction(phi.t_spec, marg - marg[j0])


def constraint_residuals(Psi: ProductGridFunction, phi: ProductGridFunction) -> np.ndarray:
    """residual(j) = log integral e^(Psi(t_j, x) - phi(t_j, x)) dx for every
    flat t index j; the extension constraint holds iff max <= tolerance."""
    if Psi.t_spec != phi.t_spec or Psi.x_spec != phi.x_spec:
        raise ShapeError("Psi and phi live on different product grids")
    if np.isinf(Psi.values).any():
        raise DomainError("Psi must be finite for constraint residuals")
    lw = log_trapezoid_weights(phi.x_spec).reshape(-1)
    with np.errstate(invalid="ignore"):
        E = Psi.slices_matrix - phi.slices_matrix + lw[None, :]
    E[np.isnan(E)] = -INF
    vals = _kernels.logsumexp_rows(E)
    if (vals == -INF).any():
        raise DomainError("a t slice has no finite integrand cells")
    return vals + np.log(phi.x_spec.cell_volume)
