"""Shared generators for the test suite.

Generators are all seeded; grids with dyadic endpoints and power-of-two
cell counts keep node coordinates exactly representable where tests assert
exact arithmetic.
"""

import numpy as np
import pytest

from convext.grids import GridFunction, GridSpec, ProductGridFunction
from convext.integrals import log_integral

HLOG2PI = 0.9189385332046727  # log(2*pi)/2
HLOGPI = 0.5723649429247001   # log(pi)/2


def random_psd(rng, k, x_axes=(), base=0.4, x_boost=0.8):
    B = rng.normal(size=(k, k)) * base
    P = B.T @ B + 0.2 * np.eye(k)
    for i in x_axes:
        P[i, i] += x_boost
    return P


def random_convex_gridfn(rng, spec, pieces=3, slope=1.0):
    """Random convex grid function: PSD quadratic plus a max of affines."""
    d = spec.dim
    P = random_psd(rng, d, x_axes=range(d))
    slopes = rng.uniform(-slope, slope, size=(pieces, d))
    offs = rng.uniform(-1.0, 1.0, size=pieces)

    def fn(pts):
        q = 0.5 * np.einsum("pi,ij,pj->p", pts, P, pts)
        return q + np.max(pts @ slopes.T + offs[None, :], axis=1)

    return GridFunction.sample(spec, fn)


def random_jointly_convex(rng, m=1, n=1, t_count=9, x_count=161, x_half=8.0,
                          t_kinks=True):
    """Random jointly convex weight, smooth in x (quadratic) with an
    optional max-affine part varying only along t, so marginals inherit
    convexity without quadrature phase error."""
    t_spec = GridSpec([(-1.0, 1.0, t_count)] * m)
    x_spec = GridSpec([(-x_half, x_half, x_count)] * n)
    P = random_psd(rng, m + n, x_axes=range(m, m + n))
    if t_kinks:
        ct = rng.uniform(-0.4, 0.4, size=(3, m))
        dt = rng.uniform(-0.3, 0.3, size=3)
    else:
        ct = np.zeros((1, m))
        dt = np.zeros(1)

    def fn(pts):
        q = 0.5 * np.einsum("pi,ij,pj->p", pts, P, pts)
        return q + np.max(pts[:, :m] @ ct.T + dt[None, :], axis=1)

    return ProductGridFunction.sample(t_spec, x_spec, fn)


def normalize_phi(phi):
    """Shift phi so the zero function is normalized against phi(0, .)."""
    j0 = phi.t_zero_index()
    c0 = -log_integral(GridFunction(phi.x_spec, -phi.slices_matrix[j0])).value
    return ProductGridFunction(phi.t_spec, phi.x_spec, phi.values + c0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
