"""Discrete Legendre conjugation, envelopes, slope ranges."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convext.errors import ShapeError
from convext.grids import GridFunction, GridSpec, tilt
from convext.transforms import (AffineFunction, auto_dual_spec, biconjugate,
                                legendre_transform, slope_range)

INF = float("inf")


def grid(lo, hi, count):
    return GridSpec([(lo, hi, count)])


def brute_conjugate(f, dual_spec):
    """Independent O(N*M) oracle written against the definition."""
    pts = f.spec.points()
    dpts = dual_spec.points()
    finite = np.isfinite(f.flat)
    vals = np.empty(dual_spec.size)
    for j in range(dual_spec.size):
        vals[j] = np.max(pts[finite] @ dpts[j] - f.flat[finite])
    return vals


class TestLegendre:
    def test_half_square_self_dual(self):
        f = GridFunction.sample(grid(-4, 4, 401), lambda p: 0.5 * p[:, 0] ** 2)
        d = grid(-3, 3, 301)
        g = legendre_transform(f, d)
        xi = d.coords(0)
        assert np.max(np.abs(g.values - 0.5 * xi ** 2)) <= 1e-3

    def test_abs_value_closed_form(self):
        R = 5.0
        f = GridFunction.sample(grid(-R, R, 501), lambda p: np.abs(p[:, 0]))
        d = grid(-3, 3, 241)
        g = legendre_transform(f, d)
        xi = d.coords(0)
        closed = np.where(np.abs(xi) <= 1, 0.0, R * (np.abs(xi) - 1.0))
        # node-sup error is O(h |xi|)
        h = f.spec.steps[0]
        assert np.max(np.abs(g.values - closed)) <= h * (1 + np.max(np.abs(xi)))

    def test_affine_at_its_slope(self):
        a, b = 0.75, -0.5
        f = GridFunction.sample(grid(-2, 2, 33), lambda p: a * p[:, 0] + b)
        d = grid(-1.25, 2.75, 17)  # node exactly at xi = a
        g = legendre_transform(f, d)
        xi = d.coords(0)
        j = int(np.argmin(np.abs(xi - a)))
        assert xi[j] == a
        assert g.values[j] == pytest.approx(-b, abs=1e-12)
        closed = 2.0 * np.abs(xi - a) - b
        assert np.max(np.abs(g.values - closed)) <= 1e-9

    def test_sweep_equals_direct_1d_2d(self):
        rng = np.random.default_rng(99)
        for _ in range(25):
            s = grid(-2, 2, int(rng.integers(5, 120)))
            f = GridFunction(s, rng.normal(size=s.size) * 5)
            d = grid(-4, 4, int(rng.integers(5, 90)))
            a = legendre_transform(f, d, "sweep")
            b = legendre_transform(f, d, "direct")
            assert np.max(np.abs(a.values - b.values)) <= 1e-12
        for _ in range(10):
            s = GridSpec([(-2, 2, int(rng.integers(4, 25))),
                          (-1, 3, int(rng.integers(4, 25)))])
            v = rng.normal(size=s.counts) * 5
            if rng.random() < 0.5:
                v[tuple(rng.integers(0, c) for c in s.counts)] = INF
            f = GridFunction(s, v)
            d = GridSpec([(-3, 3, int(rng.integers(4, 21))),
                          (-2, 2, int(rng.integers(4, 21)))])
            a = legendre_transform(f, d, "sweep")
            b = legendre_transform(f, d, "direct")
            assert np.max(np.abs(a.values - b.values)) <= 1e-12

    def test_sweep_matches_brute_oracle(self):
        rng = np.random.default_rng(5)
        s = GridSpec([(-2, 2, 13), (-1, 1, 11)])
        f = GridFunction(s, rng.normal(size=s.counts) * 3)
        d = GridSpec([(-2, 2, 9), (-2, 2, 7)])
        g = legendre_transform(f, d)
        assert np.max(np.abs(g.flat - brute_conjugate(f, d))) <= 1e-12

    def test_dim_mismatch(self):
        f = GridFunction(grid(0, 1, 3), [0.0, 1.0, 2.0])
        with pytest.raises(ShapeError):
            legendre_transform(f, GridSpec([(0, 1, 3), (0, 1, 3)]))

    @settings(max_examples=25, deadline=None, derandomize=True)
    @given(st.integers(0, 10 ** 6))
    def test_order_reversal(self, seed):
        rng = np.random.default_rng(seed)
        s = grid(-1, 1, 17)
        base = rng.normal(size=17) * 2
        f = GridFunction(s, base)
        g = GridFunction(s, base + rng.uniform(0, 1, size=17))
        d = grid(-3, 3, 21)
        cf = legendre_transform(f, d)
        cg = legendre_transform(g, d)
        assert np.all(cf.values >= cg.values)

    def test_tilt_identity_exact_on_dyadic_data(self):
        s = grid(-2, 2, 17)  # dyadic nodes
        rng = np.random.default_rng(3)
        vals = rng.integers(-64, 64, size=17) / 16.0
        f = GridFunction(s, vals)
        a = 0.5
        d1 = grid(-2, 2, 9)
        d2 = grid(-2 + a, 2 + a, 9)  # shifted dual nodes, still dyadic
        lhs = legendre_transform(tilt(f, AffineFunction([a], 0.0)), d1)
        rhs = legendre_transform(f, d2)
        assert np.array_equal(lhs.values, rhs.values)


class TestBiconjugate:
    def test_convex_recovered(self):
        f = GridFunction.sample(grid(-4, 4, 401), lambda p: 0.5 * p[:, 0] ** 2)
        g = biconjugate(f)
        assert np.max(np.abs(g.values - f.values)) <= 1e-3
        assert np.max(g.values - f.values) <= 1e-12  # never exceeds f

    def test_double_well_envelope(self):
        s = grid(-1, 3, 201)
        f = GridFunction.sample(s, lambda p: np.minimum(p[:, 0] ** 2,
                                                        (p[:, 0] - 2) ** 2))
        g = biconjugate(f)

        # brute-force envelope: minimum over all chords through node pairs
        x = s.coords(0)
        env = f.values.copy()
        for i in range(s.size):
            for j in range(i + 1, s.size):
                inside = slice(i, j + 1)
                lam = (x[inside] - x[i]) / (x[j] - x[i])
                chord = (1 - lam) * f.values[i] + lam * f.values[j]
                env[inside] = np.minimum(env[inside], chord)

        h = s.steps[0]
        srange = slope_range(f)[0]
        assert np.max(np.abs(g.values - env)) <= 2 * h * (srange[1] - srange[0])
        mid = int(np.argmin(np.abs(x - 1.0)))
        assert abs(g.values[mid]) <= 1e-6  # flat chord across the gap

    def test_affine_exact_at_nodes(self):
        f = GridFunction.sample(grid(-2, 2, 33), lambda p: 0.75 * p[:, 0] - 0.25)
        g = biconjugate(f)
        assert np.max(np.abs(g.values - f.values)) <= 1e-12

    def test_idempotent_through_shared_dual_grid(self):
        # with one dual grid the envelope operator is a projection: the
        # second conjugate pair reproduces the first exactly
        rng = np.random.default_rng(11)
        s = grid(-2, 2, 41)
        f = GridFunction(s, rng.normal(size=41) * 2)
        dual = auto_dual_spec(f)
        g = biconjugate(f, dual)
        h = biconjugate(g, dual)
        assert np.max(np.abs(h.values - g.values)) <= 1e-9

    def test_idempotent_upper_bound_with_auto_grids(self):
        rng = np.random.default_rng(12)
        s = grid(-2, 2, 41)
        f = GridFunction(s, rng.normal(size=41) * 2)
        g = biconjugate(f)
        h = biconjugate(g)
        assert np.max(h.values - g.values) <= 1e-12


class TestSlopeRange:
    def test_half_square(self):
        f = GridFunction.sample(grid(-4, 4, 401), lambda p: 0.5 * p[:, 0] ** 2)
        (lo, hi), = slope_range(f)
        h = f.spec.steps[0]
        assert lo == pytest.approx(-4, abs=h)
        assert hi == pytest.approx(4, abs=h)

    def test_affine(self):
        f = GridFunction.sample(grid(-2, 2, 9), lambda p: 1.5 * p[:, 0] + 3)
        (lo, hi), = slope_range(f)
        assert lo == pytest.approx(1.5, abs=1e-12)
        assert hi == pytest.approx(1.5, abs=1e-12)

    def test_abs(self):
        f = GridFunction.sample(grid(-2, 2, 33), lambda p: np.abs(p[:, 0]))
        (lo, hi), = slope_range(f)
        assert (lo, hi) == (-1.0, 1.0)

    def test_needs_adjacent_finite(self):
        from convext.errors import DomainError
        f = GridFunction(grid(0, 1, 3), [1.0, INF, 2.0])
        with pytest.raises(DomainError):
            slope_range(f)
