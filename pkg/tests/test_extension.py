"""Extension engine: base cases, mixtures, softening, the contraction loop,
and the assembled pipeline."""

import numpy as np
import pytest

from conftest import HLOG2PI, normalize_phi, random_jointly_convex
from convext.errors import ConfigurationError, ContractViolationError, InputError
from convext.extension import (ExtensionReport, MixtureSpec, SofteningParams,
                               extend_affine, extend_convex, extend_mixture,
                               extend_zero, holder_extend, soft_legendre)
from convext.grids import GridFunction, GridSpec, ProductGridFunction
from convext.integrals import constraint_residuals, log_integral, normalization_gap
from convext.transforms import AffineFunction


def grid(lo, hi, count):
    return GridSpec([(lo, hi, count)])


def gaussian_shift_phi(t_count=9, x_count=401, x_half=10.0):
    return ProductGridFunction.sample(
        grid(-1, 1, t_count), grid(-x_half, x_half, x_count),
        lambda p: 0.5 * (p[:, 1] - p[:, 0]) ** 2 + HLOG2PI)


class TestExtendZero:
    def test_gaussian_shift(self):
        phi = gaussian_shift_phi()
        rep = extend_zero(phi, samples=500, seed=1)
        assert np.max(np.abs(rep.Psi.values)) <= 1e-6
        assert rep.max_residual <= 1e-9
        assert rep.restriction_error <= 1e-9
        assert rep.joint_convexity.worst_violation <= 1e-6

    def test_t_independent(self):
        phi = ProductGridFunction.sample(
            grid(-1, 1, 5), grid(-9, 9, 361),
            lambda p: 0.5 * p[:, 1] ** 2 + HLOG2PI)
        rep = extend_zero(phi, samples=200, seed=1)
        assert np.max(np.abs(rep.Psi.values)) == 0.0

    def test_separable(self):
        phi = ProductGridFunction.sample(
            grid(-1, 1, 9), grid(-9, 9, 361),
            lambda p: p[:, 0] ** 2 + 0.5 * p[:, 1] ** 2 + HLOG2PI)
        rep = extend_zero(phi, samples=200, seed=1)
        T = grid(-1, 1, 9).coords(0)
        assert np.max(np.abs(rep.Psi.values - T[:, None] ** 2)) <= 1e-6

    def test_unnormalized_rejected(self):
        phi = gaussian_shift_phi()
        bad = ProductGridFunction(phi.t_spec, phi.x_spec, phi.values + 0.5)
        with pytest.raises(InputError):
            extend_zero(bad)


class TestExtendAffine:
    def test_equals_extend_zero_for_zero_affine(self):
        phi = gaussian_shift_phi()
        a = extend_zero(phi, samples=100, seed=0)
        b = extend_affine(AffineFunction([0.0], 0.0), phi, samples=100, seed=0)
        assert np.array_equal(a.Psi.values, b.Psi.values)

    def test_gaussian_shift_unit_slope(self):
        phi = gaussian_shift_phi()
        rep = extend_affine(AffineFunction([1.0], -0.5), phi, samples=500, seed=1)
        T, X = np.meshgrid(grid(-1, 1, 9).coords(0), grid(-10, 10, 401).coords(0),
                           indexing="ij")
        assert np.max(np.abs(rep.Psi.values - (X - 0.5 - T))) <= 1e-6
        assert rep.max_residual <= 1e-9
        assert rep.restriction_error == 0.0

    def test_t_independent_weight(self):
        xs = grid(-9, 9, 361)
        phi = ProductGridFunction.sample(
            grid(-1, 1, 5), xs, lambda p: 0.5 * p[:, 1] ** 2 + HLOG2PI)
        a = AffineFunction([0.5], -0.125)  # e^{a x + b}: b = -a^2/2 normalizes
        assert abs(normalization_gap(a.on_grid(xs), phi.slice(2))) <= 1e-9
        rep = extend_affine(a, phi, samples=200, seed=1)
        expected = a(phi.t_spec.concat(xs).points()[:, 1:]).reshape(5, -1)
        assert np.max(np.abs(rep.Psi.values - expected)) <= 1e-12


class TestExtendMixture:
    def test_single_component_matches_affine(self):
        phi = gaussian_shift_phi()
        lw = np.log(0.7)
        mix = MixtureSpec([AffineFunction([1.0], -0.5 - lw)], [lw])
        a = extend_mixture(mix, phi, samples=100, seed=0)
        b = extend_affine(AffineFunction([1.0], -0.5), phi, samples=100, seed=0)
        assert np.max(np.abs(a.Psi.values - b.Psi.values)) <= 1e-12

    def test_symmetric_pair_gives_logcosh(self):
        xs = grid(-10, 10, 401)
        phi = ProductGridFunction.sample(
            grid(-1, 1, 9), xs, lambda p: 0.5 * p[:, 1] ** 2 + HLOG2PI)
        mix = MixtureSpec([AffineFunction([1.0], 0.0), AffineFunction([-1.0], 0.0)],
                          np.log([0.5, 0.5]))
        rep = extend_mixture(mix, phi, samples=500, seed=2)
        X = xs.coords(0)
        logcosh = np.logaddexp(X, -X) + np.log(0.5)
        assert np.max(np.abs(rep.Psi.values - logcosh[None, :])) <= 1e-12
        assert rep.restriction_error == 0.0
        # t-independent weight: residual = log E[cosh X] = 1/2
        assert rep.max_residual == pytest.approx(0.5, abs=1e-6)

    def test_weight_rescaling_shifts_by_log_s(self):
        phi = gaussian_shift_phi()
        mix = MixtureSpec([AffineFunction([1.0], 0.0), AffineFunction([-0.5], 0.2)],
                          np.log([0.4, 0.6]))
        s = 3.7
        a = extend_mixture(mix, phi, samples=100, seed=0)
        b = extend_mixture(mix.rescaled(np.log(s)), phi, samples=100, seed=0)
        assert np.max(np.abs(b.Psi.values - (a.Psi.values + np.log(s)))) <= 1e-9

    def test_residual_bounded_by_components_when_normalized(self):
        phi = gaussian_shift_phi()
        nodes = [AffineFunction([0.8], -0.1), AffineFunction([-0.3], 0.05)]
        lw = np.log([0.45, 0.55])
        mix = MixtureSpec(nodes, lw)
        rep = extend_mixture(mix, phi, samples=100, seed=0)
        j0 = phi.t_zero_index()
        comp_res = []
        for node in nodes:
            e = node(phi.x_spec.points()) - phi.slices_matrix[j0]
            comp_res.append(log_integral(GridFunction(phi.x_spec, e)).value)
        assert rep.max_residual <= max(comp_res) + 1e-9

    def test_empty_mixture_rejected(self):
        with pytest.raises(InputError):
            MixtureSpec([], [])


class TestSoftLegendre:
    def test_half_square_gap(self):
        xs = grid(-4, 4, 401)
        psi = GridFunction.sample(xs, lambda p: 0.5 * p[:, 0] ** 2)
        soft, mix = soft_legendre(psi, SofteningParams(100.0, grid(-5, 5, 201)))
        w = np.abs(xs.coords(0)) <= 2.0
        assert np.max(np.abs(soft.values / 100.0 - psi.values)[w]) <= 0.05

    def test_mixture_resums_to_soft_function(self):
        xs = grid(-4, 4, 201)
        psi = GridFunction.sample(xs, lambda p: np.abs(p[:, 0]))
        soft, mix = soft_legendre(psi, SofteningParams(50.0, grid(-1.5, 1.5, 61)))
        assert np.array_equal(mix.restriction(xs).values, soft.values)

    def test_affine_constant_gap_at_matching_node(self):
        xs = grid(-4, 4, 321)
        a = 0.5
        psi = GridFunction.sample(xs, lambda p: a * p[:, 0] + 0.25)
        # dual grid with a node exactly at the slope
        soft, _ = soft_legendre(psi, SofteningParams(100.0, grid(-1.5, 2.5, 41)))
        gap = soft.values / 100.0 - psi.values
        w = np.abs(xs.coords(0)) <= 2.0
        assert np.max(gap[w]) - np.min(gap[w]) <= 1e-6

    def test_gap_shrinks_with_lambda(self):
        xs = grid(-4, 4, 401)
        psi = GridFunction.sample(xs, lambda p: 0.5 * p[:, 0] ** 2)
        w = np.abs(xs.coords(0)) <= 2.0
        gaps = []
        for lam in (100.0, 1000.0):
            soft, _ = soft_legendre(psi, SofteningParams(lam, grid(-5, 5, 201)))
            gaps.append(np.max(np.abs(soft.values / lam - psi.values)[w]))
        assert gaps[1] < gaps[0]

    def test_dual_grid_must_cover_slopes(self):
        xs = grid(-4, 4, 101)
        psi = GridFunction.sample(xs, lambda p: 0.5 * p[:, 0] ** 2)
        with pytest.raises(ConfigurationError):
            soft_legendre(psi, SofteningParams(10.0, grid(-1, 1, 21)))

    def test_lambda_below_one_rejected(self):
        with pytest.raises(InputError):
            SofteningParams(0.5, grid(-1, 1, 5))


def affine_extender(a: AffineFunction, source: GridFunction):
    """Extender oracle wrapping extend_affine for a feasible affine source."""

    def call(weight: ProductGridFunction) -> ExtensionReport:
        return extend_affine(a, weight, samples=10, seed=0, check_convexity=False)

    return call


class TestHolderExtend:
    def test_lambda_one_degenerates(self):
        phi = gaussian_shift_phi(t_count=5)
        a = AffineFunction([1.0], -0.5)
        source = a.on_grid(phi.x_spec)
        rep = holder_extend(source, affine_extender(a, source), 1.0, phi,
                            tol=1e-9, max_iter=50, check_convexity=False)
        assert rep.trace.iterations <= 1
        assert rep.trace.converged
        assert rep.max_residual <= 1e-9

    def test_geometric_decay_at_lambda_two(self):
        # weight with genuine t-variation so the crude extension starts
        # with a visible residual
        phi = ProductGridFunction.sample(
            grid(-1, 1, 9), grid(-12, 12, 481),
            lambda p: 0.5 * (p[:, 1] - p[:, 0]) ** 2 + HLOG2PI)
        lam = 2.0
        # the extender extends the unscaled source x - 1/4; the loop's
        # contract is then about source/2 = x/2 - 1/8, normalized at t=0
        a_src = AffineFunction([1.0], -0.25)
        source = a_src.on_grid(phi.x_spec)
        rep = holder_extend(source, affine_extender(a_src, source), lam, phi,
                            tol=1e-9, max_iter=60, check_convexity=False)
        tr = rep.trace
        assert tr.converged
        assert tr.log_A[0] > 0.1
        assert np.all(tr.log_A <= tr.theoretical + 1e-9)
        # nonincreasing while positive
        pos = tr.log_A[:-1] > 0
        assert np.all(np.diff(tr.log_A)[pos] <= 1e-12)
        assert tr.iterations <= int(np.ceil(np.log2(tr.log_A[0] / 1e-9))) + 1
        assert rep.max_residual <= 1e-9

    def test_already_satisfying_source_converges_at_zero(self):
        phi = ProductGridFunction.sample(
            grid(-1, 1, 5), grid(-9, 9, 361),
            lambda p: 0.5 * p[:, 1] ** 2 + HLOG2PI)
        a = AffineFunction([0.5], -0.125)
        source = GridFunction(phi.x_spec, 2.0 * a.on_grid(phi.x_spec).values)
        rep = holder_extend(source, affine_extender(a, source), 2.0, phi,
                            tol=1e-9, max_iter=50, check_convexity=False)
        assert rep.trace.iterations == 0
        assert rep.trace.converged

    def test_restriction_mismatch_raises(self):
        # subtract t^2 so the crude extension starts infeasible and the
        # extender actually gets called
        phi = ProductGridFunction.sample(
            grid(-1, 1, 5), grid(-10, 10, 401),
            lambda p: 0.5 * (p[:, 1] - p[:, 0]) ** 2 + HLOG2PI - p[:, 0] ** 2)
        source = GridFunction(phi.x_spec, np.zeros(phi.x_spec.size))

        def bad_extender(weight):
            vals = np.ones((weight.n_slices, weight.x_spec.size))
            return ExtensionReport(
                Psi=ProductGridFunction(weight.t_spec, weight.x_spec, vals),
                max_residual=0.0, restriction_error=1.0,
                joint_convexity=None, trace=None)

        with pytest.raises(ContractViolationError):
            holder_extend(source, bad_extender, 2.0, phi, tol=1e-9,
                          max_iter=5, check_convexity=False)

    def test_lambda_below_one_rejected(self):
        phi = gaussian_shift_phi(t_count=5)
        source = GridFunction(phi.x_spec, np.zeros(phi.x_spec.size))
        with pytest.raises(InputError):
            holder_extend(source, lambda w: None, 0.9, phi)

    def test_non_convergence_reports_rather_than_raises(self):
        phi = gaussian_shift_phi(t_count=9)
        psi = GridFunction.sample(phi.x_spec,
                                  lambda p: np.maximum(0.3 * p[:, 0], -0.2 * p[:, 0]))
        rep = extend_convex(psi, phi, SofteningParams(20.0, grid(-0.4, 0.4, 41)),
                            tol=1e-9, max_iter=1, samples=100, seed=0)
        assert not rep.trace.converged
        assert rep.max_residual > 1e-9


class TestExtendConvex:
    def test_zero_source_reproduces_marginal_extension(self):
        phi = gaussian_shift_phi(t_count=9, x_count=351, x_half=6.0)
        psi = GridFunction(phi.x_spec, np.zeros(phi.x_spec.size))
        rep = extend_convex(psi, phi, SofteningParams(100.0, grid(-1, 1, 101)),
                            tol=1e-6, max_iter=2500, samples=800, seed=3)
        assert rep.trace.converged
        assert rep.max_residual <= 1e-6
        assert rep.joint_convexity.worst_violation <= 1e-6
        # within the softening gap of the zero extension on the interior
        interior = np.abs(phi.x_spec.coords(0)) <= 4.0
        assert np.max(np.abs(rep.Psi.values[:, interior])) <= 0.1
        assert rep.restriction_error <= 0.05

    @pytest.mark.slow
    def test_abs_value_at_lambda_200(self):
        ts = grid(-1, 1, 7)
        xs = grid(-5, 5, 1401)
        phi = ProductGridFunction.sample(
            ts, xs, lambda p: 0.5 * (p[:, 1] - p[:, 0]) ** 2 + HLOG2PI)
        psi = GridFunction.sample(xs, lambda p: np.abs(p[:, 0]))
        rep = extend_convex(psi, phi, SofteningParams(200.0, grid(-1.3, 1.3, 71)),
                            tol=1e-6, max_iter=6000, samples=800, seed=3)
        assert rep.trace.converged
        assert rep.max_residual <= 1e-6
        assert rep.joint_convexity.worst_violation <= 1e-6
        assert rep.restriction_error <= 0.05
        assert abs(rep.normalization_shift
                   - normalization_gap(psi, phi.slice(phi.t_zero_index()))) <= 1e-9

    def test_m_zero_is_identity(self):
        xs = grid(-6, 6, 241)
        phi = ProductGridFunction.sample(GridSpec([]), xs,
                                         lambda p: 0.5 * p[:, 0] ** 2)
        psi = GridFunction.sample(xs, lambda p: 0.25 * p[:, 0] ** 2)
        rep = extend_convex(psi, phi, SofteningParams(50.0, grid(-2, 2, 41)),
                            tol=1e-9, max_iter=10, samples=200, seed=0)
        c = rep.normalization_shift
        assert np.max(np.abs(rep.Psi.values - (psi.values - c))) <= 1e-12
        assert rep.max_residual <= 1e-12
        assert rep.restriction_error == 0.0
        assert rep.trace is None

    def test_non_convex_source_rejected(self):
        phi = gaussian_shift_phi(t_count=5)
        psi = GridFunction.sample(phi.x_spec, lambda p: -0.1 * p[:, 0] ** 2)
        with pytest.raises(InputError, match="convexity"):
            extend_convex(psi, phi, SofteningParams(10.0, grid(-3, 3, 61)),
                          samples=500, seed=1)

    def test_restriction_gap_monotone_in_lambda(self):
        rng = np.random.default_rng(17)
        phi = normalize_phi(random_jointly_convex(rng, m=1, n=1, x_count=301,
                                                  x_half=5.5))
        psi = GridFunction.sample(
            phi.x_spec,
            lambda p: np.max(np.outer(p[:, 0], [-0.3, 0.1, 0.25])
                             + np.array([0.0, -0.1, 0.05]), axis=1))
        gaps = {}
        for lam in (100.0, 400.0):
            rep = extend_convex(psi, phi, SofteningParams(lam, grid(-0.4, 0.4, 81)),
                                tol=1e-6, max_iter=2, samples=100, seed=0)
            gaps[lam] = rep.restriction_error
        assert gaps[400.0] <= gaps[100.0] + 1e-9

    def test_translation_equivariance(self):
        v = 0.5  # dyadic shift, dyadic grids: shared nodes are exact
        ts = grid(-1, 1, 5)

        def run(shifted):
            xs = grid(-4 + v, 4 + v, 257) if shifted else grid(-4, 4, 257)

            def phi_fn(p):
                x = p[:, 1] - (v if shifted else 0.0)
                return 0.5 * (x - p[:, 0]) ** 2 + HLOG2PI

            def psi_fn(p):
                x = p[:, 0] - (v if shifted else 0.0)
                return np.maximum(0.25 * x, -0.5 * x) - 0.3

            phi = ProductGridFunction.sample(ts, xs, phi_fn)
            psi = GridFunction.sample(xs, psi_fn)
            return extend_convex(psi, phi, SofteningParams(50.0, grid(-0.7, 0.45, 47)),
                                 tol=1e-5, max_iter=800, samples=300, seed=2)

        base = run(False)
        moved = run(True)
        assert base.trace.converged and moved.trace.converged
        assert np.max(np.abs(base.Psi.values - moved.Psi.values)) <= 1e-9
