import numpy as np
import pytest

from cpacontract.assembly import enu_coefficient_arrays, fill_derivative_bounds
from cpacontract.cpa import CPAMetric
from cpacontract.errors import NotFeasibleInputError
from cpacontract.solver import Solution
from cpacontract.systems import parse_system
from cpacontract.triangulation import build_complex
from cpacontract.verify import (
    boundary_flow_check,
    floquet_bound,
    margin_coefficients_consistent,
    verify_contraction_sampled,
    verify_interpolation_bound,
    verify_lemma_412_gap,
)

TWO_PI = 2.0 * np.pi


class TestContractionSampled:
    def test_constant_metric_linear_system(self, linear_1d):
        # M = [1]: sampled matrix is 2*1*(-1) = -2 everywhere, L_M = -1
        cx = build_complex([[[-2.0, 1.0]]], linear_1d.T, 3)
        cpa = CPAMetric.constant(cx, np.eye(1))
        rep = verify_contraction_sampled(cpa, linear_1d, cx, samples=5000,
                                         seed=0, tol=1e-6, eps0=0.01,
                                         C=1.0, D=0.0)
        assert rep.max_lambda_max == pytest.approx(-2.0, abs=1e-9)
        assert rep.max_lm == pytest.approx(-1.0, abs=1e-9)
        assert rep.bound_from_C == pytest.approx(-0.5)
        assert rep.max_lm <= rep.bound_from_C

    def test_no_contraction_without_x_dependence(self):
        sys = parse_system("dim=1; period=6.283185307179586; f1 = sin(t)")
        cx = build_complex([[[-1.0, 1.0]]], sys.T, 2)
        cpa = CPAMetric.constant(cx, np.eye(1))
        rep = verify_contraction_sampled(cpa, sys, cx, samples=2000, seed=0,
                                         tol=1e-6, eps0=0.01, C=1.0, D=0.0)
        assert rep.max_lambda_max == pytest.approx(0.0, abs=1e-9)
        assert not rep.passed

    def test_corrupted_metric_fails(self, solved_linear):
        cx, sys, vmap, sol = (solved_linear["cx"], solved_linear["sys"],
                              solved_linear["vmap"], solved_linear["sol"])
        values = vmap.metric_values(sol.y).copy()
        values[7] = -values[7]  # negate one vertex matrix
        cpa = CPAMetric(cx, values)
        C, D = vmap.bound_constants(sol.y)
        rep = verify_contraction_sampled(cpa, sys, cx, samples=20000, seed=1,
                                         tol=1e-6, eps0=0.01, C=C, D=D)
        assert not rep.passed
        assert rep.min_metric_eig < 0.0

    def test_solved_certificate_passes(self, solved_linear):
        C, D = solved_linear["vmap"].bound_constants(solved_linear["sol"].y)
        rep = verify_contraction_sampled(
            solved_linear["cpa"], solved_linear["sys"], solved_linear["cx"],
            samples=20000, seed=3, tol=1e-6, eps0=0.01, C=C, D=D)
        assert rep.passed
        assert rep.max_lambda_max <= -1.0 + 1e-6
        # bound chain: L_M <= -1/(2 mu_max) <= -1/(2C) at the samples
        assert rep.max_lm <= rep.bound_from_mu + 1e-9
        assert rep.bound_from_mu <= rep.bound_from_C + 1e-12

    def test_metric_floor_lemma(self, solved_linear):
        # Constraint 4 at the vertices pushes the sampled floor to eps0
        C, D = solved_linear["vmap"].bound_constants(solved_linear["sol"].y)
        rep = verify_contraction_sampled(
            solved_linear["cpa"], solved_linear["sys"], solved_linear["cx"],
            samples=10000, seed=4, tol=1e-6, eps0=0.01, C=C, D=D)
        assert rep.min_metric_eig >= 0.01 - 1e-9


class TestInterpolationBound:
    def test_affine_exact(self):
        sys = parse_system("dim=2; period=1; f1 = x2; f2 = -x1")
        cx = build_complex([[[0.0, 1.0], [0.0, 1.0]]], 1.0, 1)
        fill_derivative_bounds(cx, sys)
        for sid in (0, 3, 5):
            assert verify_interpolation_bound(cx.simplex(sid), sys, 200) == 0.0

    def test_vdp_within_bound(self, vdp):
        cx = build_complex([[[-2.0, 2.0], [-2.0, 2.0]]], 1.0, 2)
        fill_derivative_bounds(cx, vdp)
        rng = np.random.default_rng(9)
        for sid in rng.integers(0, cx.n_simplices, size=50):
            ratio = verify_interpolation_bound(cx.simplex(int(sid)), vdp,
                                               samples=1000, seed=int(sid))
            assert ratio <= 1.0 + 1e-9

    def test_sine_bound_instance(self, linear_1d):
        # error of interpolating sin(t) on a simplex of diameter h obeys
        # the (n+1) B h^2 = 2 h^2 instance
        cx = build_complex([[[-2.0, 1.0]]], linear_1d.T, 4)
        fill_derivative_bounds(cx, linear_1d)
        rng = np.random.default_rng(2)
        for sid in rng.integers(0, cx.n_simplices, size=20):
            s = cx.simplex(int(sid))
            lam = rng.dirichlet(np.ones(3), size=500)
            pts = lam @ s.vertices
            fv = linear_1d.f_many(s.vertices)
            err = np.abs(linear_1d.f_many(pts) - lam @ fv).max()
            assert err <= 2.0 * 1.0 * s.h**2 + 1e-12


class TestLemma412Gap:
    def test_affine_constant_zero(self):
        sys = parse_system("dim=1; period=1; f1 = -x1")
        cx = build_complex([[[0.0, 1.0]]], 1.0, 1)
        fill_derivative_bounds(cx, sys)
        cpa = CPAMetric.constant(cx, np.eye(1))
        a_C, a_D = enu_coefficient_arrays(cx, "C2")
        assert np.all(a_C == 0.0)
        for sid in range(cx.n_simplices):
            gap = verify_lemma_412_gap(cpa, sys, cx.simplex(sid), 200)
            assert gap <= 1e-12

    def test_solved_gap_within_margin(self, solved_linear):
        cx, sys, cpa = (solved_linear["cx"], solved_linear["sys"],
                        solved_linear["cpa"])
        C, D = solved_linear["vmap"].bound_constants(solved_linear["sol"].y)
        a_C, a_D = enu_coefficient_arrays(cx, sys.smoothness)
        rng = np.random.default_rng(5)
        for sid in rng.integers(0, cx.n_simplices, size=40):
            sid = int(sid)
            gap = verify_lemma_412_gap(cpa, sys, cx.simplex(sid), 500,
                                       seed=sid)
            E = a_C[sid] * C + a_D[sid] * D
            assert gap <= E / cx.n + 1e-8

    def test_halved_margin_detected(self, solved_linear):
        cx, sys = solved_linear["cx"], solved_linear["sys"]
        a_C, a_D = enu_coefficient_arrays(cx, sys.smoothness)
        assert margin_coefficients_consistent(cx, sys, a_C, a_D)
        assert not margin_coefficients_consistent(cx, sys, a_C / 2.0,
                                                  a_D / 2.0)


class TestFloquetBound:
    def _solution(self, status, C):
        y = np.array([C, 0.0])
        return Solution(status=status, y=y, objective=C,
                        block_min_eigs=np.zeros(1), iterations=1,
                        duality_gap=0.0)

    class _Map:
        uniform = True

        def bound_constants(self, y):
            return float(y[0]), float(y[1])

    def test_formula(self):
        assert floquet_bound(self._solution("Optimal", 1.0), self._Map()) \
            == pytest.approx(-0.5)
        assert floquet_bound(self._solution("Feasible", 10.0), self._Map()) \
            == pytest.approx(-0.05)

    def test_not_feasible_input(self):
        with pytest.raises(NotFeasibleInputError):
            floquet_bound(self._solution("Infeasible", 1.0), self._Map())

    def test_solved_bound_sound(self, solved_linear):
        from cpacontract.orbits import find_periodic_orbit, monodromy
        bound = floquet_bound(solved_linear["sol"], solved_linear["vmap"])
        res = monodromy(solved_linear["sys"],
                        find_periodic_orbit(solved_linear["sys"], [0.0]))
        assert -1.0 <= bound < 0.0
        assert bound >= res.exponents.max() - 1e-6


class TestBoundaryFlow:
    def test_inward_region(self, linear_1d):
        # at x=-2 the field pushes right, at x=1 it pushes left or is zero
        cx = build_complex([[[-2.0, 1.0]]], linear_1d.T, 3)
        rep = boundary_flow_check(cx, linear_1d, samples=50, seed=0)
        assert rep.boundary_facets > 0
        assert rep.outward_facets == []

    def test_outward_region(self, linear_1d):
        cx = build_complex([[[0.5, 0.8]]], linear_1d.T, 4)
        rep = boundary_flow_check(cx, linear_1d, samples=50, seed=0)
        assert rep.outward_facets

    def test_empty_budget(self, linear_1d):
        cx = build_complex([[[-2.0, 1.0]]], linear_1d.T, 2)
        rep = boundary_flow_check(cx, linear_1d, samples=10, seed=0, budget=0)
        assert rep.sampled_facets == 0
        assert rep.outward_facets == []
