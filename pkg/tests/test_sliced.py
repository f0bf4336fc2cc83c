import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smearprop.core import PhysicalParams, SmearWidths
from smearprop.errors import CausticError, IndefiniteMatrixError, ValidationError
from smearprop.gaussian import kernel_free_closed, smeared_ho_kernel_closed
from smearprop.sliced import (
    LOGDET_THRESHOLD,
    EndpointPath,
    SignedLogDet,
    SlicedQuadraticAction,
    build_S,
    build_T,
    classical_exponent_limit,
    decoupled_exponent,
    det_S,
    endpoint_quadratic,
    finite_k_kernel_ho,
    partial_determinants,
    quantum_prefactor,
    quantum_prefactor_limit,
    rho,
    sliced_exponent,
    slogdet_S,
    solve_S,
)


def chebyshev_det(action):
    # d_k = sin((k+1) theta) / sin(theta) with 2 cos(theta) = 2 - eps^2 lam^2
    theta = math.acos(action.diagonal / 2)
    if theta == 0:
        return action.k + 1.0
    return math.sin((action.k + 1) * theta) / math.sin(theta)


def dense_decoupled(action, path):
    T, S = build_T(action), build_S(action)
    w = path.full
    r = S @ path.interior
    r[0] -= path.start
    r[-1] -= path.end
    return w @ T @ w - r @ np.linalg.solve(S, r)


class TestAction:
    def test_eps(self):
        a = SlicedQuadraticAction(9, 2.0, 1.0)
        assert a.eps * (a.k + 1) == pytest.approx(2.0, rel=1e-12)

    @pytest.mark.parametrize("k, t, lam", [(0, 1, 1), (1.5, 1, 1), (1, 0, 1), (1, 1, -1)])
    def test_invalid(self, k, t, lam):
        with pytest.raises(ValidationError):
            SlicedQuadraticAction(k, t, lam)

    def test_path_must_be_finite(self):
        with pytest.raises(ValidationError):
            EndpointPath(0.0, 1.0, [0.5, math.nan])


class TestMatrices:
    def test_T_one_slice(self):
        a = SlicedQuadraticAction(1, 1.0, 1.0)
        e2 = a.eps**2
        expected = np.array([[1, -1, 0], [-1, 2 - e2, -1], [0, -1, 1 - e2]])
        assert np.allclose(build_T(a), expected, atol=0, rtol=1e-15)

    def test_T_laplacian_rows(self):
        T = build_T(SlicedQuadraticAction(6, 1.0, 0.0))
        assert np.all(T.sum(axis=1) == 0)

    def test_symmetric(self):
        a = SlicedQuadraticAction(7, 1.3, 0.8)
        assert np.array_equal(build_T(a), build_T(a).T)
        assert np.array_equal(build_S(a), build_S(a).T)

    def test_S_small(self):
        a = SlicedQuadraticAction(1, 1.0, 1.0)
        assert build_S(a) == pytest.approx(np.array([[2 - a.eps**2]]))
        S2 = build_S(SlicedQuadraticAction(2, 1.0, 0.0))
        assert np.array_equal(S2, [[2, -1], [-1, 2]])
        assert np.linalg.det(S2) == pytest.approx(3.0)

    def test_S_is_interior_block(self):
        a = SlicedQuadraticAction(5, 1.0, 1.0)
        assert np.array_equal(build_T(a)[1:-1, 1:-1], build_S(a))


class TestDeterminant:
    @pytest.mark.parametrize("k", range(1, 9))
    def test_free_is_k_plus_one(self, k):
        a = SlicedQuadraticAction(k, 1.0, 0.0)
        assert det_S(a) == k + 1
        assert np.linalg.det(build_S(a)) == pytest.approx(k + 1, rel=1e-12)

    def test_one_slice(self):
        a = SlicedQuadraticAction(1, 1.0, 1.0)
        assert det_S(a) == 2 - a.eps**2

    @pytest.mark.parametrize("k", range(1, 9))
    @pytest.mark.parametrize("lam_t", [0.0, 0.3, 1.0, 2.0])
    def test_against_dense(self, k, lam_t):
        a = SlicedQuadraticAction(k, 1.0, lam_t)
        dense = np.linalg.det(build_S(a))
        assert abs(det_S(a) - dense) <= 1e-12 * abs(dense)

    @pytest.mark.parametrize("k", [3, 50, 1000])
    def test_chebyshev(self, k):
        a = SlicedQuadraticAction(k, 1.0, 1.0)
        assert det_S(a) == pytest.approx(chebyshev_det(a), rel=1e-10)

    def test_limit(self):
        a = SlicedQuadraticAction(1000, 1.0, 1.0)
        assert abs(a.eps * det_S(a) - math.sin(1.0)) <= 5e-6

    @staticmethod
    def _scaled_dets(lam_t):
        ks = [16, 32, 64, 128, 256, 512, 1024, 2048, 4096]
        return [SlicedQuadraticAction(k, lam_t, 1.0).eps * det_S(SlicedQuadraticAction(k, lam_t, 1.0)) for k in ks]

    @pytest.mark.parametrize("lam_t", [0.5, 1.0, 1.5, 2.0])
    def test_monotone_decreasing_toward_limit(self, lam_t):
        vals = self._scaled_dets(lam_t)
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert vals[-1] > math.sin(lam_t)

    @pytest.mark.parametrize("lam_t", [2.5, 3.0])
    def test_approach_from_below_near_caustic(self, lam_t):
        # the O(eps^2) term changes sign between lam t = 2 and 2.5
        vals = self._scaled_dets(lam_t)
        errs = [abs(v - math.sin(lam_t)) for v in vals]
        assert all(b < a for a, b in zip(vals[::-1], vals[::-1][1:]))
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_log_representation_above_threshold(self):
        a = SlicedQuadraticAction(LOGDET_THRESHOLD + 1, 1.0, 1.0)
        d = det_S(a)
        assert isinstance(d, SignedLogDet) and d.sign == 1.0
        assert a.eps * d.value == pytest.approx(math.sin(1.0), rel=1e-6)

    def test_log_representation_no_overflow(self):
        # eps lam ~ 5 puts the diagonal near -23, so |d_k| ~ 23^k overflows a float;
        # with |a| > 2, |d_k| = (r^(k+1) - r^-(k+1)) / (r - 1/r), r + 1/r = |a|
        a = SlicedQuadraticAction(20_000, 1.0, 1e5)
        r = abs(a.diagonal) / 2 + math.sqrt(a.diagonal**2 / 4 - 1)
        d = slogdet_S(a)
        assert d.sign == 1.0  # (-1)^k with k even
        assert d.logabs == pytest.approx((a.k + 1) * math.log(r) - math.log(r - 1 / r), rel=1e-12)

    @pytest.mark.parametrize("k", [2, 10, 100, 1000])
    def test_positive_inside_window(self, k):
        for t in (0.5, 0.9 * math.pi):
            assert np.all(partial_determinants(SlicedQuadraticAction(k, t, 1.0))[1:] > 0)

    @pytest.mark.parametrize("k", [10, 100, 1000])
    def test_positive_close_to_caustic(self, k):
        assert np.all(partial_determinants(SlicedQuadraticAction(k, 0.99 * math.pi, 1.0))[1:] > 0)

    def test_discrete_caustic_precedes_continuum(self):
        # coarse slicing: d_k vanishes at (k+1) theta = pi with 2 cos(theta) = 2 - eps^2;
        # for k = 2 that is theta = pi/3, eps = 1, t = 3 < pi
        t_star = 3 * math.sqrt(2 - 2 * math.cos(math.pi / 3))
        assert t_star < math.pi
        assert np.all(partial_determinants(SlicedQuadraticAction(2, 0.99 * t_star, 1.0))[1:] > 0)
        assert np.any(partial_determinants(SlicedQuadraticAction(2, 1.01 * t_star, 1.0))[1:] <= 0)

    @pytest.mark.parametrize("k", [2, 10, 100, 1000])
    def test_caustic_detected(self, k):
        d = partial_determinants(SlicedQuadraticAction(k, 1.05 * math.pi, 1.0))
        assert np.any(d[1:] <= 0)


class TestSolve:
    def test_zero(self):
        a = SlicedQuadraticAction(5, 1.0, 1.0)
        assert np.all(solve_S(a, np.zeros(5)) == 0)

    def test_one_slice(self):
        a = SlicedQuadraticAction(1, 1.0, 1.0)
        assert solve_S(a, [3.0]) == pytest.approx([3.0 / (2 - a.eps**2)])

    def test_against_dense(self, rng):
        a = SlicedQuadraticAction(64, 1.0, 1.0)
        rhs = rng.normal(size=64)
        x = solve_S(a, rhs)
        assert np.max(np.abs(x - np.linalg.solve(build_S(a), rhs))) <= 1e-10
        assert np.max(np.abs(build_S(a) @ x - rhs)) <= 1e-10 * np.max(np.abs(rhs))

    def test_block_rhs(self, rng):
        a = SlicedQuadraticAction(10, 1.0, 1.0)
        rhs = rng.normal(size=(10, 3))
        assert np.allclose(solve_S(a, rhs), np.linalg.solve(build_S(a), rhs), rtol=0, atol=1e-12)

    def test_indefinite_reports_minor(self):
        a = SlicedQuadraticAction(10, 1.05 * math.pi, 1.0)
        first_bad = int(np.argmax(partial_determinants(a)[1:] <= 0)) + 1
        with pytest.raises(IndefiniteMatrixError) as info:
            solve_S(a, np.ones(10))
        assert info.value.index == first_bad
        assert f"minor {first_bad}" in str(info.value)

    def test_length_checked(self):
        with pytest.raises(ValidationError):
            solve_S(SlicedQuadraticAction(3, 1.0, 1.0), np.ones(4))


class TestRho:
    def test_zero(self):
        a = SlicedQuadraticAction(4, 1.0, 1.0)
        assert np.all(rho(a, EndpointPath(0, 0, np.zeros(4))) == 0)

    def test_zero_interior(self):
        a = SlicedQuadraticAction(4, 1.0, 1.0)
        assert np.array_equal(rho(a, EndpointPath(0.7, -1.2, np.zeros(4))), [-0.7, 0, 0, 1.2])

    def test_layout(self, rng):
        a = SlicedQuadraticAction(16, 1.0, 1.0)
        path = EndpointPath(0.4, -0.9, rng.normal(size=16))
        expected = build_S(a) @ path.interior
        expected[0] -= 0.4
        expected[-1] += 0.9
        assert np.allclose(rho(a, path), expected, atol=1e-14)


class TestDecoupledExponent:
    @pytest.mark.parametrize("k", range(1, 9))
    def test_zero_endpoints(self, rng, k):
        a = SlicedQuadraticAction(k, 1.0, 1.0)
        assert abs(decoupled_exponent(a, EndpointPath(0, 0, rng.normal(size=k)))) <= 1e-12

    @pytest.mark.parametrize("k", [1, 2, 5, 8, 16])
    def test_against_dense(self, rng, k):
        a = SlicedQuadraticAction(k, 1.0, 1.0)
        path = EndpointPath(0.8, -0.3, rng.normal(size=k))
        assert decoupled_exponent(a, path) == pytest.approx(dense_decoupled(a, path), rel=1e-10)

    def test_minimum_of_action(self, rng):
        # endpoint part is the value of x^T T x at its stationary interior point
        a = SlicedQuadraticAction(6, 1.0, 1.0)
        T = build_T(a)
        value = decoupled_exponent(a, EndpointPath.straight(0.5, 1.5, 6))
        for _ in range(20):
            x = np.concatenate([[0.5], rng.normal(size=6), [1.5]])
            assert x @ T @ x >= value - 1e-12

    def test_path_gauge(self, rng):
        a = SlicedQuadraticAction(64, 1.0, 1.0)
        for _ in range(20):
            x0, y = rng.uniform(-3, 3, 2)
            vals = [decoupled_exponent(a, EndpointPath(x0, y, rng.normal(0, 2, 64))) for _ in range(10)]
            assert (max(vals) - min(vals)) <= 1e-10 * abs(np.mean(vals))

    def test_quadratic_reconstruction(self, rng):
        a = SlicedQuadraticAction(32, 1.0, 1.0)
        P, Q, R = endpoint_quadratic(a)
        for x0, y in rng.uniform(-3, 3, size=(10, 2)):
            direct = decoupled_exponent(a, EndpointPath(x0, y, rng.normal(size=32)))
            assert abs(P * x0**2 + Q * y**2 + 2 * R * x0 * y - direct) <= 1e-10 * max(1.0, abs(direct))

    def test_free_action(self):
        # lam = 0: the sliced free action is exact at every k
        for k in (1, 7, 512):
            a = SlicedQuadraticAction(k, 1.0, 0.0)
            value = sliced_exponent(a, EndpointPath.straight(-0.5, 1.5, k))
            assert abs(value - 1j * 4.0 / 2) <= 1e-4 * 2.0


class TestPrefactor:
    def test_finite_k_limit(self):
        a = SlicedQuadraticAction(1000, 1.0, 1.0)
        lim = quantum_prefactor_limit(1.0, 1.0)
        assert abs(quantum_prefactor(a) - lim) / abs(lim) <= 1e-5

    def test_free_limit(self):
        lim = quantum_prefactor_limit(1.0, 1e-8)
        assert lim == pytest.approx((1 / (2j * math.pi)) ** 0.5, rel=1e-12)

    def test_dimension_two_is_square(self):
        a = SlicedQuadraticAction(100, 1.0, 1.0)
        assert quantum_prefactor(a, PhysicalParams(dim=2)) == pytest.approx(quantum_prefactor(a) ** 2, rel=1e-13)
        assert quantum_prefactor_limit(1.0, 1.0, PhysicalParams(dim=2)) == pytest.approx(
            quantum_prefactor_limit(1.0, 1.0) ** 2, rel=1e-13
        )

    def test_caustic(self):
        with pytest.raises(CausticError):
            quantum_prefactor(SlicedQuadraticAction(1000, 1.05 * math.pi, 1.0))
        with pytest.raises(CausticError):
            quantum_prefactor_limit(3.2, 1.0)


class TestClassicalExponent:
    def test_origin(self):
        assert classical_exponent_limit(0.0, 0.0, 1.0, 1.0) == 0

    def test_free_limit(self):
        value = classical_exponent_limit(0.0, 1.0, 1.0, 1e-4)
        assert abs(value - 0.5j) <= 1e-6 * 0.5

    def test_first_order_convergence(self):
        # the sliced potential sum keeps y^2 but drops x0^2, an O(eps) defect of
        # relative size eps lam^2 (y^2 - x0^2) / (4 |limit| / i m) at (0, 1, 1, 1)
        limit = classical_exponent_limit(0.0, 1.0, 1.0, 1.0)
        scaled = []
        for k in (128, 256, 512, 1024):
            a = SlicedQuadraticAction(k, 1.0, 1.0)
            err = abs(sliced_exponent(a, EndpointPath.straight(0.0, 1.0, k)) - limit)
            scaled.append(err / a.eps)
        assert np.allclose(scaled, 0.25, rtol=3e-3)
        assert all(abs(b - 0.25) < abs(a - 0.25) for a, b in zip(scaled, scaled[1:]))


class TestFiniteKKernel:
    W = SmearWidths(0.05, 0.05)

    def test_converges_at_origin(self):
        closed = smeared_ho_kernel_closed(0.0, 0.0, self.W, 1.0, 1.0)
        assert abs(finite_k_kernel_ho(0.0, 0.0, self.W, 1.0, 1.0, 512) / closed - 1) <= 1e-4

    @pytest.mark.parametrize("k", [1, 4, 64])
    def test_free_exact(self, k):
        w = SmearWidths(0.05, 0.08)
        for q, q0 in [(0.0, 0.0), (1.0, 0.0), (2.0, -1.0)]:
            value = finite_k_kernel_ho(q, q0, w, 1.0, 0.0, k)
            assert abs(value / kernel_free_closed(q, q0, w, 1.0) - 1) <= 1e-10

    def test_free_symmetric(self):
        w = SmearWidths(0.05, 0.08)
        a = finite_k_kernel_ho(1.0, -0.4, w, 1.0, 0.0, 16)
        b = finite_k_kernel_ho(-0.4, 1.0, w.swapped(), 1.0, 0.0, 16)
        assert abs(a - b) <= 1e-10 * abs(a)

    def test_off_origin_first_order(self):
        closed = smeared_ho_kernel_closed(1.0, 0.0, self.W, 1.0, 1.0)
        for k in (256, 512):
            err = abs(finite_k_kernel_ho(1.0, 0.0, self.W, 1.0, 1.0, k) / closed - 1)
            assert err * (k + 1) == pytest.approx(0.25, rel=0.01)

    def test_transpose_defect_first_order(self):
        # with the endpoint layout of T the potential weighs y but not x0, so
        # transpose symmetry holds only as eps -> 0
        for k in (256, 512):
            a = finite_k_kernel_ho(1.0, 0.0, self.W, 1.0, 1.0, k)
            b = finite_k_kernel_ho(0.0, 1.0, self.W, 1.0, 1.0, k)
            assert abs(a - b) / abs(a) * (k + 1) == pytest.approx(0.5, rel=0.01)

    def test_caustic(self):
        with pytest.raises(CausticError):
            finite_k_kernel_ho(0.0, 0.0, self.W, 3.2, 1.0, 64)


@settings(max_examples=25, deadline=None)
@given(k=st.integers(1, 40), frac=st.floats(0.05, 0.95))
def test_recurrence_matches_chebyshev(k, frac):
    a = SlicedQuadraticAction(k, frac * math.pi, 1.0)
    assert det_S(a) == pytest.approx(chebyshev_det(a), rel=1e-9, abs=1e-12)
    assert np.all(partial_determinants(a)[1:] > 0)
