import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gatemetric.dynamics import PAULI, hadamard_gate
from gatemetric.linalg import (
    DimensionError,
    kron,
    random_unitary,
    spectral_norm,
    trace_norm,
    unitarity_defect,
)
from gatemetric.metrics import (
    LAMBDA_2,
    SubgradientConfig,
    dist_hs,
    dist_hs_closed,
    dist_phase_sensitive,
    dist_tensor,
    dist_two_norm_bounds,
    gamma,
    gamma_closed,
    hs_objective,
    lambda_hs,
    two_norm_objective,
)

SX = PAULI["x"]
seeds = st.integers(min_value=0, max_value=2**32 - 1)
DIMS = [(2, 2), (2, 4), (4, 2)]


def haar_batch(rng, count, dim):
    z = (rng.standard_normal((count, dim, dim)) + 1j * rng.standard_normal((count, dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=1, axis2=2)
    return q * (d / np.abs(d))[:, None, :]


def lift(phi, n_s):
    return kron(np.eye(n_s), phi)


class TestGamma:
    def test_self(self, rng):
        u = random_unitary(8, rng)
        np.testing.assert_allclose(gamma(u, u, (2, 4)), 2 * np.eye(4), atol=1e-12)

    def test_product(self, rng):
        us, ue, vs, ve = (random_unitary(2, rng) for _ in range(4))
        g = gamma(kron(us, ue), kron(vs, ve), (2, 2))
        np.testing.assert_allclose(g, np.trace(us @ vs.conj().T) * ue @ ve.conj().T, atol=1e-12)

    def test_traceless(self):
        np.testing.assert_allclose(gamma(kron(SX, np.eye(2)), np.eye(4), (2, 2)), 0, atol=1e-15)

    def test_closed_examples(self, rng):
        vs = random_unitary(2, rng)
        np.testing.assert_allclose(gamma_closed(kron(vs, np.eye(3)), vs, (2, 3)), 2 * np.eye(3), atol=1e-12)
        np.testing.assert_allclose(gamma_closed(np.eye(4), SX, (2, 2)), 0, atol=1e-15)

    @given(seeds)
    @settings(max_examples=30, deadline=None)
    def test_closed_matches_general(self, seed):
        rng = np.random.default_rng(seed)
        for n_s, n_e in DIMS:
            u, vs = random_unitary(n_s * n_e, rng), random_unitary(n_s, rng)
            np.testing.assert_allclose(
                gamma_closed(u, vs, (n_s, n_e)), gamma(u, kron(vs, np.eye(n_e)), (n_s, n_e)), atol=1e-13
            )

    def test_spectral_bound(self, rng):
        for n_s, n_e in DIMS:
            for _ in range(50):
                g = gamma_closed(random_unitary(n_s * n_e, rng), random_unitary(n_s, rng), (n_s, n_e))
                assert spectral_norm(g) <= n_s + 1e-8

    def test_dimension_errors(self):
        with pytest.raises(DimensionError):
            gamma(np.eye(4), np.eye(6), (2, 2))
        with pytest.raises(DimensionError):
            gamma_closed(np.eye(4), np.eye(3), (2, 2))


class TestDistHs:
    def test_self(self, rng):
        u = random_unitary(8, rng)
        assert dist_hs(u, u, (2, 4)).value < 1e-7

    def test_maximal(self):
        assert dist_hs(kron(SX, np.eye(2)), np.eye(4), (2, 2)).value == pytest.approx(1.0)

    @given(seeds)
    @settings(max_examples=30, deadline=None)
    def test_result_invariants(self, seed):
        rng = np.random.default_rng(seed)
        for n_s, n_e in DIMS:
            u, v = random_unitary(n_s * n_e, rng), random_unitary(n_s * n_e, rng)
            res = dist_hs(u, v, (n_s, n_e))
            assert 0 <= res.value <= 1
            assert res.value == pytest.approx(math.sqrt(1 - trace_norm(res.gamma) / (n_s * n_e)), abs=1e-12)
            assert unitarity_defect(res.optimal_phi) < 1e-10
            # the closed form equals the objective at the returned minimizer
            assert hs_objective(u, v, res.optimal_phi, (n_s, n_e)) == pytest.approx(res.value, abs=1e-10)

    @given(seeds)
    @settings(max_examples=30, deadline=None)
    def test_metric_axioms(self, seed):
        rng = np.random.default_rng(seed)
        dims = (2, 2)
        u, v, w = (random_unitary(4, rng) for _ in range(3))
        assert abs(dist_hs(u, v, dims).value - dist_hs(v, u, dims).value) < 1e-10
        assert dist_hs(u, w, dims).value <= dist_hs(u, v, dims).value + dist_hs(v, w, dims).value + 1e-9

    def test_monte_carlo_oracle(self):
        # brute-force minimum over 10^6 Haar samples of Phi never beats the analytic value
        rng = np.random.default_rng(2024)
        u, v = random_unitary(4, rng), random_unitary(4, rng)
        analytic = dist_hs(u, v, (2, 2)).value
        vt = v.reshape(2, 2, 2, 2)
        ut = np.conj(u.reshape(2, 2, 2, 2))
        best = np.inf
        for _ in range(10):
            phi = haar_batch(rng, 100_000, 2)
            # Re Tr(U^dag (I (x) Phi) V), computed entrywise on the full space
            overlap = np.einsum("nab,ibjc,iajc->n", phi, vt, ut).real
            obj = lambda_hs(4) * np.sqrt(np.maximum(8.0 - 2.0 * overlap, 0.0))
            best = min(best, obj.min())
        assert analytic <= best + 1e-12
        assert best - analytic < 5e-3

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            dist_hs(np.eye(4), np.eye(4), (2, 3))


class TestDistHsClosed:
    def test_env_factor_absorbed(self, rng):
        vs = random_unitary(2, rng)
        assert dist_hs_closed(kron(vs, random_unitary(4, rng)), vs, (2, 4)).value < 1e-7

    def test_global_phase(self, rng):
        vs = random_unitary(2, rng)
        assert dist_hs_closed(np.exp(0.7j) * kron(vs, np.eye(2)), vs, (2, 2)).value < 1e-7

    def test_hadamard_vs_identity(self):
        assert dist_hs_closed(kron(hadamard_gate(), np.eye(2)), np.eye(2), (2, 2)).value == pytest.approx(1.0)


class TestSystemDistances:
    def test_tensor_examples(self, rng):
        v = random_unitary(3, rng)
        assert dist_tensor(v, v) < 1e-7
        assert dist_tensor(np.exp(1.1j) * v, v) < 1e-7
        assert dist_tensor(hadamard_gate(), np.eye(2)) == pytest.approx(1.0)

    def test_tensor_matches_closed(self, rng):
        for n_e in (1, 2, 4):
            us, vs = random_unitary(2, rng), random_unitary(2, rng)
            closed = dist_hs_closed(kron(us, np.eye(n_e)), vs, (2, n_e)).value
            assert dist_tensor(us, vs) == pytest.approx(closed, abs=1e-12)

    def test_tensor_ignores_env_factors(self, rng):
        us, vs = random_unitary(2, rng), random_unitary(2, rng)
        ue, ve = random_unitary(3, rng), random_unitary(3, rng)
        assert dist_hs(kron(us, ue), kron(vs, ve), (2, 3)).value == pytest.approx(dist_tensor(us, vs), abs=1e-12)

    def test_phase_sensitive_examples(self, rng):
        v = random_unitary(2, rng)
        assert dist_phase_sensitive(v, v) < 1e-7
        assert dist_phase_sensitive(-v, v) == pytest.approx(math.sqrt(2))

    def test_phase_sensitive_dominates(self, rng):
        for _ in range(100):
            u, v = random_unitary(2, rng), random_unitary(2, rng)
            assert dist_phase_sensitive(u, v) >= dist_tensor(u, v) - 1e-12


class TestInvariance:
    @pytest.mark.parametrize("dims", [(2, 2), (2, 4)])
    def test_environment_transformations(self, dims, rng):
        n_s, n_e = dims
        for _ in range(200):
            u, phi = random_unitary(n_s * n_e, rng), random_unitary(n_e, rng)
            assert dist_hs(lift(phi, n_s) @ u, u, dims).value < 1e-7

    @given(seeds)
    @settings(max_examples=30, deadline=None)
    def test_stability_under_ancilla(self, seed):
        rng = np.random.default_rng(seed)
        for n_s, n_e in DIMS:
            u, v, xi = random_unitary(n_s * n_e, rng), random_unitary(n_s * n_e, rng), random_unitary(2, rng)
            base = dist_hs(u, v, (n_s, n_e)).value
            assert abs(dist_hs(kron(u, xi), kron(v, xi), (n_s, 2 * n_e)).value - base) < 1e-10

    @given(seeds)
    @settings(max_examples=30, deadline=None)
    def test_chaining(self, seed):
        rng = np.random.default_rng(seed)
        d = (2, 2)
        u1, u2 = random_unitary(4, rng), random_unitary(4, rng)
        v1 = kron(random_unitary(2, rng), random_unitary(2, rng))
        v2 = kron(random_unitary(2, rng), random_unitary(2, rng))
        lhs = dist_hs(u2 @ u1, v2 @ v1, d).value
        assert lhs <= dist_hs(u1, v1, d).value + dist_hs(u2, v2, d).value + 1e-9

    def test_optimal_phi_beats_random(self, rng):
        for _ in range(20):
            u, v = random_unitary(4, rng), random_unitary(4, rng)
            best = hs_objective(u, v, dist_hs(u, v, (2, 2)).optimal_phi, (2, 2))
            for _ in range(100):
                assert best <= hs_objective(u, v, random_unitary(2, rng), (2, 2)) + 1e-12

    def test_degenerate_gamma_still_optimal(self, rng):
        # Gamma = 0: every Phi is optimal, distance is 1
        res = dist_hs(kron(SX, random_unitary(2, rng)), np.eye(4), (2, 2))
        assert res.value == pytest.approx(1.0)
        assert unitarity_defect(res.optimal_phi) < 1e-12


class TestTwoNormBounds:
    def test_self(self, rng):
        u = random_unitary(4, rng)
        b = dist_two_norm_bounds(u, u, (2, 2))
        assert b.lower < 1e-12 and b.upper < 1e-12

    def test_class_member(self, rng):
        for _ in range(5):
            v, phi = random_unitary(8, rng), random_unitary(4, rng)
            b = dist_two_norm_bounds(lift(phi, 2) @ v, v, (2, 4))
            assert b.lower < 1e-6 and b.upper < 1e-6

    def test_invariants_and_hs_cap(self, rng):
        for n_s, n_e in DIMS:
            u, v = random_unitary(n_s * n_e, rng), random_unitary(n_s * n_e, rng)
            b = dist_two_norm_bounds(u, v, (n_s, n_e), SubgradientConfig(max_iters=500))
            assert b.lower <= b.upper + 1e-9
            assert spectral_norm(b.phi_relaxed) <= 1 + 1e-8
            assert unitarity_defect(b.phi_unitary) < 1e-10
            assert b.lower <= math.sqrt(n_s * n_e / 2) * dist_hs(u, v, (n_s, n_e)).value + 1e-8
            assert b.lower == pytest.approx(LAMBDA_2 * spectral_norm(u - lift(b.phi_relaxed, n_s) @ v))
            assert b.upper == pytest.approx(two_norm_objective(u, v, b.phi_unitary, (n_s, n_e)))

    def test_lower_bound_below_sampled_unitaries(self, rng):
        u, v = random_unitary(4, rng), random_unitary(4, rng)
        b = dist_two_norm_bounds(u, v, (2, 2))
        sampled = min(two_norm_objective(u, v, random_unitary(2, rng), (2, 2)) for _ in range(2000))
        assert b.lower <= sampled + 1e-12

    def test_upper_no_worse_than_hs_minimizer(self, rng):
        # the solve starts at the HS-optimal Phi, so the relaxed value cannot exceed it
        u, v = random_unitary(4, rng), random_unitary(4, rng)
        b = dist_two_norm_bounds(u, v, (2, 2))
        phi_hs = dist_hs(u, v, (2, 2)).optimal_phi
        assert b.lower <= two_norm_objective(u, v, phi_hs, (2, 2)) + 1e-12

    @pytest.mark.parametrize("eps", [1e-1, 1e-2, 1e-3])
    def test_trivial_environment_phase_scan(self, rng, eps):
        # with n_e = 1 the unitary Phi is a phase; a dense scan gives the minimum directly.
        # near-class pairs check that the solve resolves residuals far below unit scale
        n = 4
        h = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        v = random_unitary(n, rng)
        w, q = np.linalg.eigh((h + h.conj().T) / 2)
        u = np.exp(0.7j) * v @ (q @ np.diag(np.exp(1j * eps * w)) @ q.conj().T)
        from scipy.optimize import minimize_scalar

        def f(t):
            return LAMBDA_2 * spectral_norm(u - np.exp(1j * t) * v)

        theta = np.linspace(0, 2 * np.pi, 20_001)
        t0 = theta[int(np.argmin([f(t) for t in theta]))]
        step = theta[1]
        scan = minimize_scalar(f, bounds=(t0 - step, t0 + step), method="bounded", options={"xatol": 1e-12}).fun
        b = dist_two_norm_bounds(u, v, (n, 1))
        assert b.lower <= scan + 1e-12
        assert b.upper == pytest.approx(scan, rel=1e-3)

    def test_unconverged_is_flagged(self, rng):
        u, v = random_unitary(4, rng), random_unitary(4, rng)
        b = dist_two_norm_bounds(u, v, (2, 2), SubgradientConfig(max_iters=3, patience=50))
        assert not b.converged and b.iterations == 3
