"""Independent optimizers and the discrete gradient check."""
import numpy as np
import pytest

from conftest import eta_threshold, toy_problem, zero_problem
from sparsebeam.meshes import P0Field, l2_diff_p0
from sparsebeam.oracles import (
    OracleConfig,
    ReducedQuadratic,
    dense_kkt_solve,
    fd_gradient_check,
    prox_gradient_solve,
)
from sparsebeam.ssn import ssn_solve


class TestReducedQuadratic:
    def test_pbar_matches_solver_chain(self):
        prob = toy_problem(n=12, nu=1e-4)
        rq = ReducedQuadratic(prob)
        rng = np.random.default_rng(1)
        u = rng.normal(size=12)
        via_pde = prob.averaged_adjoint(prob.solve_state(P0Field(prob.mesh, u))).values
        assert np.allclose(rq.pbar(u), via_pde, atol=1e-12)

    def test_reduced_operator_is_spd(self):
        # T is built through two banded solves, so its symmetry holds to the
        # solver's backward-error floor; eigenvalues decay like a compact
        # operator's, hence the signed tolerance on the smallest one
        prob = toy_problem(n=10)
        rq = ReducedQuadratic(prob)
        sym_gap = np.max(np.abs(rq.T - rq.T.T))
        assert sym_gap <= 1e-10 * np.max(np.abs(rq.T))
        eigs = np.linalg.eigvalsh(0.5 * (rq.T + rq.T.T))
        assert eigs.min() >= -1e-12 * eigs.max()
        assert eigs.max() > 0

    def test_lipschitz_bounds_largest_eigenvalue(self):
        prob = toy_problem(n=10, nu=1e-4)
        rq = ReducedQuadratic(prob)
        lam = np.max(np.linalg.eigvalsh(0.5 * (rq.T + rq.T.T))) + rq.nu
        assert rq.lipschitz() >= lam * 0.999


class TestProxGradient:
    def test_zero_data(self):
        res = prox_gradient_solve(zero_problem())
        assert res.converged
        assert np.all(res.u.values == 0.0)

    def test_large_eta_shuts_off(self):
        prob = toy_problem(nu=1e-4)
        res = prox_gradient_solve(prob.with_control(eta=1.05 * eta_threshold(prob)))
        assert res.certified
        assert np.all(res.u.values == 0.0)

    def test_certified_against_ssn(self):
        prob = toy_problem(n=20, nu=1e-5)
        p = prob.with_control(eta=0.4 * eta_threshold(prob))
        orc = prox_gradient_solve(p, OracleConfig(tol=1e-13))
        res = ssn_solve(p)
        assert orc.certified and res.converged
        assert l2_diff_p0(res.u, orc.u) <= 1e-9

    def test_unaccelerated_still_converges(self):
        prob = toy_problem(n=10, nu=1e-3)
        p = prob.with_control(eta=0.3 * eta_threshold(prob))
        plain = prox_gradient_solve(p, OracleConfig(accelerate=False, tol=1e-11))
        fast = prox_gradient_solve(p, OracleConfig(tol=1e-11))
        assert plain.converged and fast.converged
        assert l2_diff_p0(plain.u, fast.u) <= 1e-8

    def test_uncertified_path_reports_flag(self):
        prob = toy_problem(n=10, nu=1e-3)
        res = prox_gradient_solve(prob, OracleConfig(max_iter=1, polish=False, tol=1e-16))
        assert not res.certified


class TestDenseKKT:
    def test_small_mesh_certifies(self):
        prob = toy_problem(n=15, nu=1e-5)
        p = prob.with_control(eta=0.35 * eta_threshold(prob))
        dk = dense_kkt_solve(p)
        assert dk.certified
        res = ssn_solve(p)
        assert l2_diff_p0(res.u, dk.u) <= 1e-9

    def test_large_mesh_refused(self):
        with pytest.raises(ValueError):
            dense_kkt_solve(toy_problem(n=40))

    def test_agrees_with_prox_on_bound_active_instance(self):
        prob = toy_problem(n=12, nu=1e-6, bound=5.0)  # bounds clip hard
        dk = dense_kkt_solve(prob)
        orc = prox_gradient_solve(prob, OracleConfig(tol=1e-13))
        assert dk.certified and orc.certified
        assert l2_diff_p0(dk.u, orc.u) <= 1e-9
        assert np.max(np.abs(dk.u.values)) == pytest.approx(5.0)


class TestGradientCheck:
    @pytest.mark.parametrize("step", [1e-3, 1e-4, 1e-5])
    def test_adjoint_gradient_matches_finite_differences(self, step):
        # the smooth reduced cost is quadratic, so central differences are
        # exact up to roundoff at any step
        prob = toy_problem(n=20, nu=1e-4)
        rng = np.random.default_rng(7)
        u = P0Field(prob.mesh, rng.uniform(-5, 5, size=20))
        assert fd_gradient_check(prob, u, step=step) <= 1e-6

    def test_at_zero_control(self):
        prob = toy_problem(n=20, nu=1e-4)
        assert fd_gradient_check(prob, prob.zero_control()) <= 1e-6

    def test_with_theta_tracking_term(self):
        from dataclasses import replace

        prob = replace(toy_problem(n=16, nu=1e-4), adjoint_theta_term=True)
        rng = np.random.default_rng(9)
        u = P0Field(prob.mesh, rng.uniform(-2, 2, size=16))
        assert fd_gradient_check(prob, u) <= 1e-6
