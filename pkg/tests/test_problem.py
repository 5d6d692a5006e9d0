"""ControlProblem wiring: conventions, caching, derived quantities."""
import numpy as np
import pytest

from conftest import toy_problem, zero_problem
from sparsebeam.control import ControlParams
from sparsebeam.fem import BeamParams, LoadData, solve_adjoint, solve_state
from sparsebeam.meshes import P0Field, build_uniform_mesh, p0_average
from sparsebeam.problem import ControlProblem


def test_mesh_length_must_match_beam():
    mesh = build_uniform_mesh(4, 2.0)
    with pytest.raises(ValueError):
        ControlProblem(mesh=mesh, beam=BeamParams(L=1.0), loads=LoadData(),
                       control=ControlParams(nu=1.0, eta=0.0))


def test_bounds_validated_at_construction():
    mesh = build_uniform_mesh(4)
    with pytest.raises(ValueError):
        ControlProblem(mesh=mesh, beam=BeamParams(), loads=LoadData(),
                       control=ControlParams(nu=1.0, eta=0.0, a=lambda x: x - 0.5))


def test_operator_is_cached():
    prob = toy_problem(n=8)
    assert prob.operator is prob.operator


def test_state_matches_module_level_solve():
    prob = toy_problem(n=10)
    u = P0Field.constant(prob.mesh, 1.5)
    st = prob.solve_state(u)
    st2 = solve_state(prob.mesh, prob.beam, prob.loads, u=u, scheme=prob.scheme)
    assert np.allclose(st.w.values, st2.w.values, atol=1e-15)


def test_adjoint_uses_descent_sign():
    # with w_d = 0 and a positive deflection, the descent adjoint is the
    # negative of the plain tracking adjoint
    prob = toy_problem(n=10)
    st = prob.solve_state(P0Field.constant(prob.mesh, 1.0))
    plain = solve_adjoint(prob.mesh, prob.beam, st, prob.loads,
                          scheme=prob.scheme, theta_term=False, tracking_sign=+1.0)
    adj = prob.solve_adjoint(st)
    assert np.allclose(adj.p.values, -plain.p.values, atol=1e-15)


def test_averaged_adjoint_matches_p0_average():
    prob = toy_problem(n=10)
    st = prob.solve_state()
    assert np.array_equal(prob.averaged_adjoint(st).values,
                          p0_average(prob.solve_adjoint(st).p).values)


def test_cost_delegates_to_control_layer():
    prob = toy_problem(n=10, eta=1e-5)
    u = P0Field.constant(prob.mesh, 2.0)
    br = prob.cost(u)
    assert br.l1_term == pytest.approx(1e-5 * 2.0)
    assert br.l2_term == pytest.approx(0.5 * prob.control.nu * 4.0)
    assert br.total > 0


def test_optimality_residual_zero_data():
    prob = zero_problem()
    assert prob.optimality_residual(prob.zero_control()) == 0.0


def test_with_control_and_with_mesh_rebuild():
    prob = toy_problem(n=8)
    finer = prob.with_mesh(build_uniform_mesh(16))
    assert finer.mesh.n == 16
    assert finer.beam is prob.beam
    changed = prob.with_control(eta=0.125)
    assert changed.control.eta == 0.125
    assert changed.control.nu == prob.control.nu
    assert prob.control.eta == 0.0  # original untouched
