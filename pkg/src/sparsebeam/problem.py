"""Container for one control problem instance.

Bundles the mesh, beam parameters, loads, and control parameters, and fixes
the two conventions the optimality layer depends on:

* the adjoint is solved with tracking_sign=-1, i.e. with residual
  (w_d - w_h), so that the averaged adjoint pbar enters the optimality
  system as nu*u + mu = pbar with mu a (sub)gradient of the nonsmooth term
  at a *minimizer* of the cost;
* adjoint_theta_term controls whether the rotation tracking term
  (t^2/12)(theta_h - theta_d, beta) is included in the adjoint load.  The
  cost functional tracks the deflection only, so the exact discrete
  optimality system of cost() has this off; it is on by default in the
  plain fem.solve_adjoint which mirrors the full dual equation.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional

from .control import (
    ControlParams,
    CostBreakdown,
    cost as control_cost,
    discretize_bounds,
    variational_inequality_residual,
)
from .fem import (
    LOCKING_FREE,
    AdjointSolution,
    BeamOperator,
    BeamParams,
    LoadData,
    StateSolution,
    _scheme_check,
    solve_adjoint,
    solve_state,
)
from .meshes import Mesh1D, P0Field, p0_average

__all__ = ["ControlProblem"]


@dataclass(frozen=True)
class ControlProblem:
    mesh: Mesh1D
    beam: BeamParams
    loads: LoadData
    control: ControlParams
    scheme: str = LOCKING_FREE
    adjoint_theta_term: bool = False

    def __post_init__(self):
        _scheme_check(self.scheme)
        if abs(self.beam.L - self.mesh.length) > 1e-12 * self.beam.L:
            raise ValueError("mesh length does not match beam length L")
        discretize_bounds(self.control, self.mesh)  # validates a <= 0 <= b

    @cached_property
    def operator(self) -> BeamOperator:
        # one factorization shared by every state/adjoint solve
        return BeamOperator(self.mesh, self.beam, self.scheme)

    @cached_property
    def bounds(self):
        return discretize_bounds(self.control, self.mesh)

    def zero_control(self) -> P0Field:
        return P0Field.zeros(self.mesh)

    def solve_state(self, u: Optional[P0Field] = None) -> StateSolution:
        return solve_state(self.mesh, self.beam, self.loads, u=u,
                           scheme=self.scheme, operator=self.operator)

    def solve_adjoint(self, state: StateSolution) -> AdjointSolution:
        return solve_adjoint(self.mesh, self.beam, state, self.loads,
                             scheme=self.scheme, theta_term=self.adjoint_theta_term,
                             tracking_sign=-1.0, operator=self.operator)

    def averaged_adjoint(self, state: StateSolution) -> P0Field:
        return p0_average(self.solve_adjoint(state).p)

    def cost(self, u: P0Field, state: Optional[StateSolution] = None) -> CostBreakdown:
        if state is None:
            state = self.solve_state(u)
        return control_cost(u, state.w, self.loads.w_d, self.control)

    def optimality_residual(self, u: P0Field) -> float:
        """L2 distance from u to the pointwise optimal control of its own adjoint."""
        p = self.solve_adjoint(self.solve_state(u)).p
        return variational_inequality_residual(u, p, self.control)

    def with_mesh(self, mesh: Mesh1D) -> "ControlProblem":
        return replace(self, mesh=mesh)

    def with_control(self, **changes) -> "ControlProblem":
        return replace(self, control=replace(self.control, **changes))
