"""Semismooth Newton solver, implemented in primal-dual active set form.

The discrete optimality system couples the state pair x = (w, theta), the
adjoint pair y = (p, q), the control u, and the aggregate multiplier mu:

    F1:  K x - B u - L_f        = 0     (state equation)
    F2:  nu*u + mu - pbar       = 0     (gradient consistency)
    F3:  Mt x + K y - L_d       = 0     (adjoint, descent convention)
    F4:  C(u, mu)               = 0     (pointwise optimality)

where pbar is the elementwise nodal average of p, B carries a piecewise
constant control to the deflection load, and Mt is the tracking mass term.

Each iteration classifies every element by z = nu*u + mu (which equals pbar
at all iterates after the first), freezes the implied branch -- zero, lower
or upper bound, or free with mu = +/- eta -- and solves the resulting linear
coupled system exactly.  That is the semismooth Newton step for C written in
new-iterate form, so the method terminates finitely: once the branch pattern
repeats, the iterate solves its own linearization and C vanishes to
roundoff.  Cold starts with a very small L2 weight can overshoot the bounds
and cycle between branch patterns; a revisited pattern is detected exactly
and the iteration is reseeded once from a continuation path that walks the
L2 weight down from a safely large value.  The convergence test always uses
the sign-consistent
(symmetric-eta) complementarity variant regardless of
ControlParams.c_last_term_sign, since only that variant vanishes at the true
minimizer.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .control import (
    BRANCH_LOWER,
    BRANCH_NEG,
    BRANCH_POS,
    BRANCH_UPPER,
    MultiplierState,
    classify_branches,
    complementarity_values,
    reconstruct_multipliers,
    shrink,
    variational_inequality_residual,
)
from .fem import (
    AdjointSolution,
    StateSolution,
    assemble_load,
    control_load_matrix,
    p1_mass_matrix,
)
from .meshes import P0Field, p0_average
from .problem import ControlProblem

__all__ = [
    "SSNConfig",
    "SSNResult",
    "ssn_solve",
    "solve_pure_l2",
    "residual",
    "newton_system",
    "kkt_residual",
]


@dataclass(frozen=True)
class SSNConfig:
    """Solver knobs.  u0/mu0 warm-start the branch classification."""

    tol: float = 1e-10
    max_iter: int = 50
    u0: Optional[P0Field] = None
    mu0: Optional[P0Field] = None

    def __post_init__(self):
        if not (self.tol > 0):
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class SSNResult:
    u: P0Field
    mu: P0Field
    state: StateSolution
    adjoint: AdjointSolution
    multipliers: MultiplierState
    converged: bool
    iterations: int
    residual_history: List[float] = field(default_factory=list)
    active_set_history: List[np.ndarray] = field(default_factory=list)
    branches: Optional[np.ndarray] = None
    null_count: int = 0


class _Pieces:
    """Matrices and loads of the coupled optimality system, assembled once."""

    def __init__(self, problem: ControlProblem):
        mesh, beam = problem.mesh, problem.beam
        self.op = problem.operator
        self.K = self.op.K
        self.m = self.K.shape[0]
        self.B = control_load_matrix(mesh)
        self.Mt, self.Ld = _tracking_blocks(problem)
        self.Avg = _average_matrix(problem)
        self.Lf = assemble_load(mesh, beam, problem.loads.f, problem.loads.g)
        self.a, self.b = problem.bounds
        self.nu = problem.control.nu
        self.eta = problem.control.eta
        self.lam = None  # reduced-operator norm, estimated lazily
        # row-sum norms for backward-error residual scaling
        self.K_norm = float(np.max(np.abs(self.K).sum(axis=1)))
        self.Mt_norm = float(np.max(np.abs(self.Mt).sum(axis=1)))
        self.B_norm = float(np.max(np.abs(self.B).sum(axis=1)))


def _tracking_blocks(problem: ControlProblem):
    """Mass term Mt (interleaved dofs) and target load L_d of the adjoint row."""
    mesh, beam, loads = problem.mesh, problem.beam, problem.loads
    m = 2 * (mesh.n - 1)
    mw = p1_mass_matrix(mesh).tocoo()
    rows = [2 * mw.row]
    cols = [2 * mw.col]
    vals = [mw.data]
    if problem.adjoint_theta_term:
        rows.append(2 * mw.row + 1)
        cols.append(2 * mw.col + 1)
        vals.append((beam.t**2 / 12.0) * mw.data)
    mt = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, m),
    ).tocsr()
    ld = assemble_load(mesh, beam, loads.w_d, 0.0)
    if problem.adjoint_theta_term:
        ld = ld + assemble_load(mesh, beam, 0.0, loads.theta_d)
    return mt, ld


def _average_matrix(problem: ControlProblem) -> sp.csr_matrix:
    """n x m map from interleaved nodal dofs to elementwise averages of the
    deflection-like component (boundary nodes contribute zero)."""
    mesh = problem.mesh
    n = mesh.n
    m = 2 * (n - 1)
    rows, cols, vals = [], [], []
    for j in range(n):
        for node in (j, j + 1):
            if 1 <= node <= n - 1:
                rows.append(j)
                cols.append(2 * (node - 1))
                vals.append(0.5)
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, m)).tocsr()


def _fixed_control(branches: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Control values implied by the non-free branches (zero on free ones)."""
    u = np.zeros(branches.shape)
    u[branches == BRANCH_UPPER] = b[branches == BRANCH_UPPER]
    u[branches == BRANCH_LOWER] = a[branches == BRANCH_LOWER]
    return u


def _free_indices(branches: np.ndarray) -> np.ndarray:
    return np.nonzero((branches == BRANCH_POS) | (branches == BRANCH_NEG))[0]


def _build_coupled(pieces: _Pieces, branches: np.ndarray, nu: Optional[float] = None,
                   shift: Optional[np.ndarray] = None):
    """Coupled sparse system for one branch pattern.

    Unknowns are stacked as (state dofs, adjoint dofs, free controls); bound
    and zero controls are substituted into the right-hand side.  Eliminating
    the state and adjoint blocks reduces the matrix to nu*I + T[free, free]
    with T the dense reduced operator of the oracle module.  A shift vector
    adds to the control-row right-hand side; together with an inflated nu it
    realizes the proximally centered subproblems of the reseeding path.
    """
    nu = pieces.nu if nu is None else nu
    free = _free_indices(branches)
    u_fix = _fixed_control(branches, pieces.a, pieces.b)
    rhs1 = pieces.Lf + pieces.B @ u_fix
    if free.size == 0:
        return None, np.concatenate([rhs1, pieces.Ld]), free, u_fix
    s = np.where(branches[free] == BRANCH_POS, 1.0, -1.0)
    Bf = pieces.B[:, free]
    Af = pieces.Avg[free, :]
    nuI = sp.identity(free.size, format="csr") * nu
    A = sp.bmat(
        [[pieces.K, None, -Bf], [pieces.Mt, pieces.K, None], [None, -Af, nuI]],
        format="csc",
    )
    rhs3 = -pieces.eta * s
    if shift is not None:
        rhs3 = rhs3 + shift[free]
    rhs = np.concatenate([rhs1, pieces.Ld, rhs3])
    return A, rhs, free, u_fix


def newton_system(problem: ControlProblem, branches: np.ndarray):
    """Expose one iteration's linear system for a given branch pattern.

    Returns (A, rhs, free): A is None when no element is on a free branch
    (the system then decouples into two banded solves).
    """
    A, rhs, free, _ = _build_coupled(_Pieces(problem), np.asarray(branches, dtype=int))
    return A, rhs, free


def _solve_pattern(pieces: _Pieces, branches: np.ndarray, nu: Optional[float] = None,
                   shift: Optional[np.ndarray] = None):
    """Solve the coupled system of one branch pattern exactly."""
    A, rhs, free, u_fix = _build_coupled(pieces, branches, nu, shift)
    m = pieces.m
    if A is None:
        x = pieces.op.solve(rhs[:m])
        y = pieces.op.solve(rhs[m:] - pieces.Mt @ x)
        u = u_fix
    else:
        lu = splu(A)
        sol = lu.solve(rhs)
        for _ in range(2):  # refinement toward the backward-error floor
            sol = sol + lu.solve(rhs - A @ sol)
        x, y = sol[:m], sol[m : 2 * m]
        u = u_fix.copy()
        u[free] = sol[2 * m :]
    return x, y, u, free


def _reduced_norm(pieces: _Pieces, iters: int = 60) -> float:
    """Power-iteration estimate of the largest eigenvalue of the reduced
    control-to-gradient operator Avg K^-1 Mt K^-1 B (similar to an SPD
    matrix, so the spectrum is real and nonnegative)."""
    rng = np.random.default_rng(0)
    v = rng.standard_normal(pieces.B.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        x = pieces.op.solve(pieces.B @ v)
        y = pieces.op.solve(pieces.Mt @ x)
        w = pieces.Avg @ y
        lam = np.linalg.norm(w)
        if lam == 0.0:
            return 0.0
        v = w / lam
    return lam


def _pdas_stage(pieces: _Pieces, z_eff: np.ndarray, nu_eff: float, cap: int,
                shift: Optional[np.ndarray] = None):
    """Plain active-set iteration at an effective weight nu_eff, run until
    the branch pattern repeats or the cap is hit.

    With a shift the stage solves the proximally centered subproblem whose
    classification point is the plain adjoint average plus the shift.
    Returns the plain adjoint averages and control of the last iterate, the
    number of pattern solves spent, and whether the pattern stabilized.
    """
    branches = classify_branches(z_eff, pieces.a, pieces.b, nu_eff, pieces.eta)
    z_plain = z_eff if shift is None else z_eff - shift
    u = _fixed_control(branches, pieces.a, pieces.b)
    count = 0
    stable = False
    for _ in range(cap):
        count += 1
        _, y, u, _ = _solve_pattern(pieces, branches, nu_eff, shift)
        z_plain = pieces.Avg @ y
        z_eff = z_plain if shift is None else z_plain + shift
        nxt = classify_branches(z_eff, pieces.a, pieces.b, nu_eff, pieces.eta)
        if np.array_equal(nxt, branches):
            stable = True
            break
        branches = nxt
    return z_plain, u, count, stable


def _continuation_seed(pieces: _Pieces, z: np.ndarray, budget: int = 800):
    """Reseed a cycling iteration from a proximal-point continuation.

    Each stage solves the problem plus tau/2 * ||u - c||^2 centered at the
    previous stage's solution, so the stage optimality map keeps the true
    weight's sparsity threshold and box while its classification point is
    shifted by tau*c and its quadratic weight inflated by tau.  Centering
    (rather than inflating the weight around zero) keeps the stage
    solutions converging to the true minimizer as tau shrinks; each stable
    stage is an exact proximal-point step, which cannot increase the
    distance to the minimizer.  The active-set map is contractive once tau
    dominates the reduced operator norm, and in a neighborhood of the
    minimizer it terminates finitely even at tau = 0, so tau is quartered
    after a stable stage and re-inflated after a cycling one; after every
    stable stage a capped probe at the true weight checks whether the plain
    iteration now terminates.  Returns the classification point and the
    number of pattern solves spent.
    """
    if pieces.lam is None:
        pieces.lam = _reduced_norm(pieces)
    nu_t = pieces.nu
    tau0 = 10.0 * max(pieces.lam, nu_t)
    tau = tau0
    # admissible center: the pointwise map of the current classification point
    c = np.clip(shrink(z, pieces.eta) / nu_t, pieces.a, pieces.b)
    total = 0
    while total < budget:
        stage_shift = tau * c
        z_new, u_new, used, stable = _pdas_stage(
            pieces, z + stage_shift, nu_t + tau, cap=8, shift=stage_shift)
        total += used
        if stable:
            z, c = z_new, u_new
            z_try, _, used, settled = _pdas_stage(pieces, z, nu_t, cap=8)
            total += used
            if settled:
                return z_try, total
            tau = max(tau * 0.25, 1e-12 * tau0)
        else:
            tau = min(tau * 4.0, tau0)
    return z, total


def ssn_solve(problem: ControlProblem, config: SSNConfig = SSNConfig()) -> SSNResult:
    """Run the active-set iteration to the finite-termination fixed point."""
    mesh, control = problem.mesh, problem.control
    nu, eta = control.nu, control.eta
    pieces = _Pieces(problem)

    # initial classification point z = nu*u + mu
    if config.u0 is not None and config.mu0 is None:
        # make the warm start self-consistent: mu = pbar(u0) - nu*u0, so the
        # first classification sees the true adjoint of u0
        st0 = problem.solve_state(config.u0)
        z = p0_average(problem.solve_adjoint(st0).p).values.copy()
    else:
        u_init = config.u0.values if config.u0 is not None else np.zeros(mesh.n)
        mu_init = config.mu0.values if config.mu0 is not None else np.zeros(mesh.n)
        z = nu * u_init + mu_init

    residual_history: List[float] = []
    active_history: List[np.ndarray] = []
    branches = classify_branches(z, pieces.a, pieces.b, nu, eta)
    u_vals = np.zeros(mesh.n)
    converged = False
    iterations = 0
    seen_patterns = set()
    reseeded = False

    for _ in range(config.max_iter):
        key = branches.tobytes()
        if key in seen_patterns:
            # the pattern map is deterministic, so a revisited pattern is a
            # genuine cycle; reseed once from a weight-continuation path
            if reseeded:
                break
            reseeded = True
            z, extra = _continuation_seed(pieces, z)
            iterations += extra
            seen_patterns.clear()
            branches = classify_branches(z, pieces.a, pieces.b, nu, eta)
            key = branches.tobytes()
        seen_patterns.add(key)

        iterations += 1
        active_history.append(_free_indices(branches))
        x, y, u_vals, _ = _solve_pattern(pieces, branches)
        z = pieces.Avg @ y
        mu_vals = z - nu * u_vals

        # PDE rows measure the normwise backward error: for thin beams the
        # stiffness carries the 1/t^2 shear scale, so an absolute or
        # load-relative norm would sit above any direct solver's floor
        scale_f = 1.0 + np.max(np.abs(pieces.Lf)) \
            + pieces.K_norm * np.max(np.abs(x)) + pieces.B_norm * np.max(np.abs(u_vals))
        scale_d = 1.0 + np.max(np.abs(pieces.Ld)) \
            + pieces.K_norm * np.max(np.abs(y)) + pieces.Mt_norm * np.max(np.abs(x))
        r_state = np.max(np.abs(pieces.K @ x - pieces.B @ u_vals - pieces.Lf)) / scale_f
        r_adj = np.max(np.abs(pieces.Mt @ x + pieces.K @ y - pieces.Ld)) / scale_d
        c = complementarity_values(u_vals, mu_vals, pieces.a, pieces.b, nu, eta, "symmetric")
        # gradient and complementarity rows are normalized by max(1, nu): the
        # nu-scaled Newton row would make an unscaled max-norm vacuous
        r_c = np.max(np.abs(c)) / max(1.0, nu)
        residual = max(r_state, r_adj, r_c)
        residual_history.append(residual)

        next_branches = classify_branches(z, pieces.a, pieces.b, nu, eta)
        if np.array_equal(next_branches, branches) and residual <= config.tol:
            # record the repeated set: stabilization is part of the result
            active_history.append(_free_indices(next_branches))
            converged = True
            break
        branches = next_branches

    # final consistency pass through the banded operator so the returned
    # state/adjoint agree with solve_state/solve_adjoint on the returned u
    u_final = np.clip(u_vals, pieces.a, pieces.b)
    u_field = P0Field(mesh, u_final)
    state = problem.solve_state(u_field)
    adjoint = problem.solve_adjoint(state)
    mu_field = P0Field(mesh, p0_average(adjoint.p).values - nu * u_final)
    mult = reconstruct_multipliers(u_field, mu_field, control)
    return SSNResult(
        u=u_field,
        mu=mu_field,
        state=state,
        adjoint=adjoint,
        multipliers=mult,
        converged=converged,
        iterations=iterations,
        residual_history=residual_history,
        active_set_history=active_history,
        branches=branches,
        null_count=int(np.count_nonzero(u_final == 0.0)),
    )


def solve_pure_l2(problem: ControlProblem, config: SSNConfig = SSNConfig()) -> SSNResult:
    """Same iteration with the sparsity weight switched off (eta = 0)."""
    return ssn_solve(problem.with_control(eta=0.0), config)


def residual(problem: ControlProblem, u: P0Field, mu: P0Field,
             state: Optional[StateSolution] = None,
             adjoint: Optional[AdjointSolution] = None) -> dict:
    """Blockwise residual of the optimality system at a candidate point.

    state/adjoint default to the exact solves induced by u, which zeroes F1
    and F3; pass stale fields to probe the bookkeeping of individual blocks.
    Returns arrays F1 (state dofs), F2 (elements), F3 (state dofs), F4
    (elements).
    """
    pieces = _Pieces(problem)
    if state is None:
        state = problem.solve_state(u)
    if adjoint is None:
        adjoint = problem.solve_adjoint(state)
    x = np.empty(pieces.m)
    x[0::2] = state.w.interior
    x[1::2] = state.theta.interior
    y = np.empty(pieces.m)
    y[0::2] = adjoint.p.interior
    y[1::2] = adjoint.q.interior
    pbar = p0_average(adjoint.p).values
    nu, eta = pieces.nu, pieces.eta
    f1 = pieces.K @ x - pieces.B @ u.values - pieces.Lf
    f2 = nu * u.values + mu.values - pbar
    f3 = pieces.Mt @ x + pieces.K @ y - pieces.Ld
    f4 = complementarity_values(
        u.values, mu.values, pieces.a, pieces.b, nu, eta,
        problem.control.c_last_term_sign,
    )
    return {"F1": f1, "F2": f2, "F3": f3, "F4": f4}


def kkt_residual(problem: ControlProblem, u: P0Field, mu: Optional[P0Field] = None) -> dict:
    """A-posteriori optimality measures of a candidate control.

    Solves the state and adjoint at u and reports max-norms of the gradient
    consistency nu*u + mu - pbar (zero when mu is reconstructed, hence only
    meaningful for caller-supplied mu) and of the complementarity function,
    plus the variational-inequality distance to the pointwise optimizer.
    """
    control = problem.control
    state = problem.solve_state(u)
    p = problem.solve_adjoint(state).p
    pbar = p0_average(p).values
    if mu is None:
        mu = P0Field(u.mesh, pbar - control.nu * u.values)
    a, b = problem.bounds
    consistency = float(np.max(np.abs(control.nu * u.values + mu.values - pbar)))
    c = complementarity_values(
        u.values, mu.values, a, b, control.nu, control.eta, "symmetric"
    )
    return {
        "consistency": consistency,
        "complementarity": float(np.max(np.abs(c))),
        "vi": variational_inequality_residual(u, p, control),
    }
