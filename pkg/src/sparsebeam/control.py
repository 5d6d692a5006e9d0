"""Pointwise optimality machinery for the sparse box-constrained control.

Cost functional:

    J(w, u) = 1/2 ||w - w_d||^2  +  nu/2 ||u||^2  +  eta ||u||_L1,

minimized over controls with pi_h(a) <= u <= pi_h(b) elementwise.  With the
descent-convention averaged adjoint pbar (see fem.solve_adjoint), the
optimality system reads nu*u + mu = pbar with mu = lambda + lambda_b -
lambda_a, |lambda| <= eta and lambda = eta*sign(u) where u is nonzero, and
nonnegative bound multipliers lambda_a, lambda_b with complementary
slackness.  Its pointwise solution is a clipped soft-shrinkage:

    u_j = clip( shrink(pbar_j, eta) / nu, a_j, b_j ).

complementarity() evaluates the nonsmooth reformulation C(u, mu) whose root
set is exactly this system; C = 0 is both the Newton residual and the
a-posteriori certificate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .meshes import GAUSS_2PT, Mesh1D, P0Field, P1Field, eval_p1, p0_average, pi_h

__all__ = [
    "ControlParams",
    "CostBreakdown",
    "MultiplierState",
    "discretize_bounds",
    "shrink",
    "pointwise_optimal_control",
    "complementarity",
    "classify_branches",
    "active_set",
    "variational_inequality_residual",
    "cost",
    "reconstruct_multipliers",
    "kkt_consistent_scalar",
    "BRANCH_ZERO",
    "BRANCH_LOWER",
    "BRANCH_UPPER",
    "BRANCH_NEG",
    "BRANCH_POS",
]

BoundData = Union[float, P0Field, Callable[[np.ndarray], np.ndarray]]

# branch codes of the pointwise KKT system
BRANCH_ZERO = 0    # u = 0, |mu| <= eta
BRANCH_POS = 1     # 0 < u < b, mu = eta
BRANCH_NEG = -1    # a < u < 0, mu = -eta
BRANCH_UPPER = 2   # u = b, mu >= eta
BRANCH_LOWER = -2  # u = a, mu <= -eta

C_LAST_TERM_SIGNS = ("symmetric", "asymmetric")


@dataclass(frozen=True)
class ControlParams:
    """Control weights and box bounds.

    nu > 0 is the quadratic weight, eta >= 0 the sparsity weight; a <= 0 <= b
    are the bounds (constants, callables, or P0 fields), enforced elementwise
    after projection onto piecewise constants.  l1_half_factor only changes
    how the L1 term is *reported* in cost breakdowns (eta/2 instead of eta);
    the optimality system always uses weight eta.  c_last_term_sign selects
    the sign of eta in the final min-term of the complementarity function;
    only "symmetric" has the exact root set of the optimality system.
    """

    nu: float
    eta: float
    a: BoundData = -np.inf
    b: BoundData = np.inf
    l1_half_factor: bool = False
    c_last_term_sign: str = "symmetric"

    def __post_init__(self):
        if not (self.nu > 0):
            raise ValueError("nu must be positive")
        if not (self.eta >= 0):
            raise ValueError("eta must be nonnegative")
        if self.c_last_term_sign not in C_LAST_TERM_SIGNS:
            raise ValueError(f"c_last_term_sign must be one of {C_LAST_TERM_SIGNS}")
        # infinite constant bounds are allowed (unconstrained side); sign
        # checks for non-constant bounds happen at discretization time
        if np.isscalar(self.a) and self.a > 0:
            raise ValueError("a must satisfy a <= 0")
        if np.isscalar(self.b) and self.b < 0:
            raise ValueError("b must satisfy b >= 0")


def discretize_bounds(params: ControlParams, mesh: Mesh1D):
    """Project bounds onto piecewise constants; validate a <= 0 <= b elementwise."""

    def proj(bound):
        if np.isscalar(bound):
            # +-inf constants are fine here (one-sided box); pi_h would reject them
            return np.full(mesh.n, float(bound))
        return pi_h(bound, mesh).values

    a = proj(params.a)
    b = proj(params.b)
    if np.any(a > 0) or np.any(b < 0):
        raise ValueError("discretized bounds must satisfy a <= 0 <= b elementwise")
    return a, b


def shrink(s, eta: float):
    """Soft shrinkage sign(s) * max(|s| - eta, 0)."""
    s = np.asarray(s, dtype=float)
    out = np.sign(s) * np.maximum(np.abs(s) - eta, 0.0)
    return out if out.ndim else float(out)


def pointwise_optimal_control(p_bar, params: ControlParams, mesh: Optional[Mesh1D] = None):
    """u = clip(shrink(pbar, eta)/nu, a, b) elementwise.

    p_bar may be a P0Field (returns a P0Field) or a bare array (returns an
    array; constant bounds only in that case).
    """
    if isinstance(p_bar, P0Field):
        a, b = discretize_bounds(params, p_bar.mesh)
        vals = np.clip(shrink(p_bar.values, params.eta) / params.nu, a, b)
        return P0Field(p_bar.mesh, vals)
    if mesh is not None:
        a, b = discretize_bounds(params, mesh)
    else:
        if not (np.isscalar(params.a) and np.isscalar(params.b)):
            raise ValueError("array input needs a mesh for non-constant bounds")
        a, b = params.a, params.b
    return np.clip(shrink(np.asarray(p_bar, dtype=float), params.eta) / params.nu, a, b)


def complementarity_values(u: np.ndarray, mu: np.ndarray, a, b, nu: float, eta: float,
                           last_term_sign: str = "symmetric") -> np.ndarray:
    """C(u, mu) elementwise; zero exactly at points satisfying the optimality system.

    C = nu*u - max(0, nu*u + mu - eta) - min(0, nu*u + mu + eta)
             + max(0, nu*(u-b) + mu - eta) + min(0, nu*(u-a) + mu +/- eta)

    with +eta in the last term for "symmetric" (the consistent variant, a
    mirror image of the upper-bound term) and -eta for "asymmetric".
    """
    z = nu * u + mu
    last_eta = eta if last_term_sign == "symmetric" else -eta
    c = (
        nu * u
        - np.maximum(0.0, z - eta)
        - np.minimum(0.0, z + eta)
        + np.maximum(0.0, nu * (u - b) + mu - eta)
        + np.minimum(0.0, nu * (u - a) + mu + last_eta)
    )
    return c


def complementarity(u: P0Field, mu: P0Field, params: ControlParams) -> P0Field:
    a, b = discretize_bounds(params, u.mesh)
    vals = complementarity_values(
        u.values, mu.values, a, b, params.nu, params.eta, params.c_last_term_sign
    )
    return P0Field(u.mesh, vals)


def classify_branches(z: np.ndarray, a: np.ndarray, b: np.ndarray, nu: float, eta: float) -> np.ndarray:
    """Partition elements by the value z = nu*u + mu (equals pbar at iterates).

    Interior branches follow the half-open active-set windows
    (nu*a < z + eta <= 0) and (0 <= z - eta < nu*b); outside them the bound
    branches apply, and |z| < eta is the zero branch.
    """
    br = np.full(z.shape, BRANCH_ZERO, dtype=int)
    br[z - eta >= nu * b] = BRANCH_UPPER
    br[z + eta <= nu * a] = BRANCH_LOWER
    pos = (z - eta >= 0) & (z - eta < nu * b)
    neg = (z + eta <= 0) & (z + eta > nu * a)
    br[pos] = BRANCH_POS
    br[neg] = BRANCH_NEG
    return br


def active_set(p: P1Field, params: ControlParams):
    """Indices where the control is free and nonzero, judged from pbar.

    A = {j : nu*a < pbar_j + eta <= 0} union {j : 0 <= pbar_j - eta < nu*b}.
    Returns (indices, indicator P0Field).
    """
    pbar = p0_average(p)
    a, b = discretize_bounds(params, p.mesh)
    br = classify_branches(pbar.values, a, b, params.nu, params.eta)
    mask = (br == BRANCH_POS) | (br == BRANCH_NEG)
    chi = P0Field(p.mesh, mask.astype(float))
    return np.nonzero(mask)[0], chi


def variational_inequality_residual(u: P0Field, p: P1Field, params: ControlParams) -> float:
    """L2 distance between u and the pointwise optimal control of pbar."""
    a, b = discretize_bounds(params, u.mesh)
    slack = 1e-12 * (1.0 + np.max(np.abs(u.values)))
    if np.any(u.values < a - slack) or np.any(u.values > b + slack):
        raise ValueError("control is not admissible")
    ustar = pointwise_optimal_control(p0_average(p), params)
    d = u.values - ustar.values
    return float(np.sqrt(np.sum(u.mesh.element_sizes * d * d)))


@dataclass(frozen=True)
class CostBreakdown:
    tracking: float
    l2_term: float
    l1_term: float

    @property
    def total(self) -> float:
        return self.tracking + self.l2_term + self.l1_term


def cost(u: P0Field, w: P1Field, w_d, params: ControlParams) -> CostBreakdown:
    """Evaluate the cost functional at (u, w) for target w_d.

    w_d may be a constant, callable, or P1Field.  With l1_half_factor the
    reported L1 term uses eta/2 (the optimality system is unaffected).
    """
    mesh = w.mesh
    h = mesh.element_sizes
    if isinstance(w_d, P1Field):
        d = w.values - w_d.values
        aa, bb = d[:-1], d[1:]
        tracking = 0.5 * float(np.sum(h * (aa * aa + aa * bb + bb * bb) / 3.0))
    else:
        wd = (lambda x: np.full_like(x, float(w_d))) if np.isscalar(w_d) else w_d
        tracking = 0.0
        for qpt, wq in zip(GAUSS_2PT.points, GAUSS_2PT.weights):
            x = mesh.nodes[:-1] + h * qpt
            d = eval_p1(w, x) - np.asarray(wd(x), dtype=float)
            tracking += 0.5 * wq * float(np.sum(h * d * d))
    l2_term = 0.5 * params.nu * float(np.sum(h * u.values**2))
    w_l1 = 0.5 * params.eta if params.l1_half_factor else params.eta
    l1_term = w_l1 * float(np.sum(h * np.abs(u.values)))
    return CostBreakdown(tracking, l2_term, l1_term)


@dataclass(frozen=True)
class MultiplierState:
    """Split of the aggregate multiplier mu = lam + lam_b - lam_a."""

    mu: P0Field
    lam: P0Field
    lam_a: P0Field
    lam_b: P0Field


def reconstruct_multipliers(u: P0Field, mu: P0Field, params: ControlParams) -> MultiplierState:
    """Canonical split of mu into subgradient and bound multipliers.

    On {u > 0}: lam = eta; {u < 0}: lam = -eta; {u = 0}: lam = clip(mu, -eta, eta).
    The remainder mu - lam lands in lam_b (>= 0) or lam_a (>= 0).
    """
    eta = params.eta
    uv, mv = u.values, mu.values
    lam = np.where(uv > 0, eta, np.where(uv < 0, -eta, np.clip(mv, -eta, eta)))
    rest = mv - lam
    lam_b = np.maximum(rest, 0.0)
    lam_a = np.maximum(-rest, 0.0)
    mesh = u.mesh
    return MultiplierState(mu, P0Field(mesh, lam), P0Field(mesh, lam_a), P0Field(mesh, lam_b))


def kkt_consistent_scalar(u: float, mu: float, a: float, b: float, eta: float,
                          tol: float = 0.0) -> bool:
    """Branch-enumerated scalar test: does (u, mu) satisfy the pointwise system?

    Enumerates the five branches (u=0, u in (0,b), u=b, u in (a,0), u=a).
    Used as an independent oracle for the complementarity function.
    """
    if u < a - tol or u > b + tol:
        return False
    if abs(u) <= tol:
        return abs(mu) <= eta + tol
    if u > 0:
        if abs(u - b) <= tol:
            return mu >= eta - tol
        return abs(mu - eta) <= tol
    if abs(u - a) <= tol:
        return mu <= -eta + tol
    return abs(mu + eta) <= tol
