"""Finite elements for the static clamped Timoshenko beam.

The thickness-scaled weak form used throughout: find (w, theta) with

    (E/12) int theta' beta'  +  (kappa/t^2) int (w' - theta)(v' - beta)
        =  int (f + u) v  +  (t^2/12) int g beta        for all (v, beta),

discretized with continuous piecewise linears for both w and theta.  Two
schemes are provided: "standard" integrates the shear term exactly and is
known to degrade on thin beams unless the mesh is excessively fine;
"locking_free" integrates the shear term with the one-point midpoint rule,
which is algebraically identical to a mixed method with a piecewise-constant
shear force eliminated elementwise.

The adjoint problem reuses the same operator with the tracking residual as
load: rhs = int (w - w_d) v + (t^2/12) int (theta - theta_d) beta.  The
optimality system of the control problem needs the reversed residual
(w_d - w); see the tracking_sign argument of solve_adjoint.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .meshes import GAUSS_2PT, Mesh1D, P0Field, P1Field, eval_p1

__all__ = [
    "STANDARD",
    "LOCKING_FREE",
    "SCHEMES",
    "BeamParams",
    "LoadData",
    "StateSolution",
    "AdjointSolution",
    "LinearSolveError",
    "assemble_stiffness",
    "assemble_load",
    "control_load_matrix",
    "p1_mass_matrix",
    "BeamOperator",
    "solve_state",
    "solve_adjoint",
    "recover_shear",
    "assemble_mixed_blocks",
    "condense_mixed_system",
    "error_norms",
]

STANDARD = "standard"
LOCKING_FREE = "locking_free"
SCHEMES = (STANDARD, LOCKING_FREE)

ScalarData = Union[float, P0Field, Callable[[np.ndarray], np.ndarray]]


class LinearSolveError(RuntimeError):
    """Raised when a direct factorization or solve fails."""


@dataclass(frozen=True)
class BeamParams:
    """Material and geometry constants.

    E : Young modulus.  t : thickness.  k : shear correction factor.
    poisson : Poisson ratio, sets G = E / (2 (1 + poisson)).
    kappa_override : replaces kappa = k * G when given.
    L : beam length; must match the mesh the params are used with.
    """

    E: float = 1.44e9
    t: float = 0.01
    k: float = 5.0 / 6.0
    poisson: float = 0.35
    kappa_override: Optional[float] = None
    L: float = 1.0

    def __post_init__(self):
        if not (self.E > 0):
            raise ValueError("E must be positive")
        if not (0 < self.t <= 1):
            raise ValueError("t must lie in (0, 1]")
        if not (0 < self.k < 1):
            raise ValueError("k must lie in (0, 1)")
        if not (0 <= self.poisson < 0.5):
            raise ValueError("poisson must lie in [0, 0.5)")
        if not (self.L > 0):
            raise ValueError("L must be positive")
        if self.kappa is not None and not (self.kappa > 0):
            raise ValueError("kappa must be positive")

    @property
    def shear_modulus(self) -> float:
        return self.E / (2.0 * (1.0 + self.poisson))

    @property
    def kappa(self) -> float:
        if self.kappa_override is not None:
            return float(self.kappa_override)
        return self.k * self.shear_modulus


@dataclass(frozen=True)
class LoadData:
    """Problem data: transverse load f, moment load g, target w_d, theta_d.

    Each entry may be a constant, a callable of x, or a field of the right
    kind (P0 for f and g).  Targets are evaluated pointwise, so callables
    need not vanish at the boundary.
    """

    f: ScalarData = 0.0
    g: ScalarData = 0.0
    w_d: ScalarData = 0.0
    theta_d: ScalarData = 0.0


@dataclass(frozen=True)
class StateSolution:
    w: P1Field
    theta: P1Field
    gamma: P0Field  # recovered shear force


@dataclass(frozen=True)
class AdjointSolution:
    p: P1Field
    q: P1Field
    r: P0Field  # recovered adjoint shear force


def _check_mesh_params(mesh: Mesh1D, params: BeamParams) -> None:
    if abs(mesh.length - params.L) > 1e-12 * max(params.L, 1.0):
        raise ValueError("BeamParams.L does not match the mesh length")


def _scheme_check(scheme: str) -> None:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


# ------------------------------------------------------------- assembly

def _interior_dof(node_index: np.ndarray, comp: int) -> np.ndarray:
    """Interleaved interior numbering: dof(w_i) = 2(i-1), dof(theta_i) = 2(i-1)+1."""
    return 2 * (node_index - 1) + comp


def _element_matrices(mesh: Mesh1D, params: BeamParams, scheme: str):
    """Per-element 4x4 blocks in local order (w0, w1, th0, th1)."""
    n = mesh.n
    h = mesh.element_sizes
    Eb = params.E / 12.0
    ks = params.kappa / params.t**2

    Ke = np.zeros((n, 4, 4))
    # bending on theta
    Ke[:, 2, 2] += Eb / h
    Ke[:, 3, 3] += Eb / h
    Ke[:, 2, 3] -= Eb / h
    Ke[:, 3, 2] -= Eb / h
    # shear: w'w', w'theta cross terms (exact under both rules)
    Ke[:, 0, 0] += ks / h
    Ke[:, 1, 1] += ks / h
    Ke[:, 0, 1] -= ks / h
    Ke[:, 1, 0] -= ks / h
    for a, sign in ((0, +0.5), (1, -0.5)):
        for b in (2, 3):
            Ke[:, a, b] += sign * ks
            Ke[:, b, a] += sign * ks
    # shear theta-theta block: exact mass vs one-point midpoint rule
    if scheme == STANDARD:
        Ke[:, 2, 2] += ks * h / 3.0
        Ke[:, 3, 3] += ks * h / 3.0
        Ke[:, 2, 3] += ks * h / 6.0
        Ke[:, 3, 2] += ks * h / 6.0
    else:
        for a in (2, 3):
            for b in (2, 3):
                Ke[:, a, b] += ks * h / 4.0
    return Ke


def assemble_stiffness(mesh: Mesh1D, params: BeamParams, scheme: str = LOCKING_FREE) -> sp.csr_matrix:
    """Symmetric positive definite stiffness matrix on interior (w, theta) dofs.

    Interleaved ordering (w_1, theta_1, w_2, theta_2, ...): bandwidth 3.
    """
    _check_mesh_params(mesh, params)
    _scheme_check(scheme)
    n = mesh.n
    m = 2 * (n - 1)
    Ke = _element_matrices(mesh, params, scheme)

    elems = np.arange(n)
    local_nodes = np.stack([elems, elems + 1, elems, elems + 1], axis=1)  # (n, 4)
    local_comp = np.array([0, 0, 1, 1])
    dofs = 2 * (local_nodes - 1) + local_comp[None, :]
    keep = (local_nodes >= 1) & (local_nodes <= n - 1)

    rows = np.repeat(dofs[:, :, None], 4, axis=2)
    cols = np.repeat(dofs[:, None, :], 4, axis=1)
    mask = np.repeat(keep[:, :, None], 4, axis=2) & np.repeat(keep[:, None, :], 4, axis=1)

    K = sp.coo_matrix(
        (Ke[mask], (rows[mask], cols[mask])), shape=(m, m)
    ).tocsr()
    K.sum_duplicates()
    return K


def _p0_values(data: ScalarData, mesh: Mesh1D) -> np.ndarray:
    if isinstance(data, P0Field):
        if not np.array_equal(data.mesh.nodes, mesh.nodes):
            raise ValueError("P0 data lives on a different mesh")
        return data.values
    if np.isscalar(data):
        return np.full(mesh.n, float(data))
    return None  # callable: handled by quadrature


def _load_component(data: ScalarData, mesh: Mesh1D) -> np.ndarray:
    """Nodal load vector int data * phi_i for all nodes (boundary included)."""
    n = mesh.n
    h = mesh.element_sizes
    out = np.zeros(n + 1)
    vals = _p0_values(data, mesh)
    if vals is not None:
        # exact for piecewise constants
        out[:-1] += vals * h / 2.0
        out[1:] += vals * h / 2.0
        return out
    x = mesh.nodes[:-1, None] + h[:, None] * GAUSS_2PT.points[None, :]
    fx = np.asarray(data(x), dtype=float)
    if fx.shape != x.shape:
        fx = np.broadcast_to(fx, x.shape)
    if not np.all(np.isfinite(fx)):
        raise ValueError("load evaluation produced non-finite values")
    wq = GAUSS_2PT.weights
    phi0 = 1.0 - GAUSS_2PT.points
    phi1 = GAUSS_2PT.points
    out[:-1] += h * ((fx * phi0[None, :]) @ wq)
    out[1:] += h * ((fx * phi1[None, :]) @ wq)
    return out


def assemble_load(mesh: Mesh1D, params: BeamParams, f_plus_u: ScalarData, g: ScalarData) -> np.ndarray:
    """Interior load vector: int (f+u) v on w-dofs, (t^2/12) int g beta on theta-dofs."""
    _check_mesh_params(mesh, params)
    Fw = _load_component(f_plus_u, mesh)
    Fg = _load_component(g, mesh)
    m = 2 * (mesh.n - 1)
    out = np.zeros(m)
    out[0::2] = Fw[1:-1]
    out[1::2] = (params.t**2 / 12.0) * Fg[1:-1]
    return out


def control_load_matrix(mesh: Mesh1D) -> sp.csr_matrix:
    """Sparse map from P0 control values to the interior w-load vector."""
    n = mesh.n
    m = 2 * (n - 1)
    h = mesh.element_sizes
    rows, cols, vals = [], [], []
    for j in range(n):
        for node in (j, j + 1):
            if 1 <= node <= n - 1:
                rows.append(2 * (node - 1))
                cols.append(j)
                vals.append(h[j] / 2.0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, n))


def p1_mass_matrix(mesh: Mesh1D) -> sp.csr_matrix:
    """Interior P1 mass matrix (node-indexed, size n-1)."""
    n = mesh.n
    h = mesh.element_sizes
    main = np.zeros(n - 1)
    main += h[:-1] / 3.0
    main += h[1:] / 3.0
    off = h[1:-1] / 6.0
    return sp.diags([off, main, off], [-1, 0, 1]).tocsr()


# ------------------------------------------------------------- operator

class BeamOperator:
    """Assembled stiffness with a banded Cholesky factorization.

    Immutable after construction; reusable across state and adjoint solves
    (the weak form is symmetric so both share one factorization).
    """

    def __init__(self, mesh: Mesh1D, params: BeamParams, scheme: str = LOCKING_FREE):
        _check_mesh_params(mesh, params)
        _scheme_check(scheme)
        self.mesh = mesh
        self.params = params
        self.scheme = scheme
        self.K = assemble_stiffness(mesh, params, scheme)
        m = self.K.shape[0]
        # upper banded storage, bandwidth 3
        nb = 3
        ab = np.zeros((nb + 1, m))
        for d in range(nb + 1):
            diag = self.K.diagonal(d)
            ab[nb - d, d:] = diag
        try:
            self._cb = sla.cholesky_banded(ab, lower=False)
        except sla.LinAlgError as exc:  # pragma: no cover - SPD by construction
            raise LinearSolveError(f"stiffness factorization failed: {exc}") from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Direct banded solve with one step of iterative refinement."""
        x = sla.cho_solve_banded((self._cb, False), rhs)
        r = rhs - self.K @ x
        x += sla.cho_solve_banded((self._cb, False), r)
        return x

    # interleaved block <-> field helpers
    def split(self, x: np.ndarray):
        w = P1Field.from_interior(self.mesh, x[0::2])
        th = P1Field.from_interior(self.mesh, x[1::2])
        return w, th


def recover_shear(mesh: Mesh1D, params: BeamParams, w: P1Field, theta: P1Field) -> P0Field:
    """Elementwise shear force gamma = (kappa/t^2) (dw/dx - mean(theta))."""
    _check_mesh_params(mesh, params)
    dw = np.diff(w.values) / mesh.element_sizes
    tbar = 0.5 * (theta.values[:-1] + theta.values[1:])
    return P0Field(mesh, (params.kappa / params.t**2) * (dw - tbar))


def solve_state(
    mesh: Mesh1D,
    params: BeamParams,
    loads: LoadData,
    u: Optional[P0Field] = None,
    scheme: str = LOCKING_FREE,
    operator: Optional[BeamOperator] = None,
) -> StateSolution:
    """Solve the beam problem under load f + u and moment load g."""
    op = operator if operator is not None else BeamOperator(mesh, params, scheme)
    rhs = assemble_load(mesh, params, loads.f, loads.g)
    if u is not None:
        # added separately so a callable f keeps its quadrature and the
        # piecewise-constant control is integrated exactly
        rhs = rhs + assemble_load(mesh, params, u, 0.0)
    x = op.solve(rhs)
    w, th = op.split(x)
    return StateSolution(w, th, recover_shear(mesh, params, w, th))


def _tracking_load(
    mesh: Mesh1D,
    params: BeamParams,
    state: StateSolution,
    loads: LoadData,
    tracking_sign: float,
    theta_term: bool,
) -> np.ndarray:
    """rhs of the adjoint problem: tracking_sign * [int (w - w_d) v + (t^2/12) int (theta - theta_d) beta]."""

    def resid_w(x):
        wd = loads.w_d
        wdv = wd(x) if callable(wd) else (eval_p1(wd, x) if isinstance(wd, P1Field) else float(wd))
        return tracking_sign * (eval_p1(state.w, x) - wdv)

    m = 2 * (mesh.n - 1)
    out = np.zeros(m)
    Fw = _load_component(resid_w, mesh)
    out[0::2] = Fw[1:-1]
    if theta_term:
        def resid_th(x):
            td = loads.theta_d
            tdv = td(x) if callable(td) else (eval_p1(td, x) if isinstance(td, P1Field) else float(td))
            return tracking_sign * (eval_p1(state.theta, x) - tdv)

        Ft = _load_component(resid_th, mesh)
        out[1::2] = (params.t**2 / 12.0) * Ft[1:-1]
    return out


def solve_adjoint(
    mesh: Mesh1D,
    params: BeamParams,
    state: StateSolution,
    loads: LoadData,
    scheme: str = LOCKING_FREE,
    theta_term: bool = True,
    tracking_sign: float = 1.0,
    operator: Optional[BeamOperator] = None,
) -> AdjointSolution:
    """Adjoint solve against the tracking residual of a given state.

    The default (tracking_sign=+1, theta_term=True) uses the rhs
    int (w - w_d) v + (t^2/12) int (theta - theta_d) beta.  The optimality
    system of the minimization problem needs tracking_sign=-1, which makes
    the averaged adjoint the descent quantity p with nu*u + mu = pbar.
    """
    op = operator if operator is not None else BeamOperator(mesh, params, scheme)
    rhs = _tracking_load(mesh, params, state, loads, tracking_sign, theta_term)
    x = op.solve(rhs)
    p, q = op.split(x)
    return AdjointSolution(p, q, recover_shear(mesh, params, p, q))


# ------------------------------------------------------- mixed system

def assemble_mixed_blocks(mesh: Mesh1D, params: BeamParams):
    """Explicit three-field mixed system blocks over (w, theta; gamma).

    Returns (A, C, Mg):
      A  : bending block on interior (w, theta) dofs,
      C  : coupling int gamma (v' - beta), shape (2(n-1), n),
      Mg : diagonal P0 mass, so the shear equation reads
           (t^2/kappa) Mg gamma = C^T [w; theta].
    """
    _check_mesh_params(mesh, params)
    n = mesh.n
    m = 2 * (n - 1)
    h = mesh.element_sizes
    Eb = params.E / 12.0

    main = np.zeros(n - 1)
    main += Eb / h[:-1] + Eb / h[1:]
    off = -Eb / h[1:-1]
    Ath = sp.diags([off, main, off], [-1, 0, 1])
    A = sp.lil_matrix((m, m))
    A[1::2, 1::2] = Ath

    rows, cols, vals = [], [], []
    for j in range(n):
        # w-test: int_j gamma v' = gamma_j * (v(x_{j+1}) - v(x_j))
        for node, sgn in ((j, -1.0), (j + 1, +1.0)):
            if 1 <= node <= n - 1:
                rows.append(2 * (node - 1))
                cols.append(j)
                vals.append(sgn)
        # theta-test: -int_j gamma beta = -gamma_j * h_j/2 per node
        for node in (j, j + 1):
            if 1 <= node <= n - 1:
                rows.append(2 * (node - 1) + 1)
                cols.append(j)
                vals.append(-h[j] / 2.0)
    C = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
    Mg = sp.diags(h).tocsr()
    return A.tocsr(), C, Mg


def condense_mixed_system(mesh: Mesh1D, params: BeamParams) -> np.ndarray:
    """Eliminate the P0 shear unknown; equals the locking_free stiffness."""
    A, C, Mg = assemble_mixed_blocks(mesh, params)
    scale = params.kappa / params.t**2
    Minv = sp.diags(scale / mesh.element_sizes)
    return (A + C @ Minv @ C.T).toarray()


# ------------------------------------------------------------- errors

def error_norms(a, b, b_derivatives=None) -> dict:
    """Norms of the difference between field pairs a = (w, theta) and b.

    b may be a pair of P1Fields on the same mesh or a pair of callables;
    in the callable case b_derivatives = (w', theta') enables the H1 norm.
    Returns per-component and combined l2 / h1 / linf values.
    """
    wa, ta = a
    mesh = wa.mesh
    if isinstance(b[0], P1Field):
        if not np.array_equal(b[0].mesh.nodes, mesh.nodes):
            raise ValueError("error_norms needs fields on the same mesh")
        dw = wa.values - b[0].values
        dt = ta.values - b[1].values
        # closed forms on nodal differences (exact for P1)
        out = {}
        for name, d in (("w", dw), ("theta", dt)):
            aa, bb = d[:-1], d[1:]
            l2 = float(np.sqrt(np.sum(mesh.element_sizes * (aa * aa + aa * bb + bb * bb) / 3.0)))
            h1s = float(np.sqrt(np.sum(np.diff(d) ** 2 / mesh.element_sizes)))
            out[f"l2_{name}"] = l2
            out[f"h1_{name}"] = float(np.sqrt(l2 * l2 + h1s * h1s))
            out[f"linf_{name}"] = float(np.max(np.abs(d)))
    else:
        fw, ft = b
        if b_derivatives is None:
            raise ValueError("exact-function comparison needs derivative callables for H1")
        fwp, ftp = b_derivatives
        out = {}
        for name, fld, fn, fnp in (("w", wa, fw, fwp), ("theta", ta, ft, ftp)):
            l2sq = 0.0
            h1ssq = 0.0
            h = mesh.element_sizes
            slope = np.diff(fld.values) / h
            for q, wq in zip(GAUSS_2PT.points, GAUSS_2PT.weights):
                x = mesh.nodes[:-1] + h * q
                d = eval_p1(fld, x) - np.asarray(fn(x), dtype=float)
                dp = slope - np.asarray(fnp(x), dtype=float)
                l2sq += wq * np.sum(h * d * d)
                h1ssq += wq * np.sum(h * dp * dp)
            nodesd = fld.values - np.asarray(fn(mesh.nodes), dtype=float)
            out[f"l2_{name}"] = float(np.sqrt(l2sq))
            out[f"h1_{name}"] = float(np.sqrt(l2sq + h1ssq))
            out[f"linf_{name}"] = float(np.max(np.abs(nodesd)))
    for k in ("l2", "h1"):
        out[k] = float(np.hypot(out[f"{k}_w"], out[f"{k}_theta"]))
    out["linf"] = float(max(out["linf_w"], out["linf_theta"]))
    return out
