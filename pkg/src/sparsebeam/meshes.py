"""One-dimensional meshes, nodal/elementwise fields, quadrature, and norms.

Displacement-type quantities live in the space of continuous piecewise-linear
functions vanishing at both ends of the interval (P1Field); controls, shear
forces and multipliers live in the space of piecewise constants (P0Field).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mesh1D",
    "P1Field",
    "P0Field",
    "QuadratureRule",
    "MIDPOINT_1PT",
    "GAUSS_2PT",
    "build_uniform_mesh",
    "pi_h",
    "p0_average",
    "eval_p1",
    "l2_norm_p0",
    "l1_norm_p0",
    "linf_norm_p0",
    "l2_norm_p1",
    "h1_seminorm_p1",
    "linf_norm_p1",
    "l2_diff_p0",
    "l2_diff_p1",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Mesh1D:
    """Partition 0 = x_0 < x_1 < ... < x_n = L of the beam axis.

    Parameters
    ----------
    nodes : ndarray
        Strictly increasing node coordinates, nodes[0] == 0.

    Attributes
    ----------
    element_sizes : ndarray
        h_j = x_j - x_{j-1}, one entry per element.
    h : float
        Largest element size.
    """

    nodes: np.ndarray

    def __post_init__(self):
        nodes = _readonly(self.nodes)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("mesh needs at least 3 nodes (2 elements)")
        if nodes[0] != 0.0:
            raise ValueError("mesh must start at 0")
        sizes = np.diff(nodes)
        if not np.all(sizes > 0):
            raise ValueError("mesh nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "_sizes", _readonly(sizes))

    @property
    def element_sizes(self) -> np.ndarray:
        return self._sizes

    @property
    def n(self) -> int:
        """Number of elements."""
        return self.nodes.size - 1

    @property
    def length(self) -> float:
        return float(self.nodes[-1])

    @property
    def h(self) -> float:
        return float(self._sizes.max())

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])


def build_uniform_mesh(n: int, L: float = 1.0) -> Mesh1D:
    """Uniform mesh with n elements on (0, L)."""
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError("n must be an integer >= 2")
    if not (L > 0):
        raise ValueError("L must be positive")
    return Mesh1D(np.linspace(0.0, float(L), int(n) + 1))


@dataclass(frozen=True)
class P1Field:
    """Continuous piecewise-linear field with homogeneous Dirichlet values.

    values has one entry per node; values[0] and values[-1] must be exactly 0.
    """

    mesh: Mesh1D
    values: np.ndarray

    def __post_init__(self):
        v = _readonly(self.values)
        if v.shape != (self.mesh.n + 1,):
            raise ValueError("P1Field needs one value per node")
        if v[0] != 0.0 or v[-1] != 0.0:
            raise ValueError("P1Field boundary values must be exactly zero")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, mesh: Mesh1D) -> "P1Field":
        return cls(mesh, np.zeros(mesh.n + 1))

    @classmethod
    def from_interior(cls, mesh: Mesh1D, interior: np.ndarray) -> "P1Field":
        v = np.zeros(mesh.n + 1)
        v[1:-1] = interior
        return cls(mesh, v)

    @classmethod
    def from_callable(cls, mesh: Mesh1D, fn) -> "P1Field":
        """Nodal interpolation; boundary entries are stamped to exact zeros."""
        v = np.asarray([float(fn(x)) for x in mesh.nodes])
        v[0] = 0.0
        v[-1] = 0.0
        return cls(mesh, v)

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]


@dataclass(frozen=True)
class P0Field:
    """Piecewise-constant field, one value per element."""

    mesh: Mesh1D
    values: np.ndarray

    def __post_init__(self):
        v = _readonly(self.values)
        if v.shape != (self.mesh.n,):
            raise ValueError("P0Field needs one value per element")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, mesh: Mesh1D) -> "P0Field":
        return cls(mesh, np.zeros(mesh.n))

    @classmethod
    def constant(cls, mesh: Mesh1D, c: float) -> "P0Field":
        return cls(mesh, np.full(mesh.n, float(c)))


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference element [0, 1]; weights sum to 1."""

    tag: str
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _readonly(self.points))
        object.__setattr__(self, "weights", _readonly(self.weights))
        if self.points.shape != self.weights.shape:
            raise ValueError("points/weights shape mismatch")
        if abs(self.weights.sum() - 1.0) > 1e-15:
            raise ValueError("reference weights must sum to 1")


MIDPOINT_1PT = QuadratureRule("midpoint_1pt", np.array([0.5]), np.array([1.0]))
GAUSS_2PT = QuadratureRule(
    "gauss_2pt",
    np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]),
    np.array([0.5, 0.5]),
)


def _eval_on_elements(fn, mesh: Mesh1D, rule: QuadratureRule) -> np.ndarray:
    """Evaluate fn at all quadrature points; shape (n_elements, n_points)."""
    x = mesh.nodes[:-1, None] + mesh.element_sizes[:, None] * rule.points[None, :]
    try:
        vals = np.asarray(fn(x), dtype=float)
        if vals.shape != x.shape:
            vals = np.broadcast_to(vals, x.shape)
    except Exception:
        # non-vectorized callable
        vals = np.asarray([[float(fn(xi)) for xi in row] for row in x])
    if not np.all(np.isfinite(vals)):
        raise ValueError("function evaluation produced non-finite values")
    return vals


def pi_h(u, mesh: Mesh1D, rule: QuadratureRule = GAUSS_2PT) -> P0Field:
    """Elementwise-mean quasi-interpolation onto piecewise constants.

    u may be a P0Field on the same mesh (identity), a scalar, or a callable;
    callables are averaged with the given quadrature rule.
    """
    if isinstance(u, P0Field):
        if u.mesh is not mesh and not np.array_equal(u.mesh.nodes, mesh.nodes):
            raise ValueError("P0Field lives on a different mesh")
        return P0Field(mesh, u.values.copy())
    if np.isscalar(u):
        return P0Field.constant(mesh, float(u))
    vals = _eval_on_elements(u, mesh, rule)
    return P0Field(mesh, vals @ rule.weights)


def p0_average(v: P1Field) -> P0Field:
    """Elementwise mean of a P1 field (equals its midpoint values)."""
    w = v.values
    return P0Field(v.mesh, 0.5 * (w[:-1] + w[1:]))


def eval_p1(v: P1Field, x):
    """Point evaluation of a P1 field; x may be scalar or array in [0, L]."""
    xa = np.asarray(x, dtype=float)
    L = v.mesh.length
    if np.any(xa < -1e-12 * L) or np.any(xa > L * (1 + 1e-12)):
        raise ValueError("evaluation point outside [0, L]")
    out = np.interp(np.clip(xa, 0.0, L), v.mesh.nodes, v.values)
    return float(out) if np.isscalar(x) else out


# ---------------------------------------------------------------- norms

def l2_norm_p0(u: P0Field) -> float:
    return float(np.sqrt(np.sum(u.mesh.element_sizes * u.values**2)))


def l1_norm_p0(u: P0Field) -> float:
    return float(np.sum(u.mesh.element_sizes * np.abs(u.values)))


def linf_norm_p0(u: P0Field) -> float:
    return float(np.max(np.abs(u.values))) if u.values.size else 0.0


def l2_norm_p1(v: P1Field) -> float:
    # exact: int over element of (linear)^2 = h*(a^2 + a*b + b^2)/3
    a = v.values[:-1]
    b = v.values[1:]
    return float(np.sqrt(np.sum(v.mesh.element_sizes * (a * a + a * b + b * b) / 3.0)))


def h1_seminorm_p1(v: P1Field) -> float:
    d = np.diff(v.values)
    return float(np.sqrt(np.sum(d * d / v.mesh.element_sizes)))


def linf_norm_p1(v: P1Field) -> float:
    return float(np.max(np.abs(v.values)))


# ------------------------------------------ cross-mesh comparisons

def _overlap_partition(mesh_a: Mesh1D, mesh_b: Mesh1D):
    """Common refinement of two meshes on the same interval.

    Returns (left, right, ia, ib): subinterval endpoints plus the element
    index of each subinterval in either mesh.
    """
    if abs(mesh_a.length - mesh_b.length) > 1e-12 * max(mesh_a.length, 1.0):
        raise ValueError("meshes cover different intervals")
    pts = np.union1d(mesh_a.nodes, mesh_b.nodes)
    left, right = pts[:-1], pts[1:]
    mid = 0.5 * (left + right)
    ia = np.clip(np.searchsorted(mesh_a.nodes, mid) - 1, 0, mesh_a.n - 1)
    ib = np.clip(np.searchsorted(mesh_b.nodes, mid) - 1, 0, mesh_b.n - 1)
    return left, right, ia, ib


def l2_diff_p0(a: P0Field, b: P0Field) -> float:
    """L2 norm of the difference of two P0 fields on possibly different meshes."""
    left, right, ia, ib = _overlap_partition(a.mesh, b.mesh)
    d = a.values[ia] - b.values[ib]
    return float(np.sqrt(np.sum((right - left) * d * d)))


def l2_diff_p1(a: P1Field, b: P1Field) -> float:
    """L2 norm of the difference of two P1 fields on possibly different meshes."""
    left, right, _, _ = _overlap_partition(a.mesh, b.mesh)
    # difference is linear on each subinterval: 2-point Gauss is exact
    acc = 0.0
    for q, wq in zip(GAUSS_2PT.points, GAUSS_2PT.weights):
        x = left + (right - left) * q
        d = eval_p1(a, x) - eval_p1(b, x)
        acc += wq * np.sum((right - left) * d * d)
    return float(np.sqrt(acc))
