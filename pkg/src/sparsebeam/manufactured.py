"""Manufactured solutions for convergence studies.

Given smooth clamped fields (w, theta), the loads reproducing them follow
from the strong form of the thickness-scaled problem:

    f = -(kappa/t^2) (w'' - theta'),
    g = (12/t^2) ( -(E/12) theta'' - (kappa/t^2)(w' - theta) ).

Both derivations run through sympy, so a family only has to specify the
fields; loads and derivatives come out consistent by construction.

Two families are provided.  sine_family prescribes fields independent of
the thickness, which makes the *data* blow up like 1/t^2 as t shrinks; it
is meant for fixed-thickness convergence rates.  balanced_family instead
prescribes a thickness-dependent rotation theta = W' + (E t^2/(12 kappa))
W''' chosen so that shear force, f, and g are all independent of t; its
discretization errors stay uniformly bounded across thicknesses and it is
the right family for locking studies.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy as sym

from .fem import BeamParams, LoadData

__all__ = ["ManufacturedCase", "from_fields", "sine_family", "balanced_family"]


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact fields, their derivatives, and the loads that produce them."""

    name: str
    params: BeamParams
    w: Callable[[np.ndarray], np.ndarray]
    theta: Callable[[np.ndarray], np.ndarray]
    w_x: Callable[[np.ndarray], np.ndarray]
    theta_x: Callable[[np.ndarray], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    shear: Callable[[np.ndarray], np.ndarray]

    def loads(self) -> LoadData:
        return LoadData(f=self.f, g=self.g)


def _lambdify(expr, x):
    fn = sym.lambdify(x, expr, modules="numpy")

    def call(arr):
        out = fn(np.asarray(arr, dtype=float))
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(arr)).copy()

    return call


def from_fields(w_expr, theta_expr, x, params: BeamParams, name: str = "custom") -> ManufacturedCase:
    """Derive loads for prescribed sympy fields w(x), theta(x).

    The fields must vanish at x = 0 and x = L (clamped ends); this is
    checked symbolically.
    """
    L = sym.nsimplify(params.L, rational=False)
    for expr in (w_expr, theta_expr):
        for endpoint in (0, L):
            val = sym.simplify(expr.subs(x, endpoint))
            if sym.simplify(val) != 0:
                raise ValueError(f"manufactured field does not vanish at x = {endpoint}")
    E, t, kappa = params.E, params.t, params.kappa
    ks = kappa / t**2
    shear_expr = ks * (sym.diff(w_expr, x) - theta_expr)
    f_expr = -sym.diff(shear_expr, x)
    g_expr = (12 / t**2) * (-(E / 12) * sym.diff(theta_expr, x, 2) - shear_expr)
    return ManufacturedCase(
        name=name,
        params=params,
        w=_lambdify(w_expr, x),
        theta=_lambdify(theta_expr, x),
        w_x=_lambdify(sym.diff(w_expr, x), x),
        theta_x=_lambdify(sym.diff(theta_expr, x), x),
        f=_lambdify(f_expr, x),
        g=_lambdify(g_expr, x),
        shear=_lambdify(shear_expr, x),
    )


def sine_family(params: BeamParams) -> ManufacturedCase:
    """w = sin(pi x / L), theta = (pi/L) sin(pi x/L) cos(pi x/L)."""
    x = sym.symbols("x")
    L = params.L
    w = sym.sin(sym.pi * x / L)
    theta = (sym.pi / L) * sym.sin(sym.pi * x / L) * sym.cos(sym.pi * x / L)
    return from_fields(w, theta, x, params, name="sine")


def balanced_family(params: BeamParams) -> ManufacturedCase:
    """Thickness-robust fields built from W = sin^2(pi x / L).

    With theta = W' + (E t^2 / (12 kappa)) W''' the shear force equals
    -(E/12) W''' identically, giving f = (E/12) W'''' and
    g = -(E^2/(12 kappa)) W''''', both independent of t.
    """
    x = sym.symbols("x")
    L = params.L
    W = sym.sin(sym.pi * x / L) ** 2
    E, t, kappa = params.E, params.t, params.kappa
    theta = sym.diff(W, x) + (E * t**2 / (12 * kappa)) * sym.diff(W, x, 3)
    return from_fields(W, theta, x, params, name="balanced")
