"""Experiment drivers: single solves, eta sweeps, locking and convergence grids.

Every CSV row produced here is re-derivable through the library API; this
module only orchestrates solves, computes cross-mesh errors, and formats
output.  Numbers are printed with 6 significant digits.  Output files carry
a provenance header of '# key = value' comment lines (no timestamps), so
identical configurations yield byte-identical files except for the runtime
column of sweeps.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import ConfigError, RunConfig, build_problem, build_ssn_config
from .fem import LOCKING_FREE, SCHEMES
from .meshes import (
    P0Field,
    P1Field,
    build_uniform_mesh,
    l2_diff_p0,
    l2_diff_p1,
    l2_norm_p0,
)
from .ssn import SSNConfig, SSNResult, ssn_solve

__all__ = [
    "SweepRow",
    "SWEEP_COLUMNS",
    "LOCKING_COLUMNS",
    "CONVERGENCE_COLUMNS",
    "run_solve",
    "run_sweep",
    "run_locking",
    "run_convergence",
    "fit_rate",
    "support_runs",
    "support_measure",
    "write_csv",
    "write_field",
    "write_sweep_csv",
    "write_rows_csv",
    "provenance_lines",
]


# ------------------------------------------------------------- formatting

def format_number(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".6g")


def provenance_lines(cfg: RunConfig, seed: Optional[int] = None) -> List[str]:
    """Comment header recording the configuration defaults used."""
    beam, control = cfg.beam, cfg.control
    pairs = [
        ("n", cfg.n),
        ("length", cfg.length),
        ("youngs_modulus", beam.E),
        ("thickness", beam.t),
        ("shear_correction", beam.k),
        ("poisson", beam.poisson),
        ("nu", control.nu),
        ("eta", control.eta),
        ("lower", control.a),
        ("upper", control.b),
        ("f", cfg.f),
        ("g", cfg.g),
        ("w_d", cfg.w_d),
        ("theta_d", cfg.theta_d),
        ("scheme", cfg.scheme),
        ("adjoint_theta_term", cfg.adjoint_theta_term),
        ("tol", cfg.tol),
        ("max_iter", cfg.max_iter),
    ]
    if beam.kappa_override is not None:
        pairs.append(("kappa_override", beam.kappa_override))
    if seed is not None:
        pairs.append(("seed", seed))
    out = []
    for key, val in pairs:
        if isinstance(val, str):
            out.append(f"# {key} = {val}")
        else:
            out.append(f"# {key} = {format_number(val)}")
    return out


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence],
              provenance: Sequence[str] = ()) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = list(provenance)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(format_number(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_field(path, coords: np.ndarray, values: np.ndarray,
                provenance: Sequence[str] = ()) -> None:
    """Two-column whitespace-separated text, reloadable as file: data."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = list(provenance)
    for x, v in zip(coords, values):
        lines.append(f"{float(x):.17g} {float(v):.17g}")
    path.write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------- helpers

def fit_rate(hs: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(h)."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = errors > 0
    if np.count_nonzero(keep) < 2:
        return float("nan")
    return float(np.polyfit(np.log(hs[keep]), np.log(errors[keep]), 1)[0])


def support_runs(u: P0Field) -> int:
    """Number of maximal contiguous element runs where u is nonzero."""
    mask = u.values != 0.0
    if not np.any(mask):
        return 0
    flips = np.diff(mask.astype(int))
    return int(np.sum(flips == 1) + (1 if mask[0] else 0))


def support_measure(u: P0Field) -> float:
    return float(np.sum(u.mesh.element_sizes[u.values != 0.0]))


# ------------------------------------------------------------- solve

def run_solve(cfg: RunConfig, out_dir) -> SSNResult:
    """Single solve; writes the five fields and a summary record."""
    problem = build_problem(cfg)
    res = ssn_solve(problem, build_ssn_config(cfg))
    out = Path(out_dir)
    prov = provenance_lines(cfg)
    mesh = problem.mesh
    write_field(out / "u.dat", mesh.midpoints, res.u.values, prov)
    write_field(out / "w.dat", mesh.nodes, res.state.w.values, prov)
    write_field(out / "theta.dat", mesh.nodes, res.state.theta.values, prov)
    write_field(out / "p.dat", mesh.nodes, res.adjoint.p.values, prov)
    write_field(out / "q.dat", mesh.nodes, res.adjoint.q.values, prov)
    cb = problem.cost(res.u, res.state)
    final_residual = res.residual_history[-1] if res.residual_history else float("nan")
    write_csv(
        out / "summary.csv",
        ["eta", "nu", "cost", "tracking_cost", "l2_cost", "l1_cost",
         "l2norm", "null", "iterations", "converged", "residual"],
        [[cfg.control.eta, cfg.control.nu, cb.total, cb.tracking, cb.l2_term,
          cb.l1_term, l2_norm_p0(res.u), res.null_count, res.iterations,
          res.converged, final_residual]],
        prov,
    )
    return res


# ------------------------------------------------------------- sweep

@dataclass(frozen=True)
class SweepRow:
    eta: float
    cost: float
    l2norm: float
    null: int
    iterations: int
    converged: bool
    runtime: float


SWEEP_COLUMNS = ("eta", "cost", "l2norm", "null", "iterations", "converged", "runtime")


def run_sweep(cfg: RunConfig) -> List[SweepRow]:
    """Warm-started solves along the ascending eta list of the study."""
    etas = cfg.study.etas
    if not etas:
        raise ConfigError("[study] etas is required for a sweep")
    if any(b < a for a, b in zip(etas, etas[1:])):
        raise ConfigError("[study] etas must be sorted ascending")
    base = build_problem(cfg)
    rows: List[SweepRow] = []
    prev_u = None
    for eta in etas:
        problem = base.with_control(eta=eta)
        start = time.perf_counter()
        res = ssn_solve(problem, SSNConfig(tol=cfg.tol, max_iter=cfg.max_iter, u0=prev_u))
        runtime = time.perf_counter() - start
        cb = problem.cost(res.u, res.state)
        rows.append(SweepRow(
            eta=eta,
            cost=cb.total,
            l2norm=l2_norm_p0(res.u),
            null=res.null_count,
            iterations=res.iterations,
            converged=res.converged,
            runtime=runtime,
        ))
        prev_u = res.u
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path, cfg: RunConfig,
                    seed: Optional[int] = None) -> None:
    write_csv(
        path,
        SWEEP_COLUMNS,
        [[r.eta, r.cost, r.l2norm, r.null, r.iterations, r.converged, r.runtime]
         for r in rows],
        provenance_lines(cfg, seed),
    )


# ------------------------------------------------------------- grids

def _control_cell(args) -> Dict:
    """Worker: solve the control problem for one (scheme, thickness, n) cell."""
    cfg, scheme, thickness, n = args
    problem = build_problem(cfg, n=n, thickness=thickness, scheme=scheme)
    res = ssn_solve(problem, build_ssn_config(cfg))
    return {
        "scheme": scheme,
        "thickness": thickness,
        "n": n,
        "u": res.u.values,
        "w": res.state.w.values,
        "p": res.adjoint.p.values,
        "iterations": res.iterations,
        "converged": res.converged,
    }


def _run_cells(cells: List[Tuple], jobs: int) -> List[Dict]:
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_control_cell, cells))
    return [_control_cell(c) for c in cells]


def _cell_errors(cell: Dict, cfg: RunConfig, ref: Dict) -> Dict:
    mesh = build_uniform_mesh(cell["n"], cfg.length)
    ref_mesh = build_uniform_mesh(ref["n"], cfg.length)
    u = P0Field(mesh, cell["u"])
    u_ref = P0Field(ref_mesh, ref["u"])
    w = P1Field(mesh, cell["w"])
    w_ref = P1Field(ref_mesh, ref["w"])
    p = P1Field(mesh, cell["p"])
    p_ref = P1Field(ref_mesh, ref["p"])
    return {
        "control_error": l2_diff_p0(u, u_ref),
        "state_error": l2_diff_p1(w, w_ref),
        "adjoint_error": l2_diff_p1(p, p_ref),
    }


LOCKING_COLUMNS = ("scheme", "thickness", "n", "h", "control_error",
                   "state_error", "iterations", "converged")


def run_locking(cfg: RunConfig, jobs: int = 1) -> List[Dict]:
    """Control errors per (scheme, thickness, n) against per-thickness
    locking-free fine-mesh references."""
    study = cfg.study
    if not study.thicknesses or not study.mesh_sizes:
        raise ConfigError("[study] thicknesses and mesh_sizes are required for a locking study")
    n_ref = study.ref_factor * max(study.mesh_sizes)
    refs = {
        t: _control_cell((cfg, LOCKING_FREE, t, n_ref))
        for t in study.thicknesses
    }
    cells = [
        (cfg, scheme, t, n)
        for scheme in SCHEMES
        for t in study.thicknesses
        for n in study.mesh_sizes
    ]
    results = _run_cells(cells, jobs)
    rows = []
    for cell in results:
        err = _cell_errors(cell, cfg, refs[cell["thickness"]])
        rows.append({
            "scheme": cell["scheme"],
            "thickness": cell["thickness"],
            "n": cell["n"],
            "h": cfg.length / cell["n"],
            "control_error": err["control_error"],
            "state_error": err["state_error"],
            "iterations": cell["iterations"],
            "converged": cell["converged"],
        })
    rows.sort(key=lambda r: (r["scheme"], r["thickness"], r["n"]))
    return rows


CONVERGENCE_COLUMNS = ("n", "h", "control_error", "state_error",
                       "adjoint_error", "iterations", "converged")


def run_convergence(cfg: RunConfig, jobs: int = 1):
    """Control/state/adjoint errors against a locking-free fine-mesh
    reference, plus fitted log-log slopes.  Returns (rows, slopes)."""
    study = cfg.study
    if not study.mesh_sizes:
        raise ConfigError("[study] mesh_sizes is required for a convergence study")
    n_ref = study.ref_factor * max(study.mesh_sizes)
    ref = _control_cell((cfg, LOCKING_FREE, cfg.beam.t, n_ref))
    cells = [(cfg, cfg.scheme, cfg.beam.t, n) for n in study.mesh_sizes]
    results = _run_cells(cells, jobs)
    rows = []
    for cell in results:
        err = _cell_errors(cell, cfg, ref)
        rows.append({
            "n": cell["n"],
            "h": cfg.length / cell["n"],
            "control_error": err["control_error"],
            "state_error": err["state_error"],
            "adjoint_error": err["adjoint_error"],
            "iterations": cell["iterations"],
            "converged": cell["converged"],
        })
    rows.sort(key=lambda r: r["n"])
    hs = [r["h"] for r in rows]
    slopes = {
        "control": fit_rate(hs, [r["control_error"] for r in rows]),
        "state": fit_rate(hs, [r["state_error"] for r in rows]),
        "adjoint": fit_rate(hs, [r["adjoint_error"] for r in rows]),
    }
    return rows, slopes


def write_rows_csv(rows: Sequence[Dict], columns: Sequence[str], path,
                   cfg: RunConfig, seed: Optional[int] = None) -> None:
    write_csv(path, columns, [[r[c] for c in columns] for r in rows],
              provenance_lines(cfg, seed))
