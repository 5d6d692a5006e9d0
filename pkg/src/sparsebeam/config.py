"""Run configuration: INI files in, validated problem objects out.

Sections and keys (defaults in brackets):

    [geometry]  n (required), length [1.0]
    [material]  youngs_modulus [1.44e9], thickness [0.01],
                shear_correction [5/6], poisson [0.35], kappa_override [unset]
    [control]   nu (required), eta (required), lower [-inf], upper [inf]
    [data]      f, g, w_d, theta_d  [zero]
    [solver]    scheme [locking_free], tol [1e-10], max_iter [50],
                adjoint_theta_term [false]
    [study]     etas, thicknesses, mesh_sizes (comma lists), family
                [balanced], ref_factor [8]

Numeric values accept plain fractions ("5/6").  Data entries use a small
catalog:

    zero
    constant:VALUE
    sine:AMPLITUDE,FREQUENCY[,PHASE]   ->  A*sin(F*pi*x/length + P)
    file:PATH                          ->  two whitespace-separated columns
                                           (coordinate, value); element
                                           midpoints make a piecewise
                                           constant field, anything else is
                                           interpolated linearly

Unknown sections or keys are rejected, as are physically inadmissible
values; errors raise ConfigError with the offending location in the
message.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .control import ControlParams
from .fem import LOCKING_FREE, SCHEMES, BeamParams, LoadData
from .meshes import P0Field, build_uniform_mesh
from .problem import ControlProblem
from .ssn import SSNConfig

__all__ = [
    "ConfigError",
    "StudyConfig",
    "RunConfig",
    "load_config",
    "build_problem",
    "build_ssn_config",
    "realize_field",
]

_ALLOWED = {
    "geometry": {"n", "length"},
    "material": {"youngs_modulus", "thickness", "shear_correction", "poisson", "kappa_override"},
    "control": {"nu", "eta", "lower", "upper"},
    "data": {"f", "g", "w_d", "theta_d"},
    "solver": {"scheme", "tol", "max_iter", "adjoint_theta_term"},
    "study": {"etas", "thicknesses", "mesh_sizes", "family", "ref_factor"},
}

_FAMILIES = ("balanced", "sine")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _number(text: str, where: str) -> float:
    s = text.strip()
    try:
        if "/" in s:
            num, den = s.split("/")
            return float(num) / float(den)
        return float(s)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{where}: cannot parse number {text!r}") from exc


def _number_list(text: str, where: str) -> Tuple[float, ...]:
    items = [p for p in (piece.strip() for piece in text.split(",")) if p]
    if not items:
        raise ConfigError(f"{where}: empty list")
    return tuple(_number(p, where) for p in items)


def _int_list(text: str, where: str) -> Tuple[int, ...]:
    vals = _number_list(text, where)
    out = []
    for v in vals:
        if v != int(v) or v < 1:
            raise ConfigError(f"{where}: expected positive integers, got {v}")
        out.append(int(v))
    return tuple(out)


@dataclass(frozen=True)
class StudyConfig:
    etas: Tuple[float, ...] = ()
    thicknesses: Tuple[float, ...] = ()
    mesh_sizes: Tuple[int, ...] = ()
    family: str = "balanced"
    ref_factor: int = 8


@dataclass(frozen=True)
class RunConfig:
    n: int
    length: float
    beam: BeamParams
    control: ControlParams
    f: str = "zero"
    g: str = "zero"
    w_d: str = "zero"
    theta_d: str = "zero"
    scheme: str = LOCKING_FREE
    adjoint_theta_term: bool = False
    tol: float = 1e-10
    max_iter: int = 50
    study: StudyConfig = field(default_factory=StudyConfig)
    base_dir: Optional[Path] = None  # resolves file: entries


def _validate_spec(spec: str, where: str) -> str:
    s = spec.strip()
    head = s.split(":", 1)[0]
    if head not in ("zero", "constant", "sine", "file"):
        raise ConfigError(f"{where}: unknown data spec {spec!r}")
    if head == "zero":
        if s != "zero":
            raise ConfigError(f"{where}: 'zero' takes no arguments")
        return s
    if ":" not in s or not s.split(":", 1)[1].strip():
        raise ConfigError(f"{where}: {head} needs an argument")
    if head == "constant":
        _number(s.split(":", 1)[1], where)
    elif head == "sine":
        args = _number_list(s.split(":", 1)[1], where)
        if len(args) not in (2, 3):
            raise ConfigError(f"{where}: sine takes 2 or 3 numbers")
    return s


def realize_field(spec: str, mesh, length: float, base_dir: Optional[Path] = None):
    """Turn a catalog string into load data on a concrete mesh."""
    s = spec.strip()
    if s == "zero":
        return 0.0
    head, arg = s.split(":", 1)
    if head == "constant":
        return _number(arg, spec)
    if head == "sine":
        vals = _number_list(arg, spec)
        amp, freq = vals[0], vals[1]
        phase = vals[2] if len(vals) == 3 else 0.0
        return lambda x: amp * np.sin(freq * np.pi * np.asarray(x) / length + phase)
    if head == "file":
        path = Path(arg.strip())
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        try:
            data = np.loadtxt(path, dtype=float, ndmin=2)
        except OSError as exc:
            raise ConfigError(f"cannot read field file {path}: {exc}") from exc
        if data.ndim != 2 or data.shape[1] != 2:
            raise ConfigError(f"field file {path} must hold two columns: coordinate, value")
        coords, vals = data[:, 0], data[:, 1]
        tol = 1e-9 * max(length, 1.0)
        if vals.size == mesh.n and np.allclose(coords, mesh.midpoints, atol=tol):
            return P0Field(mesh, vals.copy())
        if np.any(np.diff(coords) <= 0):
            raise ConfigError(f"field file {path} needs strictly increasing coordinates")
        # nodal or foreign-grid samples: interpolate
        c, v = coords.copy(), vals.copy()
        return lambda x: np.interp(np.asarray(x, dtype=float), c, v)
    raise ConfigError(f"unknown data spec {spec!r}")


def load_config(path) -> RunConfig:
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    for section in cp.sections():
        if section not in _ALLOWED:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in _ALLOWED[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")

    def get(section, key, default=None):
        if cp.has_option(section, key):
            return cp.get(section, key)
        return default

    if not cp.has_option("geometry", "n"):
        raise ConfigError("[geometry] n is required")
    n_val = _number(cp.get("geometry", "n"), "[geometry] n")
    if n_val != int(n_val) or n_val < 2:
        raise ConfigError("[geometry] n must be an integer >= 2")
    n = int(n_val)
    length = _number(get("geometry", "length", "1.0"), "[geometry] length")

    kw = {}
    if cp.has_option("material", "kappa_override"):
        kw["kappa_override"] = _number(cp.get("material", "kappa_override"), "[material] kappa_override")
    try:
        beam = BeamParams(
            E=_number(get("material", "youngs_modulus", "1.44e9"), "[material] youngs_modulus"),
            t=_number(get("material", "thickness", "0.01"), "[material] thickness"),
            k=_number(get("material", "shear_correction", "5/6"), "[material] shear_correction"),
            poisson=_number(get("material", "poisson", "0.35"), "[material] poisson"),
            L=length,
            **kw,
        )
    except ValueError as exc:
        raise ConfigError(f"[material]: {exc}") from exc

    for key in ("nu", "eta"):
        if not cp.has_option("control", key):
            raise ConfigError(f"[control] {key} is required")
    try:
        control = ControlParams(
            nu=_number(cp.get("control", "nu"), "[control] nu"),
            eta=_number(cp.get("control", "eta"), "[control] eta"),
            a=_number(get("control", "lower", "-inf"), "[control] lower"),
            b=_number(get("control", "upper", "inf"), "[control] upper"),
        )
    except ValueError as exc:
        raise ConfigError(f"[control]: {exc}") from exc

    specs = {}
    for key in ("f", "g", "w_d", "theta_d"):
        specs[key] = _validate_spec(get("data", key, "zero"), f"[data] {key}")

    scheme = get("solver", "scheme", LOCKING_FREE)
    if scheme not in SCHEMES:
        raise ConfigError(f"[solver] scheme must be one of {SCHEMES}")
    tol = _number(get("solver", "tol", "1e-10"), "[solver] tol")
    max_iter_val = _number(get("solver", "max_iter", "50"), "[solver] max_iter")
    if tol <= 0 or max_iter_val < 1 or max_iter_val != int(max_iter_val):
        raise ConfigError("[solver] tol must be positive and max_iter a positive integer")
    adjoint_theta = False
    if cp.has_option("solver", "adjoint_theta_term"):
        try:
            adjoint_theta = cp.getboolean("solver", "adjoint_theta_term")
        except ValueError as exc:
            raise ConfigError("[solver] adjoint_theta_term must be a boolean") from exc

    study_kw = {}
    if cp.has_option("study", "etas"):
        study_kw["etas"] = _number_list(cp.get("study", "etas"), "[study] etas")
        if any(e < 0 for e in study_kw["etas"]):
            raise ConfigError("[study] etas must be nonnegative")
    if cp.has_option("study", "thicknesses"):
        study_kw["thicknesses"] = _number_list(cp.get("study", "thicknesses"), "[study] thicknesses")
        if any(not (0 < t <= 1) for t in study_kw["thicknesses"]):
            raise ConfigError("[study] thicknesses must lie in (0, 1]")
    if cp.has_option("study", "mesh_sizes"):
        study_kw["mesh_sizes"] = _int_list(cp.get("study", "mesh_sizes"), "[study] mesh_sizes")
    if cp.has_option("study", "family"):
        fam = cp.get("study", "family").strip()
        if fam not in _FAMILIES:
            raise ConfigError(f"[study] family must be one of {_FAMILIES}")
        study_kw["family"] = fam
    if cp.has_option("study", "ref_factor"):
        rf = _number(cp.get("study", "ref_factor"), "[study] ref_factor")
        if rf != int(rf) or rf < 2:
            raise ConfigError("[study] ref_factor must be an integer >= 2")
        study_kw["ref_factor"] = int(rf)

    return RunConfig(
        n=n,
        length=length,
        beam=beam,
        control=control,
        f=specs["f"],
        g=specs["g"],
        w_d=specs["w_d"],
        theta_d=specs["theta_d"],
        scheme=scheme,
        adjoint_theta_term=adjoint_theta,
        tol=tol,
        max_iter=int(max_iter_val),
        study=StudyConfig(**study_kw),
        base_dir=path.resolve().parent,
    )


def build_problem(cfg: RunConfig, n: Optional[int] = None, thickness: Optional[float] = None,
                  scheme: Optional[str] = None, loads: Optional[LoadData] = None) -> ControlProblem:
    """Materialize a problem from a config, with per-study overrides."""
    n_eff = n if n is not None else cfg.n
    mesh = build_uniform_mesh(n_eff, cfg.length)
    beam = cfg.beam if thickness is None else replace(cfg.beam, t=thickness)
    if loads is None:
        loads = LoadData(
            f=realize_field(cfg.f, mesh, cfg.length, cfg.base_dir),
            g=realize_field(cfg.g, mesh, cfg.length, cfg.base_dir),
            w_d=realize_field(cfg.w_d, mesh, cfg.length, cfg.base_dir),
            theta_d=realize_field(cfg.theta_d, mesh, cfg.length, cfg.base_dir),
        )
    return ControlProblem(
        mesh=mesh,
        beam=beam,
        loads=loads,
        control=cfg.control,
        scheme=scheme if scheme is not None else cfg.scheme,
        adjoint_theta_term=cfg.adjoint_theta_term,
    )


def build_ssn_config(cfg: RunConfig) -> SSNConfig:
    return SSNConfig(tol=cfg.tol, max_iter=cfg.max_iter)
