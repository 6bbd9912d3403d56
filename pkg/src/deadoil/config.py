"""Sectioned ``key = value`` run configuration with strict validation.

Example::

    # unit square, 16x16 interior nodes
    [grid]
    nx = 16
    ny = 16

    [control]
    source = gaussian_bump 0.4 0.6 0.12 20
    target_from_source = gaussian_bump 0.5 0.5 0.15 20

Profiles are ``zero``, ``constant C``, ``gaussian_bump CX CY RADIUS AMPLITUDE``,
``sinusoid KX KY AMPLITUDE`` or ``file PATH`` (a field CSV; relative paths are
resolved against the config file's directory).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import BUILTIN_NAMES, CoefficientModel, builtin_model, polynomial_model
from .control import ADJOINT_MODES, OptimizeOptions
from .errors import ConfigError, InvalidArgumentError
from .grid import Field, Grid, create_grid, read_field_csv
from .state import SolverSettings


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _names(text):
    return [t for t in text.replace(",", " ").split() if t]


# section -> key -> (parser, default, help)
SCHEMA = {
    "grid": {
        "nx": (int, None, "interior nodes along x (required)"),
        "ny": (int, None, "interior nodes along y (defaults to nx)"),
        "lx": (float, 1.0, "domain length along x"),
        "ly": (float, 1.0, "domain length along y"),
    },
    "model": {
        "name": (str, "smooth_bounded", f"one of {', '.join(BUILTIN_NAMES)}, or polynomial"),
        "phi": (_floats, None, "polynomial phi coefficients, ascending (name = polynomial)"),
        "g": (_floats, None, "polynomial g coefficients, ascending"),
        "d": (_floats, None, "polynomial d coefficients, ascending"),
        "validity": (float, 2.0, "half-width M of the validity interval [-M, M] (polynomial)"),
        "c1": (float, None, "declared lower bound of d, g, phi (polynomial)"),
        "c2": (float, None, "declared upper bound of d, g, phi (polynomial)"),
        "c3": (float, None, "declared lower bound of d', phi', phi'' (polynomial)"),
        "c4": (float, None, "declared upper bound of d', phi', phi'' (polynomial)"),
        "c_h3": (float, None, "declared bound of |phi'''| (polynomial)"),
    },
    "control": {
        "beta1": (float, 0.1, "penalty coefficient, > 0"),
        "q0": (float, 1.5, "penalty exponent, 1 < q0 < 2"),
        "eps_smooth": (float, 1e-8, "penalty smoothing, >= 0"),
        "source": (str, "zero", "source f (solve) or initial control f0 (optimize)"),
        "target_u": (str, "zero", "saturation target U"),
        "target_p": (str, "zero", "pressure target P"),
        "target_from_source": (str, None, "if set, U and P are the state solved from this source"),
    },
    "solver": {
        "method": (str, "newton", "newton or picard"),
        "adjoint_mode": (str, "discrete", "discrete or paper"),
        "tol_nonlinear": (float, 1e-10, "relative nonlinear residual target"),
        "maxit_nonlinear": (int, 100, "nonlinear iteration cap"),
        "tol_linear": (float, 1e-12, "relative linear residual target"),
        "armijo_c": (float, 1e-4, "sufficient-decrease constant"),
        "armijo_shrink": (float, 0.5, "backtracking factor in (0, 1)"),
        "min_step": (float, 1e-8, "smallest step before a line search gives up"),
        "warm_start_sweeps": (int, 3, "Picard sweeps before Newton"),
        "max_outer": (int, 200, "optimizer iteration cap"),
        "tol_stationarity": (float, 1e-6, "optimizer stop: |g| <= tol * |g_0|"),
        "step0": (float, 1.0, "first trial step of the optimizer"),
    },
    "output": {
        "directory": (str, "output", "where results are written (overridden by --output)"),
        "formats": (_names, ["csv", "jsonl"], "any of csv (fields), jsonl (logs)"),
    },
    "verify": {
        "cases": (_names, None, "verification cases to run (default: all)"),
    },
}


def defaults_help() -> str:
    lines = ["config defaults:"]
    for sec, keys in SCHEMA.items():
        lines.append(f"  [{sec}]")
        for key, (_, default, text) in keys.items():
            shown = "-" if default is None else (", ".join(default) if isinstance(default, list) else default)
            lines.append(f"    {key} = {shown}    # {text}")
    return "\n".join(lines)


@dataclass(frozen=True)
class Profile:
    kind: str
    params: tuple = ()
    path: Path | None = None

    def sample(self, grid: Grid) -> Field:
        if self.kind == "zero":
            return Field.zeros(grid)
        if self.kind == "constant":
            return Field.constant(grid, self.params[0])
        if self.kind == "gaussian_bump":
            cx, cy, r, a = self.params
            return Field.from_function(
                grid, lambda x, y: a * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * r * r)))
        if self.kind == "sinusoid":
            kx, ky, a = self.params
            return Field.from_function(
                grid, lambda x, y: a * np.sin(kx * np.pi * x / grid.lx) * np.sin(ky * np.pi * y / grid.ly))
        if self.kind == "file":
            return read_field_csv(self.path, grid)
        raise AssertionError(self.kind)

    def describe(self) -> str:
        if self.kind == "file":
            return f"file {self.path}"
        return " ".join([self.kind] + [repr(p) for p in self.params])


_PROFILE_ARITY = {"zero": 0, "constant": 1, "gaussian_bump": 4, "sinusoid": 3}


def parse_profile(text: str, base: Path, key: str) -> Profile:
    parts = text.split()
    if not parts:
        raise ConfigError(f"{key}: empty profile")
    kind = parts[0]
    if kind == "file":
        if len(parts) != 2:
            raise ConfigError(f"{key}: expected 'file PATH'")
        p = Path(parts[1])
        return Profile("file", path=p if p.is_absolute() else base / p)
    if kind not in _PROFILE_ARITY:
        raise ConfigError(f"{key}: unknown profile {kind!r}; choose from "
                          f"{', '.join(list(_PROFILE_ARITY) + ['file'])}")
    if len(parts) - 1 != _PROFILE_ARITY[kind]:
        raise ConfigError(f"{key}: {kind} takes {_PROFILE_ARITY[kind]} numbers, got {len(parts) - 1}")
    try:
        params = tuple(float(t) for t in parts[1:])
    except ValueError:
        raise ConfigError(f"{key}: profile parameters must be numbers") from None
    if not all(math.isfinite(v) for v in params):
        raise ConfigError(f"{key}: profile parameters must be finite")
    if kind == "gaussian_bump" and not params[2] > 0:
        raise ConfigError(f"{key}: gaussian_bump radius must be positive")
    return Profile(kind, params)


@dataclass
class RunConfig:
    grid: Grid
    model: CoefficientModel
    beta1: float
    q0: float
    eps_smooth: float
    source: Profile
    target_u: Profile
    target_p: Profile
    target_from_source: Profile | None
    settings: SolverSettings
    method: str
    adjoint_mode: str
    optimize: OptimizeOptions
    output_dir: Path
    formats: list
    cases: list
    path: Path | None = None
    raw: dict = field(default_factory=dict)


def read_sections(text: str, origin: str = "<config>") -> dict:
    """Parse raw text into ``{section: {key: (value_text, line_no)}}``."""
    sections: dict = {}
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{origin}:{no}: malformed section header {raw.strip()!r}")
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"{origin}:{no}: unknown section [{current}]")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{no}: expected 'key = value', got {raw.strip()!r}")
        if current is None:
            raise ConfigError(f"{origin}:{no}: key outside of any [section]")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in SCHEMA[current]:
            raise ConfigError(f"{origin}:{no}: unknown key {key!r} in [{current}]")
        if key in sections[current]:
            raise ConfigError(f"{origin}:{no}: duplicate key {current}.{key}")
        sections[current][key] = (value, no)
    return sections


def _typed(sections, origin):
    out = {}
    for sec, keys in SCHEMA.items():
        out[sec] = {}
        given = sections.get(sec, {})
        for key, (parser, default, _) in keys.items():
            if key in given:
                text, no = given[key]
                try:
                    out[sec][key] = parser(text)
                except ValueError:
                    raise ConfigError(f"{origin}:{no}: {sec}.{key}: cannot parse {text!r}") from None
            else:
                out[sec][key] = default
    return out


def parse_config(path, output_override=None) -> RunConfig:
    """Load and validate a run configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config_text(text, base=path.parent, origin=str(path), path=path,
                             output_override=output_override)


def parse_config_text(text, base=Path("."), origin="<config>", path=None, output_override=None) -> RunConfig:
    v = _typed(read_sections(text, origin), origin)
    gs, ms, cs, ss, os_, vs = (v[k] for k in ("grid", "model", "control", "solver", "output", "verify"))

    if gs["nx"] is None:
        raise ConfigError("grid.nx is required")
    ny = gs["ny"] if gs["ny"] is not None else gs["nx"]
    for key, val in (("nx", gs["nx"]), ("ny", ny)):
        if val < 1:
            raise ConfigError(f"grid.{key} = {val} must be >= 1")
    for key in ("lx", "ly"):
        if not gs[key] > 0 or not math.isfinite(gs[key]):
            raise ConfigError(f"grid.{key} = {gs[key]} must be positive")
    grid = create_grid(gs["nx"], ny, gs["lx"], gs["ly"])

    poly_keys = ("phi", "g", "d", "c1", "c2", "c3", "c4", "c_h3")
    if ms["name"] == "polynomial":
        for key in ("phi", "g", "d"):
            if ms[key] is None:
                raise ConfigError(f"model.{key} is required when model.name = polynomial")
        consts = {k: ms[k] for k in ("c1", "c2", "c3", "c4", "c_h3") if ms[k] is not None}
        try:
            model = polynomial_model(ms["phi"], ms["g"], ms["d"], ms["validity"], consts)
        except InvalidArgumentError as exc:
            raise ConfigError(f"model: {exc}") from None
    else:
        if ms["name"] not in BUILTIN_NAMES:
            raise ConfigError(f"model.name = {ms['name']!r}; choose from "
                              f"{', '.join(BUILTIN_NAMES)}, polynomial")
        extra = [k for k in poly_keys if ms[k] is not None]
        if extra:
            raise ConfigError(f"model.{extra[0]} only applies when model.name = polynomial")
        model = builtin_model(ms["name"])

    if not 1.0 < cs["q0"] < 2.0:
        raise ConfigError(f"control.q0 = {cs['q0']} violates the bound (1, 2): need 1 < q0 < 2")
    if not cs["beta1"] > 0:
        raise ConfigError(f"control.beta1 = {cs['beta1']} must be > 0")
    if not cs["eps_smooth"] >= 0:
        raise ConfigError(f"control.eps_smooth = {cs['eps_smooth']} must be >= 0")
    profiles = {}
    for key in ("source", "target_u", "target_p", "target_from_source"):
        if cs[key] is None:
            profiles[key] = None
            continue
        prof = parse_profile(cs[key], base, f"control.{key}")
        if prof.kind == "file":
            try:
                prof.sample(grid)
            except FileNotFoundError:
                raise ConfigError(f"control.{key}: file {prof.path} does not exist") from None
            except (InvalidArgumentError, ValueError) as exc:
                raise ConfigError(f"control.{key}: {exc}") from None
        profiles[key] = prof
    if profiles["target_from_source"] is not None and (cs["target_u"] != "zero" or cs["target_p"] != "zero"):
        raise ConfigError("control.target_from_source excludes control.target_u / control.target_p")

    if ss["method"] not in ("newton", "picard"):
        raise ConfigError(f"solver.method = {ss['method']!r}; choose newton or picard")
    if ss["adjoint_mode"] not in ADJOINT_MODES:
        raise ConfigError(f"solver.adjoint_mode = {ss['adjoint_mode']!r}; choose from {', '.join(ADJOINT_MODES)}")
    setting_keys = ("tol_nonlinear", "maxit_nonlinear", "tol_linear", "armijo_c",
                    "armijo_shrink", "min_step", "warm_start_sweeps")
    try:
        settings = SolverSettings(**{k: ss[k] for k in setting_keys})
    except InvalidArgumentError as exc:
        raise ConfigError(f"solver.{exc}") from None
    try:
        opt = OptimizeOptions(max_outer=ss["max_outer"], tol_stationarity=ss["tol_stationarity"],
                              step0=ss["step0"], adjoint_mode=ss["adjoint_mode"])
    except InvalidArgumentError as exc:
        raise ConfigError(f"solver.{exc}") from None

    bad = [f for f in os_["formats"] if f not in ("csv", "jsonl")]
    if bad:
        raise ConfigError(f"output.formats: unknown format {bad[0]!r}; choose from csv, jsonl")
    from .verify import DEFAULT_CASES
    cases = vs["cases"] if vs["cases"] is not None else list(DEFAULT_CASES)
    bad = [c for c in cases if c not in DEFAULT_CASES]
    if bad:
        raise ConfigError(f"verify.cases: unknown case {bad[0]!r}; choose from {', '.join(DEFAULT_CASES)}")

    out_dir = Path(output_override) if output_override else Path(os_["directory"])
    if not out_dir.is_absolute() and output_override is None:
        out_dir = base / out_dir
    return RunConfig(
        grid=grid, model=model, beta1=cs["beta1"], q0=cs["q0"], eps_smooth=cs["eps_smooth"],
        source=profiles["source"], target_u=profiles["target_u"], target_p=profiles["target_p"],
        target_from_source=profiles["target_from_source"], settings=settings,
        method=ss["method"], adjoint_mode=ss["adjoint_mode"], optimize=opt,
        output_dir=out_dir, formats=list(os_["formats"]), cases=list(cases), path=path, raw=v)
