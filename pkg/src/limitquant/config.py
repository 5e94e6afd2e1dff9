"""Scenario files: TOML with dotted sections, closed schema, defaults echoed back."""

from __future__ import annotations

import difflib
import hashlib
import json
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

__all__ = [
    "EXPERIMENTS",
    "SCHEMA",
    "ParseError",
    "ValidationError",
    "Scenario",
    "parse_scenario",
    "load_scenario",
]

EXPERIMENTS = ("limit-spectrum", "veff-extract", "ambiguity", "direct-compare",
               "adiabatic-classical", "wkb-gap", "decoupling")
VEFF_METHODS = ("coupling-assembly", "spectral-extrapolation")


class ParseError(ValueError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(ValueError):
    def __init__(self, key, reason):
        self.key = key
        self.reason = reason
        super().__init__(f"{key}: {reason}")


@dataclass(frozen=True)
class _Key:
    kind: str  # float, int, str, bool, floats, ints, strs
    default: object
    doc: str


_FAMILY = {
    "kind": _Key("str", "smooth", "smooth (polynomial profile) or hardwall"),
    "omega0": _Key("floats", (1.0,), "cosine coefficients of omega0(s)"),
    "cubic": _Key("floats", (0.0,), "cosine coefficients of the cubic coefficient b(s)"),
    "quartic": _Key("floats", (0.0,), "cosine coefficients of the quartic coefficient c(s)"),
    "wall_width": _Key("floats", (1.0,), "cosine coefficients of the wall width w(s) (hardwall)"),
    "tune": _Key("bool", True, "replace omega0(s) / w(s) by their mean before use"),
}

SCHEMA: dict[str, _Key] = {
    "scenario.name": _Key("str", None, "scenario name (defaults to the file stem)"),
    "scenario.experiment": _Key("str", None, "one of: " + ", ".join(EXPERIMENTS)),
    "scenario.description": _Key("str", "", "free text"),
    "curve.kind": _Key("str", "circle", "circle, ellipse, line, fourier or sphere"),
    "curve.radius": _Key("float", 1.0, "circle or sphere radius"),
    "curve.a": _Key("float", 1.2, "ellipse semi-axis along x"),
    "curve.b": _Key("float", 0.8, "ellipse semi-axis along y"),
    "curve.length": _Key("float", 2 * math.pi, "length of a line (periodic ends)"),
    "curve.xc": _Key("floats", (0.0,), "fourier curve: cosine coefficients of x(t)"),
    "curve.xs": _Key("floats", (0.0,), "fourier curve: sine coefficients of x(t)"),
    "curve.yc": _Key("floats", (0.0,), "fourier curve: cosine coefficients of y(t)"),
    "curve.ys": _Key("floats", (0.0,), "fourier curve: sine coefficients of y(t)"),
    **{f"confinement.{k}": v for k, v in _FAMILY.items()},
    **{f"confinement_b.{k}": v for k, v in _FAMILY.items()},
    "potential.slow": _Key("floats", (0.0,), "cosine coefficients of the slow potential V(s)"),
    "lambda": _Key("floats", (), "confinement strengths, ascending"),
    "hbar": _Key("floats", (1.0,), "Planck constant values"),
    "grid.n_s": _Key("int", 128, "points along the curve"),
    "grid.n_r": _Key("int", 96, "points across the curve"),
    "grid.order": _Key("int", 4, "finite-difference order (2 or 4)"),
    "grid.n_terms": _Key("int", 8, "cosine terms representing V_eff"),
    "solver.k": _Key("int", 9, "eigenpairs per full 2D solve"),
    "solver.tol": _Key("float", 1e-9, "relative eigen-residual tolerance"),
    "solver.seed": _Key("int", 0, "seed of the Lanczos start vector"),
    "method.veff": _Key("strs", ("coupling-assembly",), "V_eff routes: " + ", ".join(VEFF_METHODS)),
    "classical.dt_per_period": _Key("float", 200.0, "integrator steps per fastest period"),
    "classical.ramp": _Key("str", "smoothstep5", "ramp shape (quintic smoothstep)"),
    "classical.I0": _Key("float", 0.5, "initial fast action"),
    "classical.order": _Key("int", 6, "order of the symmetric composition (2, 4, 6)"),
    "classical.lam0": _Key("float", 1.0, "ramp start value of lambda"),
    "classical.lam1": _Key("float", 4.0, "ramp end value of lambda"),
    "classical.ramp_periods": _Key("floats", (2.0, 4.0, 8.0, 16.0, 32.0, 200.0),
                                   "ramp durations in initial fast periods"),
    "classical.n_phases": _Key("int", 8, "initial phases averaged per ramp"),
    "classical.fast_energy": _Key("float", 0.5, "initial fast energy of constrained trajectories"),
    "classical.lambda": _Key("floats", (1e2, 1e3, 1e4), "lambda values of the trajectory comparison"),
    "classical.velocity": _Key("float", 1.0, "initial speed along the curve"),
    "well.kind": _Key("str", "smooth", "1D well: smooth or hardwall"),
    "well.omega": _Key("float", 1.0, "harmonic frequency of the 1D well"),
    "well.cubic": _Key("float", 0.0, "cubic coefficient of the 1D well"),
    "well.quartic": _Key("float", 0.0, "quartic coefficient of the 1D well"),
    "well.width": _Key("float", 1.0, "hard-wall width"),
    "wkb.levels": _Key("ints", (0,), "level indices n"),
    "direct.alphas": _Key("floats", (0.0, 1.0 / 6.0, 0.25), "alpha values of the direct quantizations"),
    "decoupling.velocity": _Key("float", 1.0, "typical slow velocity"),
    "tolerance.spacing": _Key("float", 1e-3, "limit-spectrum: extrapolated spacing error (units hbar^2)"),
    "tolerance.exponent": _Key("float", None, "expected convergence/decay exponent"),
    "tolerance.exponent_tol": _Key("float", None, "allowed deviation from the expected exponent"),
    "tolerance.agreement": _Key("float", 2.0, "veff-extract: allowed multiple of the combined uncertainty"),
    "tolerance.curvature_fit": _Key("float", 0.1, "veff-extract: kappa^2-law residual over V_eff range"),
    "tolerance.hbar_collapse": _Key("float", 2.0, "veff-extract: multiple of the combined uncertainty across hbar"),
    "tolerance.prediction": _Key("float", 0.15, "ambiguity: relative error against the perturbative shift"),
    "tolerance.classical_ratio": _Key("float", 5.0, "ambiguity: minimum deviation decrease over the lambda range"),
    "tolerance.energy_ratio": _Key("float", 0.01, "adiabatic: |E_f/E_i - sqrt(lam1/lam0)|"),
    "tolerance.action_drift": _Key("float", 1e-3, "adiabatic: drift bound for ramps of >= 200 periods"),
    "tolerance.doubling_factor": _Key("float", 2.0, "adiabatic: minimum drift decrease per doubling"),
    "tolerance.shift": _Key("float", 1e-12, "direct-compare: uniform-shift tolerance"),
    "tolerance.convergence": _Key("float", 1e-4, "two-grid change of V_eff (units hbar^2)"),
}

_MIN_LAMBDAS = {"limit-spectrum": 3, "veff-extract": 3, "ambiguity": 3, "decoupling": 2}

_EXPONENT_DEFAULTS = {
    "limit-spectrum": (-0.5, 0.1),
    "wkb-gap": (2.0, 0.3),
}


@dataclass
class Scenario:
    name: str
    experiment: str
    values: dict  # every schema key, defaults filled
    source: str | None = None
    explicit: frozenset = field(default_factory=frozenset)

    def __getitem__(self, key):
        return self.values[key]

    def section(self, prefix: str) -> dict:
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    def with_overrides(self, **kv) -> "Scenario":
        vals = dict(self.values)
        for k, v in kv.items():
            vals[k.replace("__", ".")] = v
        return Scenario(self.name, self.experiment, vals, self.source, self.explicit)

    def canonical(self) -> str:
        return json.dumps(self.values, sort_keys=True, default=list)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _flatten(tree, prefix=""):
    out = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key, entry: _Key, value):
    def num(x, kind):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ValidationError(key, f"expected a number, got {x!r}")
        if kind == "int":
            if isinstance(x, float) and not x.is_integer():
                raise ValidationError(key, f"expected an integer, got {x!r}")
            return int(x)
        if not math.isfinite(x):
            raise ValidationError(key, "must be finite")
        return float(x)

    k = entry.kind
    if k in ("float", "int"):
        return num(value, k)
    if k == "str":
        if not isinstance(value, str):
            raise ValidationError(key, f"expected a string, got {value!r}")
        return value
    if k == "bool":
        if not isinstance(value, bool):
            raise ValidationError(key, f"expected true or false, got {value!r}")
        return value
    items = value if isinstance(value, list) else [value]
    if k == "strs":
        if not all(isinstance(x, str) for x in items):
            raise ValidationError(key, "expected a list of strings")
        return tuple(items)
    return tuple(num(x, "int" if k == "ints" else "float") for x in items)


def _suggest(key):
    close = difflib.get_close_matches(key, list(SCHEMA), n=1, cutoff=0.6)
    return f"; did you mean '{close[0]}'?" if close else ""


def parse_scenario(text: str, name: str = "scenario", source: str | None = None) -> Scenario:
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ParseError(line, str(exc)) from None
    flat = _flatten(tree)
    for key in flat:
        if key not in SCHEMA:
            raise ValidationError(key, "unknown key" + _suggest(key))
    values = {k: (_coerce(k, SCHEMA[k], flat[k]) if k in flat else entry.default)
              for k, entry in SCHEMA.items()}
    exp = values["scenario.experiment"]
    if exp is None:
        raise ValidationError("scenario.experiment", "required")
    if exp not in EXPERIMENTS:
        raise ValidationError("scenario.experiment", f"unknown experiment {exp!r}" + (
            f"; did you mean '{difflib.get_close_matches(exp, EXPERIMENTS, n=1)[0]}'?"
            if difflib.get_close_matches(exp, EXPERIMENTS, n=1) else ""))
    values["scenario.name"] = values["scenario.name"] or name
    _validate(values, exp)
    return Scenario(values["scenario.name"], exp, values, source, frozenset(flat))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(None, f"cannot read {path}: {exc.strerror}") from None
    return parse_scenario(text, path.stem, str(path))


def _validate(v: dict, exp: str):
    lams = v["lambda"]
    if any(x <= 0 for x in lams):
        raise ValidationError("lambda", "values must be positive")
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ValidationError("lambda", "must be strictly ascending")
    need = _MIN_LAMBDAS.get(exp, 0)
    if exp == "direct-compare" and v["curve.kind"] != "sphere":
        need = 3
    if len(lams) < need:
        raise ValidationError("lambda", f"need >= {need} values for {exp}")
    if any(h <= 0 for h in v["hbar"]) or not v["hbar"]:
        raise ValidationError("hbar", "values must be positive")
    if v["curve.kind"] not in ("circle", "ellipse", "line", "fourier", "sphere"):
        raise ValidationError("curve.kind", f"unknown curve kind {v['curve.kind']!r}")
    if v["curve.kind"] == "sphere" and exp != "direct-compare":
        raise ValidationError("curve.kind", "a sphere is only supported by direct-compare")
    for fam in ("confinement", "confinement_b"):
        if v[f"{fam}.kind"] not in ("smooth", "hardwall"):
            raise ValidationError(f"{fam}.kind", f"unknown confinement kind {v[f'{fam}.kind']!r}")
        if v[f"{fam}.tune"]:
            key = "omega0" if v[f"{fam}.kind"] == "smooth" else "wall_width"
            coeffs = v[f"{fam}.{key}"]
            # tunable: the mean replaces the profile, it must be positive
            if coeffs[0] <= 0:
                raise ValidationError(f"{fam}.{key}", "mean value must be positive to tune")
    if exp in ("veff-extract", "limit-spectrum", "ambiguity", "direct-compare") and not v["confinement.tune"]:
        raise ValidationError("confinement.tune", f"{exp} needs a tuned confinement family")
    for m in v["method.veff"]:
        if m not in VEFF_METHODS:
            raise ValidationError("method.veff", f"unknown method {m!r}")
    if exp == "veff-extract" and "spectral-extrapolation" in v["method.veff"] and lams[-1] / lams[0] < 99.999:
        raise ValidationError("lambda", "spectral extrapolation needs lambda spanning >= 2 decades")
    if v["grid.order"] not in (2, 4):
        raise ValidationError("grid.order", "must be 2 or 4")
    for key in ("grid.n_s", "grid.n_r"):
        if v[key] < 16:
            raise ValidationError(key, "need >= 16 points")
    if v["grid.n_terms"] < 1:
        raise ValidationError("grid.n_terms", "need >= 1 term")
    if v["classical.ramp"] != "smoothstep5":
        raise ValidationError("classical.ramp", "only 'smoothstep5' is available")
    if v["classical.order"] not in (2, 4, 6):
        raise ValidationError("classical.order", "must be 2, 4 or 6")
    if v["classical.dt_per_period"] < 50:
        raise ValidationError("classical.dt_per_period", "need >= 50 steps per fast period")
    if v["well.kind"] not in ("smooth", "hardwall"):
        raise ValidationError("well.kind", f"unknown well kind {v['well.kind']!r}")
    if exp == "decoupling":
        default = (-2.0, 0.2) if v["confinement.kind"] == "hardwall" else (-0.5, 0.1)
    else:
        default = _EXPONENT_DEFAULTS.get(exp, (None, None))
    if v["tolerance.exponent"] is None:
        v["tolerance.exponent"] = default[0]
    if v["tolerance.exponent_tol"] is None:
        v["tolerance.exponent_tol"] = default[1]
