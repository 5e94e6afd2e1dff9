"""Scenario runner: dispatches experiments, writes CSVs and a report, decides pass/fail."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .classical import (HardWall, PolyWell, adiabatic_invariance_experiment, gap_to_exact,
                        integrate, orbit_period, energy_of_action, Ramp, WellHamiltonian)
from .config import Scenario, ValidationError, load_scenario, parse_scenario
from .geometry import OutOfTube, curve_from_config
from .potentials import NonPositiveFrequency, family_from_config, tune_harmonic
from .qsolve import NoConvergence
from .reduction import (ExtrapolationUnstable, InsufficientResolution, adiabatic_decoupling_check,
                        ambiguity_experiment, assemble_v_eff, compare_direct_quantizations,
                        coupling_terms, extract_v_eff_spectral, fit_curvature_law, limit_spectrum)

log = logging.getLogger(__name__)

__all__ = [
    "Check",
    "RunReport",
    "builtin_scenarios",
    "resolve_scenario",
    "run",
    "write_csv",
]

MEASURE = "reduced operator on the curve with reference measure ds; V_eff is the coefficient of hbar^2"
EXTRAPOLATION = "x(lam) = x_inf + a lam^-1/2 + b lam^-1"


@dataclass
class Check:
    name: str
    value: float
    bound: str
    passed: bool
    detail: str = ""


@dataclass
class RunReport:
    scenario: str
    experiment: str
    scenario_hash: str
    seed: int
    checks: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.errors and all(c.passed for c in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "experiment": self.experiment, "hash": self.scenario_hash,
                "seed": self.seed, "passed": self.passed, "checks": [asdict(c) for c in self.checks],
                "metrics": self.metrics, "files": self.files, "errors": self.errors,
                "settings": self.settings}

    def text(self) -> str:
        lines = [f"scenario   {self.scenario}  ({self.experiment})",
                 f"hash       {self.scenario_hash}   seed {self.seed}",
                 f"measure    {MEASURE}",
                 f"extrapol.  {EXTRAPOLATION}", ""]
        for c in self.checks:
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {_fmt(c.value)} (require {c.bound})"
                         + (f"  {c.detail}" if c.detail else ""))
        for e in self.errors:
            lines.append(f"[ERROR] {e}")
        if self.metrics:
            lines.append("")
            for k in sorted(self.metrics):
                lines.append(f"{k:28s} {_fmt(self.metrics[k])}")
        lines += ["", "result     " + ("PASS" if self.passed else "FAIL")]
        lines += [f"file       {f}" for f in self.files]
        return "\n".join(lines) + "\n"


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.6g}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else str(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ---- CSV -------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12e}"
    return str(v)


def write_csv(path, columns, rows, meta: dict) -> None:
    """CSV with a ``# meta:`` header block and fixed column order."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for k in sorted(meta):
            fh.write(f"# meta: {k}={meta[k]}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


# ---- building blocks --------------------------------------------------------

def _curve(sc):
    return curve_from_config(sc.section("curve"))


def _family(sc, curve, prefix="confinement"):
    cfg = sc.section(prefix)
    fam = family_from_config(cfg, curve.period)
    if cfg["tune"]:
        try:
            fam = tune_harmonic(fam)
        except NonPositiveFrequency as exc:
            raise ValidationError(f"{prefix}.omega0", str(exc)) from None
    return fam


def _well(sc):
    w = sc.section("well")
    if w["kind"] == "hardwall":
        return HardWall(w["width"])
    try:
        return PolyWell(w["omega"], w["cubic"], w["quartic"])
    except ValueError as exc:
        raise ValidationError("well", str(exc)) from None


def _v_slow(sc):
    v = sc["potential.slow"]
    return None if all(x == 0 for x in v) else v


def _exponent_check(name, value, sc):
    target, tol = sc["tolerance.exponent"], sc["tolerance.exponent_tol"]
    ok = math.isfinite(value) and abs(value - target) <= tol
    return Check(name, float(value), f"{target:g} +/- {tol:g}", ok)


def _convergence_check(sc, curve, family, lam, hbar):
    """Two-grid test: assembled V_eff at n_r against 2 n_r (n_s resolution is checked inside)."""
    n_s, n_r, order = sc["grid.n_s"], sc["grid.n_r"], sc["grid.order"]
    tol = sc["tolerance.convergence"]
    try:
        a = coupling_terms(curve, family, lam, hbar, n_s, n_r, order)
        b = coupling_terms(curve, family, lam, hbar, n_s, 2 * n_r, order)
    except InsufficientResolution as exc:
        return Check("grid convergence", float("inf"), f"<= {tol:g}", False, str(exc))
    change = float(np.max(np.abs(a.total - b.total)))
    return Check("grid convergence", change, f"<= {tol:g}", change <= tol,
                 f"lam={lam:g}, n_r={n_r} vs {2 * n_r}")


# ---- experiments ---------------------------------------------------------------

def _exp_limit_spectrum(sc, ctx):
    curve, hbar = _curve(sc), sc["hbar"][0]
    fam = _family(sc, curve)
    rep = limit_spectrum(curve, fam, sc["lambda"], hbar, sc["solver.k"], _v_slow(sc), sc["grid.n_s"],
                         sc["grid.n_r"], ctx["seed"], order=sc["grid.order"], map_fn=ctx["map"])
    err = float(np.max(rep.error))
    checks = [
        _convergence_check(sc, curve, fam, sc["lambda"][-1], hbar),
        Check("extrapolated spacing error", err, f"< {sc['tolerance.spacing']:g} hbar^2",
              err < sc["tolerance.spacing"] * hbar**2),
        _exponent_check("spacing convergence exponent", rep.exponent, sc),
    ]
    rows = [(lam, j, e) for lam, levels in zip(rep.lams, rep.spectra) for j, e in enumerate(levels)]
    spacing_rows = [(j + 1, rep.direct_spacings[j], rep.extrapolated[j], rep.extrapolation_uncertainty[j],
                     rep.exponents[j]) for j in range(rep.direct_spacings.size)]
    tables = {
        "spectra.csv": (("lambda", "level", "energy"), rows, {"energy": "E - E_ref(lambda)"}),
        "spacings.csv": (("level", "direct", "extrapolated", "uncertainty", "exponent"), spacing_rows, {}),
    }
    metrics = {"spacings_lambda_max": rep.spacings[-1].tolist(), "direct_spacings": rep.direct_spacings.tolist(),
               "per_level_exponents": rep.exponents.tolist()}
    return checks, metrics, tables


def _estimates(sc, ctx, curve, fam, hbar, methods):
    out = {}
    for m in methods:
        if m == "coupling-assembly":
            out[m] = assemble_v_eff(curve, fam, sc["lambda"], hbar, sc["grid.n_s"], sc["grid.n_r"],
                                    sc["grid.n_terms"], sc["grid.order"], map_fn=ctx["map"])
        else:
            out[m] = extract_v_eff_spectral(curve, fam, sc["lambda"], hbar, max(sc["solver.k"], 12),
                                            _v_slow(sc), sc["grid.n_s"], min(sc["grid.n_r"], 64),
                                            sc["grid.n_terms"], ctx["seed"], sc["grid.order"],
                                            map_fn=ctx["map"])
    return out


def _exp_veff(sc, ctx):
    curve = _curve(sc)
    fam = _family(sc, curve)
    methods = sc["method.veff"]
    checks, metrics, rows, spectra = [], {}, [], []
    per_hbar = {}
    for hbar in sc["hbar"]:
        est = _estimates(sc, ctx, curve, fam, hbar, methods)
        per_hbar[hbar] = est
        for m, e in est.items():
            rows += [(s, v, u, m, hbar) for s, v, u in zip(e.s, e.v_eff, e.uncertainty)]
            if "band" in e.meta:
                spectra += [(lam, j, x, hbar) for lam, band in zip(e.lams, e.meta["band"])
                            for j, x in enumerate(band)]
            fit = fit_curvature_law(e, curve)
            metrics[f"c[{m},hbar={hbar:g}]"] = fit.c
            metrics[f"max_uncertainty[{m},hbar={hbar:g}]"] = float(np.max(e.uncertainty))
            checks.append(Check(f"kappa^2 law ({m}, hbar={hbar:g})", fit.relative_residual,
                                f"< {sc['tolerance.curvature_fit']:g} of V_eff range",
                                fit.relative_residual < sc["tolerance.curvature_fit"]))
        if len(est) == 2:
            a, b = est[methods[0]], est[methods[1]]
            comb = np.hypot(a.uncertainty, b.uncertainty)
            ratio = float(np.max(np.abs(a.v_eff - b.v_eff) / np.maximum(comb, 1e-300)))
            checks.append(Check(f"method agreement (hbar={hbar:g})", ratio,
                                f"<= {sc['tolerance.agreement']:g} x combined uncertainty",
                                ratio <= sc["tolerance.agreement"]))
    if len(sc["hbar"]) > 1:
        for m in methods:
            ests = [per_hbar[h][m] for h in sc["hbar"]]
            worst = 0.0
            for i in range(len(ests)):
                for j in range(i + 1, len(ests)):
                    comb = np.hypot(ests[i].uncertainty, ests[j].uncertainty)
                    worst = max(worst, float(np.max(np.abs(ests[i].v_eff - ests[j].v_eff) / comb)))
            checks.append(Check(f"hbar^2 collapse ({m})", worst,
                                f"<= {sc['tolerance.hbar_collapse']:g} x combined uncertainty",
                                worst <= sc["tolerance.hbar_collapse"]))
    checks.insert(0, _convergence_check(sc, curve, fam, sc["lambda"][-1], sc["hbar"][0]))
    tables = {"veff.csv": (("s", "v_eff", "uncertainty", "method", "hbar"), rows, {})}
    if spectra:
        tables["spectra.csv"] = (("lambda", "level", "energy", "hbar"), spectra, {"energy": "E - E_ref(lambda)"})
    return checks, metrics, tables


def _exp_ambiguity(sc, ctx):
    curve, hbar = _curve(sc), sc["hbar"][0]
    fa, fb = _family(sc, curve), _family(sc, curve, "confinement_b")
    method = sc["method.veff"][0]
    rep = ambiguity_experiment(curve, fa, fb, sc["lambda"], hbar, method, sc["classical.lambda"],
                               sc["classical.fast_energy"], _v_slow(sc), sc["grid.n_s"], sc["grid.n_r"],
                               sc["grid.n_terms"], max(sc["solver.k"], 12), sc["grid.order"])
    comp = compare_direct_quantizations(curve, _v_slow(sc), sc["direct.alphas"], hbar, rep.v_b,
                                        order=sc["grid.order"])
    checks = [
        _convergence_check(sc, curve, fb, sc["lambda"][-1], hbar),
        Check("difference vs perturbative shift", rep.relative_error, f"<= {sc['tolerance.prediction']:g}",
              rep.relative_error <= sc["tolerance.prediction"]),
        Check("classical deviation decrease", rep.classical_ratio, f">= {sc['tolerance.classical_ratio']:g}",
              rep.classical_ratio >= sc["tolerance.classical_ratio"],
              "lam " + ", ".join(f"{x:g}" for x in rep.classical.lams)),
    ]
    metrics = {"max_abs_difference": float(np.max(np.abs(rep.difference))),
               "classical_deviation": rep.classical.deviation.tolist(),
               "classical_lambda": rep.classical.lams.tolist(),
               "non_geometric_b": comp.non_geometric,
               "matching_alphas_b": list(comp.matching)}
    rows = [(s, a, b, d, p, u) for s, a, b, d, p, u in zip(rep.s, rep.v_a.v_eff, rep.v_b.v_eff, rep.difference,
                                                           rep.predicted, rep.uncertainty)]
    tables = {"ambiguity.csv": (("s", "v_eff_a", "v_eff_b", "diff", "predicted", "uncertainty"), rows,
                                {"method": method}),
              "classical_agreement.csv": (("lambda", "deviation"),
                                          list(zip(rep.classical.lams, rep.classical.deviation)), {})}
    return checks, metrics, tables


def _exp_direct(sc, ctx):
    hbar = sc["hbar"][0]
    alphas = sc["direct.alphas"]
    tol = sc["tolerance.shift"]
    checks, metrics = [], {}
    if sc["curve.kind"] == "sphere":
        radius = sc["curve.radius"]
        comp = compare_direct_quantizations(("sphere", radius), _v_slow(sc), alphas, hbar, k=sc["solver.k"])
        R = 2.0 / radius**2
        for (a, b), (shift, spread) in comp.shifts.items():
            err = abs(shift - (b - a) * hbar**2 * R)
            checks.append(Check(f"uniform shift alpha {a:.6g}->{b:.6g}", max(err, spread),
                                f"<= {tol:g}", max(err, spread) <= tol, f"shift={shift:.12g}"))
    else:
        curve = _curve(sc)
        fam = _family(sc, curve)
        est = assemble_v_eff(curve, fam, sc["lambda"], hbar, sc["grid.n_s"], sc["grid.n_r"], sc["grid.n_terms"],
                             sc["grid.order"], map_fn=ctx["map"])
        comp = compare_direct_quantizations(curve, _v_slow(sc), alphas, hbar, est, k=sc["solver.k"],
                                            order=sc["grid.order"])
        base = comp.direct[alphas[0]]
        spread = max(float(np.max(np.abs(d - base))) for d in comp.direct.values())
        checks.append(Check("alpha-family coincides on a curve", spread, f"<= {tol:g}", spread <= tol))
        metrics.update({"matching_alphas": list(comp.matching), "non_geometric": comp.non_geometric,
                        "spacing_error": {f"{a:.6g}": v for a, v in comp.spacing_error.items()},
                        "c_kappa2": comp.curvature_fit.c})
    rows = [(a, j, e) for a in alphas for j, e in enumerate(comp.direct[a])]
    if comp.limit is not None:
        rows += [("limit", j, e) for j, e in enumerate(comp.limit)]
    return checks, metrics, {"direct_spectra.csv": (("alpha", "level", "energy"), rows, {})}


def _exp_adiabatic(sc, ctx):
    well = _well(sc)
    if isinstance(well, HardWall):
        raise ValidationError("well.kind", "ramp experiments need a smooth well")
    lam0, lam1, I0 = sc["classical.lam0"], sc["classical.lam1"], sc["classical.I0"]
    period0 = orbit_period(well, energy_of_action(well, I0, lam0), lam0)
    T = np.array(sc["classical.ramp_periods"]) * period0
    tab = adiabatic_invariance_experiment(well, T, lam0, lam1, I0, sc["classical.n_phases"],
                                          sc["classical.dt_per_period"], sc["classical.order"],
                                          map_fn=ctx["map"])
    long = tab.T_periods >= 200
    scan = ~long
    checks = []
    if np.count_nonzero(scan) >= 2:
        f = tab.decay_factors[scan[:-1] & scan[1:]]
        checks.append(Check("drift decrease per ramp doubling", float(np.min(f)),
                            f">= {sc['tolerance.doubling_factor']:g}",
                            bool(np.all(f >= sc["tolerance.doubling_factor"])), "monotone" if tab.monotone else ""))
    target = math.sqrt(lam1 / lam0) if well.cubic == 0 and well.quartic == 0 else None
    for i in np.nonzero(long)[0]:
        checks.append(Check(f"action drift, {tab.T_periods[i]:g} periods", tab.drift[i],
                            f"< {sc['tolerance.action_drift']:g}", tab.drift[i] < sc["tolerance.action_drift"]))
        if target is not None:
            dev = abs(tab.energy_ratio[i] - target)
            checks.append(Check(f"E_final/E_initial, {tab.T_periods[i]:g} periods", tab.energy_ratio[i],
                                f"{target:g} +/- {sc['tolerance.energy_ratio']:g}", dev <= sc["tolerance.energy_ratio"]))
    # one sample orbit through the longest ramp
    T_max = float(T[-1])
    ham = WellHamiltonian(well, Ramp(lam0, lam1, T_max))
    e0 = energy_of_action(well, I0, lam0)
    dt = period0 / (sc["classical.dt_per_period"] * math.sqrt(lam1 / lam0))
    t_end = T_max + 2 * period0
    rec = integrate(ham, (0.0, math.sqrt(2 * e0)), t_end, dt, sc["classical.order"],
                    save_every=max(1, int(t_end / dt) // 2000))
    orbit_rows = list(zip(rec.t, rec.s[:, 0], rec.r[:, 0], rec.p_s[:, 0], rec.p_r[:, 0], rec.energy[:, 0],
                          rec.lam()))
    tables = {
        "action_drift.csv": (("T", "drift", "T_periods", "energy_ratio"),
                             list(zip(tab.T, tab.drift, tab.T_periods, tab.energy_ratio)),
                             {"lam0": lam0, "lam1": lam1, "I0": I0}),
        "orbits.csv": (("t", "s", "r", "p_s", "p_r", "energy", "lambda"), orbit_rows,
                       {"integrator": f"symmetric composition order {sc['classical.order']}"}),
    }
    return checks, {"drift": tab.drift.tolist(), "energy_ratio": tab.energy_ratio.tolist()}, tables


def _exp_wkb(sc, ctx):
    well = _well(sc)
    hbars = np.array(sc["hbar"])
    items = [(h, n) for h in hbars for n in sc["wkb.levels"]]
    reports = list(ctx["map"](lambda hn: gap_to_exact(well, hn[1], hn[0]), items))
    rows = []
    for (h, n), g in zip(items, reports):
        rows += [(h, n, conv, g.exact, g.wkb[conv], g.gap[conv]) for conv in sorted(g.gap)]
    checks, metrics = [], {}
    if hbars.size >= 2:
        for n in sc["wkb.levels"]:
            gaps = np.array([g.primary for (h, m), g in zip(items, reports) if m == n])
            if np.all(gaps > 0):
                slope = float(np.polyfit(np.log(hbars), np.log(gaps), 1)[0])
                checks.append(_exponent_check(f"log-log slope of gap vs hbar (n={n})", slope, sc))
            else:
                metrics[f"gap_vanishes[n={n}]"] = True
    return checks, metrics, {"wkb_gap.csv": (("hbar", "n", "convention", "exact", "wkb", "gap"), rows, {})}


def _exp_decoupling(sc, ctx):
    curve, hbar = _curve(sc), sc["hbar"][0]
    fam = _family(sc, curve)
    rep = adiabatic_decoupling_check(curve, fam, sc["lambda"], hbar, sc["decoupling.velocity"],
                                     min(sc["grid.n_s"], 64), sc["grid.n_r"], sc["grid.order"],
                                     map_fn=ctx["map"])
    checks = []
    if rep.trivial:
        checks.append(Check("coupling vanishes identically", float(np.max(rep.max_ratio)), "s-independent", True))
    else:
        checks.append(_exponent_check("coupling-to-gap decay exponent", rep.exponent, sc))
    rows = list(zip(rep.lams, rep.max_ratio, rep.first_excited.max(axis=1)))
    return checks, {"exponent": rep.exponent}, {
        "decoupling.csv": (("lambda", "max_ratio", "max_ratio_first_excited"), rows, {})}


_EXPERIMENTS = {
    "limit-spectrum": _exp_limit_spectrum,
    "veff-extract": _exp_veff,
    "ambiguity": _exp_ambiguity,
    "direct-compare": _exp_direct,
    "adiabatic-classical": _exp_adiabatic,
    "wkb-gap": _exp_wkb,
    "decoupling": _exp_decoupling,
}


# ---- entry points ----------------------------------------------------------------

def builtin_scenarios() -> dict:
    """Name -> TOML text of the shipped scenario library."""
    root = resources.files("limitquant") / "scenarios"
    return {p.name[:-5]: p.read_text() for p in sorted(root.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".toml")}


def resolve_scenario(ref) -> Scenario:
    """A path to a scenario file, or the name of a built-in scenario."""
    if isinstance(ref, Scenario):
        return ref
    path = Path(ref)
    if path.exists():
        return load_scenario(path)
    lib = builtin_scenarios()
    if str(ref) in lib:
        return parse_scenario(lib[str(ref)], str(ref), f"builtin:{ref}")
    return load_scenario(path)  # raises ParseError for the missing file


def run(scenario, out_dir=None, seed=None, threads=1) -> RunReport:
    """Run a scenario; CSVs and ``report.txt``/``report.json`` go to ``out_dir`` when given."""
    sc = resolve_scenario(scenario)
    seed = sc["solver.seed"] if seed is None else int(seed)
    report = RunReport(sc.name, sc.experiment, sc.hash, seed, settings=_jsonable(sc.values))
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    ctx = {"seed": seed, "map": pool.map if pool else map}
    try:
        checks, metrics, tables = _EXPERIMENTS[sc.experiment](sc, ctx)
    except (InsufficientResolution, ExtrapolationUnstable, NoConvergence) as exc:
        report.errors.append(f"{sc.name}: {type(exc).__name__}: {exc}")
        checks, metrics, tables = [], {}, {}
    finally:
        if pool:
            pool.shutdown()
    report.checks, report.metrics = checks, _jsonable(metrics)
    if out is not None:
        meta = {"package": f"limitquant {__version__}", "scenario": sc.name, "scenario_hash": sc.hash,
                "experiment": sc.experiment, "seed": seed, "hbar": ",".join(f"{h:g}" for h in sc["hbar"]),
                "measure": MEASURE, "extrapolation": EXTRAPOLATION, "kernels": _backend_name()}
        for name in sorted(tables):
            cols, rows, extra = tables[name]
            write_csv(out / name, cols, rows, {**meta, **extra})
            report.files.append(str(out / name))
        (out / "report.txt").write_text(report.text())
        (out / "report.json").write_text(json.dumps(_jsonable(report.to_dict()), indent=2, sort_keys=True) + "\n")
        report.files += [str(out / "report.txt"), str(out / "report.json")]
    return report


def _backend_name():
    return "numba" if _kernels.numba_enabled() else "numpy"


