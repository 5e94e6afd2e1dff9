"""Classical and semiclassical side of the constrained-motion problem.

1D wells, action integrals and WKB levels, symplectic trajectories of the
fast oscillator under a ramp of ``lam``, and trajectories of the full planar
problem near a curve integrated in Cartesian coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp, trapezoid
from scipy.optimize import brentq

from . import _kernels
from .geometry import EmbeddingCurve
from .potentials import ConfinementFamily
from .qsolve import DEFAULT_ORDER, Grid1D, build_laplace_beltrami, with_potential

__all__ = [
    "NoTurningPoints",
    "StepTooLarge",
    "RootFindFailure",
    "PolyWell",
    "HardWall",
    "ActionSample",
    "EnergyFunction",
    "Ramp",
    "WellHamiltonian",
    "CurveHamiltonian",
    "OrbitRecord",
    "DriftTable",
    "MatchResult",
    "GapReport",
    "action_of_energy",
    "orbit_period",
    "energy_of_action",
    "energy_function",
    "energy_scaling_exponent",
    "integrate",
    "step_map_jacobian",
    "measured_period",
    "adiabatic_invariance_experiment",
    "match_energy_at_action",
    "wkb_energy",
    "wkb_levels",
    "exact_energy",
    "gap_to_exact",
    "reduced_trajectory",
    "constrained_limit_convergence",
    "trajectory_deviation",
]

MIN_STEPS_PER_PERIOD = 50


class NoTurningPoints(ValueError):
    pass


class StepTooLarge(ValueError):
    pass


class RootFindFailure(RuntimeError):
    pass


# ---- 1D wells ------------------------------------------------------------

@dataclass(frozen=True)
class PolyWell:
    """``strength * (omega^2 r^2/2 + cubic r^3 + quartic r^4)``, scaled by lam when used."""

    omega: float = 1.0
    cubic: float = 0.0
    quartic: float = 0.0
    strength: float = 1.0

    def __post_init__(self):
        if self.omega < 0 or self.quartic < 0 or self.strength <= 0:
            raise ValueError("need omega >= 0, quartic >= 0 and strength > 0")
        if self.omega == 0 and self.quartic == 0:
            raise ValueError("well has no confining term")
        if self.cubic != 0 and (self.quartic == 0 or 9 * self.cubic**2 >= 16 * self.quartic * self.omega**2):
            raise ValueError("cubic term makes the well unbounded or double-welled")

    @property
    def om2(self) -> float:
        return self.strength * self.omega**2

    @property
    def b(self) -> float:
        return self.strength * self.cubic

    @property
    def c(self) -> float:
        return self.strength * self.quartic

    def v(self, r):
        r = np.asarray(r, dtype=float)
        return 0.5 * self.om2 * r**2 + self.b * r**3 + self.c * r**4

    def d2v(self, r):
        r = np.asarray(r, dtype=float)
        return self.om2 + 6 * self.b * r + 12 * self.c * r**2

    def turning_points(self, E, lam=1.0) -> tuple[float, float]:
        if E <= 0:
            raise NoTurningPoints(f"energy {E:g} is not above the well minimum")
        out = []
        for sign in (-1.0, 1.0):
            hi = 1.0
            while lam * self.v(sign * hi) < E:
                hi *= 2.0
                if hi > 1e12:
                    raise NoTurningPoints("potential does not confine at this energy")
            out.append(sign * brentq(lambda x: lam * self.v(sign * x) - E, 0.0, hi, xtol=1e-15, rtol=1e-15))
        return out[0], out[1]

    def scaled(self, factor: float) -> "PolyWell":
        return PolyWell(self.omega, self.cubic, self.quartic, self.strength * factor)


@dataclass(frozen=True)
class HardWall:
    """Infinite well of width ``width / lam`` centred at the origin."""

    width: float = 1.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("wall width must be positive")

    def turning_points(self, E, lam=1.0) -> tuple[float, float]:
        if E <= 0:
            raise NoTurningPoints(f"energy {E:g} is not above the well floor")
        half = 0.5 * self.width / lam
        return -half, half

    def scaled(self, factor: float) -> "HardWall":
        return HardWall(self.width * factor)


def _has_walls(pot) -> bool:
    return isinstance(pot, HardWall)


@dataclass
class ActionSample:
    E: float
    lam: float
    I: float
    turning_points: tuple[float, float]


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _orbit_quadrature(pot, E, lam, n):
    """Nodes on ``r = m + h sin(theta)``; both integrands are smooth in theta."""
    r_lo, r_hi = pot.turning_points(E, lam)
    x, w = _gauss_legendre(n)
    theta = 0.5 * np.pi * x
    m, h = 0.5 * (r_hi + r_lo), 0.5 * (r_hi - r_lo)
    r = m + h * np.sin(theta)
    kin = np.maximum(2.0 * (E - lam * pot.v(r)), 0.0)
    jac = 0.5 * np.pi * w * h * np.cos(theta)
    return r_lo, r_hi, kin, jac


def action_of_energy(pot, E, lam=1.0, n_quad=96) -> ActionSample:
    """``I = (1/pi) int sqrt(2 (E - lam v)) dr`` between the turning points."""
    if _has_walls(pot):
        lo, hi = pot.turning_points(E, lam)
        return ActionSample(float(E), float(lam), (hi - lo) * np.sqrt(2 * E) / np.pi, (lo, hi))
    lo, hi, kin, jac = _orbit_quadrature(pot, E, lam, n_quad)
    return ActionSample(float(E), float(lam), float(np.sum(np.sqrt(kin) * jac) / np.pi), (lo, hi))


def orbit_period(pot, E, lam=1.0, n_quad=96) -> float:
    """``T = 2 int dr / sqrt(2 (E - lam v))``, equal to ``2 pi dI/dE``."""
    if _has_walls(pot):
        lo, hi = pot.turning_points(E, lam)
        return 2 * (hi - lo) / np.sqrt(2 * E)
    x, w = _gauss_legendre(n_quad)
    theta = 0.5 * np.pi * x
    lo, hi = pot.turning_points(E, lam)
    m, h = 0.5 * (hi + lo), 0.5 * (hi - lo)
    r = m + h * np.sin(theta)
    cos = np.cos(theta)
    gap = E - lam * pot.v(r)
    # gap ~ cos^2 near both ends; divide analytically where it underflows
    ratio = np.where(gap > 0, cos / np.sqrt(np.maximum(2 * gap, 1e-300)), 0.0)
    return float(2 * np.sum(0.5 * np.pi * w * h * ratio))


def energy_of_action(pot, I, lam=1.0) -> float:
    if I <= 0:
        raise ValueError("action must be positive")
    if _has_walls(pot):
        d = pot.width / lam
        return float(np.pi**2 * I**2 / (2 * d**2))
    guess = I * np.sqrt(lam) * max(np.sqrt(pot.om2), 1e-3)
    lo, hi = guess, guess
    f = lambda e: action_of_energy(pot, e, lam).I - I  # noqa: E731
    while f(lo) > 0:
        lo *= 0.5
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise RootFindFailure("energy bracket for the action diverged")
    return float(brentq(f, lo, hi, xtol=1e-15, rtol=1e-15))


@dataclass
class EnergyFunction:
    """``eps(I) = c1 I + c2 I^2 + ...``, the unit-lam energy at action I."""

    coeffs: np.ndarray
    potential: object
    I_max: float
    fit_residual: float

    def epsilon(self, I):
        I = np.asarray(I, dtype=float)
        return sum(c * I ** (k + 1) for k, c in enumerate(self.coeffs))

    def energy(self, I, lam):
        """``E_lam(I) = lam^(1/2) eps(I)``."""
        return np.sqrt(lam) * self.epsilon(I)


def energy_function(pot, I_max=1.0, degree=4, n_samples=32) -> EnergyFunction:
    I = np.linspace(I_max / n_samples, I_max, n_samples)
    E = np.array([energy_of_action(pot, x) for x in I])
    X = np.stack([I ** (k + 1) for k in range(degree)], axis=1)
    coef, *_ = np.linalg.lstsq(X, E, rcond=None)
    res = float(np.max(np.abs(X @ coef - E)))
    return EnergyFunction(coef, pot, float(I_max), res)


def energy_scaling_exponent(pot, I, lams) -> float:
    """Log-log slope of ``E(I; lam)`` against lam at fixed action."""
    lams = np.asarray(lams, dtype=float)
    E = np.array([energy_of_action(pot, I, lam) for lam in lams])
    return float(np.polyfit(np.log(lams), np.log(E), 1)[0])


# ---- schedules, Hamiltonians and orbits ----------------------------------

@dataclass(frozen=True)
class Ramp:
    """``lam(t)``: quintic smoothstep from lam0 to lam1 over [start, start + duration]."""

    lam0: float
    lam1: float
    duration: float = 0.0
    start: float = 0.0

    @classmethod
    def static(cls, lam: float) -> "Ramp":
        return cls(float(lam), float(lam), 0.0, 0.0)

    @property
    def is_static(self) -> bool:
        return self.lam0 == self.lam1

    @property
    def lam_max(self) -> float:
        return max(self.lam0, self.lam1)

    def lam(self, t):
        t = np.asarray(t, dtype=float)
        if self.duration <= 0:
            return np.where(t > self.start, self.lam1, self.lam0)
        u = np.clip((t - self.start) / self.duration, 0.0, 1.0)
        return self.lam0 + (self.lam1 - self.lam0) * u**3 * (10 - 15 * u + 6 * u * u)

    def args(self):
        return float(self.lam0), float(self.lam1), float(self.start), float(self.duration)


@dataclass(frozen=True)
class WellHamiltonian:
    """``p^2/2 + lam(t) v(q)`` for a 1D polynomial well."""

    well: PolyWell
    schedule: Ramp

    def max_frequency(self, q0, p0) -> float:
        lam = self.schedule.lam_max
        e0 = np.max(0.5 * np.asarray(p0) ** 2 + self.schedule.lam0 * self.well.v(q0))
        amp = max(abs(x) for x in self.well.turning_points(max(e0, 1e-300), self.schedule.lam0))
        r = np.linspace(-amp, amp, 65)
        return float(np.sqrt(lam * np.max(np.abs(self.well.d2v(r)))))


@dataclass(frozen=True)
class CurveHamiltonian:
    """``|p|^2/2 + V(s) + lam(t) v(r; s)`` in the plane, (s, r) tubular coordinates of ``curve``."""

    curve: EmbeddingCurve
    family: ConfinementFamily
    schedule: Ramp
    v_slow: tuple = (0.0,)

    def __post_init__(self):
        if self.family.kind != "smooth":
            raise ValueError("classical trajectories need a smooth confinement family")
        object.__setattr__(self, "v_slow", tuple(float(x) for x in np.atleast_1d(self.v_slow)))

    def kernel_args(self):
        c = self.curve
        n = max(c.xc.size, c.xs.size, c.yc.size, c.ys.size)
        pad = lambda a: np.pad(np.asarray(a, dtype=float), (0, n - np.size(a)))  # noqa: E731
        geo = np.array([c.period, 1.0 if c.closed else 0.0])
        fam = self.family
        return (geo, pad(c.xc), pad(c.xs), pad(c.yc), pad(c.ys), np.array(fam.omega0),
                np.array(fam.cubic), np.array(fam.quartic), np.array(self.v_slow))

    def max_frequency(self, fast_energy) -> float:
        fam = self.family
        s = np.linspace(0.0, fam.period, 256, endpoint=False)
        lam = self.schedule.lam_max
        om = fam.omega(s)
        amp = np.sqrt(2 * np.max(fast_energy) / (self.schedule.lam0 * np.min(om) ** 2))
        curv = om**2 + 6 * np.abs(fam.b(s)) * amp + 12 * np.abs(fam.c(s)) * amp**2
        return float(np.sqrt(lam * np.max(curv)))


@dataclass
class OrbitRecord:
    """Sampled trajectories; array axes are (time, trajectory)."""

    t: np.ndarray
    s: np.ndarray
    r: np.ndarray
    p_s: np.ndarray
    p_r: np.ndarray
    energy: np.ndarray
    schedule: Ramp
    meta: dict = field(default_factory=dict)

    @property
    def relative_energy_drift(self) -> np.ndarray:
        e0 = self.energy[0]
        return np.max(np.abs(self.energy - e0), axis=0) / np.abs(e0)

    def lam(self):
        return self.schedule.lam(self.t)


def _steps(t_final, dt, omega_max, dt_check=True):
    period = 2 * np.pi / omega_max
    if dt_check and dt > period / MIN_STEPS_PER_PERIOD * (1 + 1e-12):
        raise StepTooLarge(
            f"dt={dt:.4g} exceeds 1/{MIN_STEPS_PER_PERIOD} of the fastest period {period:.4g}")
    n = max(1, int(np.ceil(t_final / dt - 1e-9)))
    return n, t_final / n


def integrate(ham, state0, t_final, dt, order=6, save_every=1) -> OrbitRecord:
    """Symplectic composition integration of ``ham`` from ``state0``.

    ``state0`` is ``(q, p)`` for a :class:`WellHamiltonian` and
    ``(s, r, p_s, p_r)`` for a :class:`CurveHamiltonian`; entries may be arrays
    (one trajectory each).  Raises :class:`StepTooLarge` unless ``dt`` resolves
    the fastest period by 50 steps.
    """
    kick, drift = _kernels.kick_drift(order)
    if isinstance(ham, WellHamiltonian):
        q0, p0 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in state0)
        n, dt = _steps(t_final, dt, ham.max_frequency(q0, p0))
        w = ham.well
        t, q, p, e = _kernels.poly_run(q0, p0, 0.0, dt, n, save_every, kick, drift, w.om2, w.b, w.c,
                                       *ham.schedule.args())
        zeros = np.zeros_like(q)
        return OrbitRecord(t, zeros, q, zeros.copy(), p, e, ham.schedule,
                           {"dt": dt, "order": order, "backend": _backend()})
    if isinstance(ham, CurveHamiltonian):
        s0, r0, ps0, pr0 = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in state0))
        lam0 = ham.schedule.lam0
        fast_e = 0.5 * pr0**2 + lam0 * ham.family.v(s0, r0)
        n, dt = _steps(t_final, dt, ham.max_frequency(fast_e))
        curve = ham.curve
        pos = curve.embed(s0, r0)
        tan, nor = curve.tangent(s0), curve.normal(s0)
        jac = 1.0 - curve.curvature(s0) * r0
        p = (ps0 / jac)[:, None] * tan + pr0[:, None] * nor
        tau0 = s0 * (2 * np.pi / curve.period)
        t, out = _kernels.curve_run(pos[:, 0].copy(), pos[:, 1].copy(), p[:, 0].copy(), p[:, 1].copy(),
                                    tau0, dt, n, save_every, kick, drift, *ham.kernel_args(),
                                    *ham.schedule.args())
        if np.min(out[5]) <= 0:
            raise ValueError("trajectory left the tubular neighbourhood (1 - kappa r <= 0)")
        return OrbitRecord(t, out[0], out[1], out[2], out[3], out[4], ham.schedule,
                           {"dt": dt, "order": order, "backend": _backend(),
                            "min_jacobian": float(np.min(out[5]))})
    raise TypeError(f"unsupported Hamiltonian {type(ham).__name__}")


def _backend() -> str:
    return "numba" if _kernels.numba_enabled() else "numpy"


def step_map_jacobian(ham, state, dt, order=6, eps=1e-5) -> np.ndarray:
    """Central finite-difference Jacobian of one integrator step (canonical coordinates)."""
    state = np.asarray(state, dtype=float)
    cols = []
    for i in range(state.size):
        dz = np.zeros_like(state)
        dz[i] = eps
        plus = integrate(ham, tuple(state + dz), dt, dt, order)
        minus = integrate(ham, tuple(state - dz), dt, dt, order)
        if isinstance(ham, WellHamiltonian):
            fp = np.array([plus.r[-1, 0], plus.p_r[-1, 0]])
            fm = np.array([minus.r[-1, 0], minus.p_r[-1, 0]])
        else:
            fp = np.array([plus.s[-1, 0], plus.r[-1, 0], plus.p_s[-1, 0], plus.p_r[-1, 0]])
            fm = np.array([minus.s[-1, 0], minus.r[-1, 0], minus.p_s[-1, 0], minus.p_r[-1, 0]])
        cols.append((fp - fm) / (2 * eps))
    return np.stack(cols, axis=1)


def measured_period(well: PolyWell, E, lam=1.0, steps_per_period=400, order=6) -> float:
    """Orbit period from integration: time between upward zero crossings."""
    guess = orbit_period(well, E, lam)
    ham = WellHamiltonian(well, Ramp.static(lam))
    p0 = np.sqrt(2 * E)  # v(0) = 0
    rec = integrate(ham, (0.0, p0), 1.5 * guess, guess / steps_per_period, order)
    q, p, t = rec.r[:, 0], rec.p_r[:, 0], rec.t
    idx = np.nonzero((q[:-1] < 0) & (q[1:] >= 0))[0]
    if idx.size == 0:
        raise RootFindFailure("no return to the start within 1.5 periods")
    i = idx[0]
    # cubic Hermite root of q on [t_i, t_i+1] using p = dq/dt
    h = t[i + 1] - t[i]
    coeffs = [2 * q[i] - 2 * q[i + 1] + h * p[i] + h * p[i + 1],
              -3 * q[i] + 3 * q[i + 1] - 2 * h * p[i] - h * p[i + 1], h * p[i], q[i]]
    roots = [x.real for x in np.roots(coeffs) if abs(x.imag) < 1e-9 and -1e-9 <= x.real <= 1 + 1e-9]
    return float(t[i] + h * min(roots, key=lambda x: abs(x - 0.5)))


# ---- adiabatic invariance -------------------------------------------------

@dataclass
class DriftTable:
    T: np.ndarray
    T_periods: np.ndarray
    drift: np.ndarray  # phase-averaged |I_f - I_i| / I_i
    energy_ratio: np.ndarray
    lam0: float
    lam1: float
    I0: float
    meta: dict = field(default_factory=dict)

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.drift) < 0))

    @property
    def decay_factors(self) -> np.ndarray:
        return self.drift[:-1] / self.drift[1:]


def adiabatic_invariance_experiment(well: PolyWell, T_list, lam0=1.0, lam1=4.0, I0=0.5, n_phases=8,
                                    dt_per_period=200, order=6, settle_periods=2.0, map_fn=map) -> DriftTable:
    """Relative action change through a smooth ramp ``lam0 -> lam1`` for each ramp time."""
    T_list = np.asarray(T_list, dtype=float)
    E0 = energy_of_action(well, I0, lam0)
    period0 = orbit_period(well, E0, lam0)
    fast = min(period0, orbit_period(well, energy_of_action(well, I0, lam1), lam1))
    dt = fast / dt_per_period
    # initial phases spread over one orbit of the static lam0 motion
    ham0 = WellHamiltonian(well, Ramp.static(lam0))
    seed = integrate(ham0, (0.0, np.sqrt(2 * E0)), period0, period0 / (n_phases * 64), order, save_every=64)
    q0, p0 = seed.r[:n_phases, 0], seed.p_r[:n_phases, 0]

    def one(T):
        ham = WellHamiltonian(well, Ramp(lam0, lam1, float(T)))
        t_end = T + settle_periods * fast
        rec = integrate(ham, (q0, p0), t_end, dt, order, save_every=max(1, int(t_end / dt) // 4))
        e_i, e_f = rec.energy[0], rec.energy[-1]
        I_f = np.array([action_of_energy(well, e, lam1).I for e in e_f])
        I_i = np.array([action_of_energy(well, e, lam0).I for e in e_i])
        return float(np.mean(np.abs(I_f - I_i) / I_i)), float(np.mean(e_f / e_i))

    drift, ratio = zip(*map_fn(one, T_list))
    return DriftTable(T_list, T_list / period0, np.array(drift), np.array(ratio), float(lam0),
                      float(lam1), float(I0), {"dt": dt, "order": order, "n_phases": n_phases,
                                               "period0": period0})


# ---- matching and WKB -------------------------------------------------------

@dataclass
class MatchResult:
    potential: object
    I0: float
    energy: float
    residuals: dict  # action -> E_A(I) - E_B(I)


def match_energy_at_action(well_a, well_b, I0, lam=1.0, probes=(0.5, 2.0)) -> MatchResult:
    """Rescale ``well_b`` (strength, or wall width) so both wells share E at action I0."""
    e_a = energy_of_action(well_a, I0, lam)
    if well_a == well_b:
        adjusted = well_b
    elif _has_walls(well_b):
        adjusted = HardWall(np.pi * I0 * lam / np.sqrt(2 * e_a))
    else:
        f = lambda k: energy_of_action(well_b.scaled(k), I0, lam) - e_a  # noqa: E731
        lo, hi = 1.0, 1.0
        while f(lo) > 0:
            lo *= 0.5
            if lo < 1e-12:
                raise RootFindFailure("cannot lower the energy of well_b enough")
        while f(hi) < 0:
            hi *= 2.0
            if hi > 1e12:
                raise RootFindFailure("cannot raise the energy of well_b enough")
        adjusted = well_b.scaled(brentq(f, lo, hi, xtol=1e-15, rtol=1e-15))
    res = {float(k * I0): energy_of_action(well_a, k * I0, lam) - energy_of_action(adjusted, k * I0, lam)
           for k in probes}
    return MatchResult(adjusted, float(I0), e_a, res)


def wkb_energy(pot, n: int, hbar=1.0, maslov=None, lam=1.0) -> float:
    """Solve ``I(E) = hbar (n + maslov)``; default maslov is 1/2 (smooth) or 1 (walls)."""
    if maslov is None:
        maslov = 1.0 if _has_walls(pot) else 0.5
    return energy_of_action(pot, hbar * (n + maslov), lam)


def wkb_levels(pot, n: int, hbar=1.0, lam=1.0) -> dict:
    """WKB energies per turning-point convention; wells with walls get both."""
    out = {"smooth": wkb_energy(pot, n, hbar, 0.5, lam)}
    if _has_walls(pot):
        out["hardwall"] = wkb_energy(pot, n, hbar, 1.0, lam)
    return out


def exact_energy(pot, n: int, hbar=1.0, lam=1.0, n_grid=1600, order=DEFAULT_ORDER,
                 decay=40.0) -> float:
    """Level ``n`` by dense banded diagonalization of the 1D Schrodinger operator."""
    if _has_walls(pot):
        half = 0.5 * pot.width / lam
        grid = Grid1D.dirichlet(-half, half, n_grid)
        op = build_laplace_beltrami(grid, None, hbar, order)
    else:
        # extend the box until the WKB decay exponent past the turning point exceeds `decay`
        e = wkb_energy(pot, n, hbar, lam=lam)
        _, r_t = pot.turning_points(e, lam)
        lo_t, _ = pot.turning_points(e, lam)
        R = 2 * max(r_t, -lo_t)
        while True:
            x = np.linspace(min(r_t, -lo_t), R, 400)
            kappa = np.sqrt(np.maximum(2 * (lam * np.minimum(pot.v(x), pot.v(-x)) - e), 0.0))
            if trapezoid(kappa, x) / hbar > decay:
                break
            R *= 1.25
        grid = Grid1D.dirichlet(-R, R, n_grid)
        op = with_potential(build_laplace_beltrami(grid, None, hbar, order), lam * pot.v(grid.points))
    return float(_banded_eigvals(op.symmetric(), n + 1)[n])


def _banded_eigvals(mat, k):
    mat = mat.tocoo()
    bw = int(np.max(np.abs(mat.row - mat.col)))
    n = mat.shape[0]
    ab = np.zeros((bw + 1, n))
    keep = mat.row >= mat.col
    ab[(mat.row - mat.col)[keep], mat.col[keep]] += mat.data[keep]
    return sla.eig_banded(ab, lower=True, eigvals_only=True, select="i", select_range=(0, k - 1))


@dataclass
class GapReport:
    n: int
    hbar: float
    exact: float
    wkb: dict
    gap: dict  # convention -> |E_exact - E_WKB|

    @property
    def primary(self) -> float:
        return self.gap["hardwall"] if "hardwall" in self.gap else self.gap["smooth"]


def gap_to_exact(pot, n: int, hbar=1.0, lam=1.0, n_grid=1600) -> GapReport:
    exact = exact_energy(pot, n, hbar, lam, n_grid)
    wkb = wkb_levels(pot, n, hbar, lam)
    return GapReport(n, float(hbar), exact, wkb, {k: abs(exact - v) for k, v in wkb.items()})


# ---- constrained dynamics ---------------------------------------------------

def reduced_trajectory(curve: EmbeddingCurve, v_slow, s0, v0, t):
    """Limit dynamics on the curve: ``s'' = -V'(s)`` for unit mass (tuned confinement)."""
    coef = np.atleast_1d(np.asarray(v_slow, dtype=float))
    k = np.arange(coef.size)
    scale = 2 * np.pi / curve.period

    def rhs(_, y):
        return [y[1], scale * np.sum(k * coef * np.sin(k * scale * y[0]))]

    t = np.asarray(t, dtype=float)
    sol = solve_ivp(rhs, (t[0], t[-1]), [s0, v0], method="DOP853", t_eval=t, rtol=1e-12, atol=1e-12)
    return sol.y[0]


@dataclass
class ConvergenceReport:
    lams: np.ndarray
    deviation: np.ndarray
    exponent: float
    meta: dict = field(default_factory=dict)


def _fast_momentum(family, s0, lam, I0=None, fast_energy=None):
    if fast_energy is None:
        fast_energy = I0 * family.omega(s0) * np.sqrt(lam)
    return np.sqrt(2 * fast_energy)


def constrained_limit_convergence(curve, family, lams, v_slow=(0.0, 1.0), s0=0.0, v0=1.0, I0=0.5,
                                  t_final=None, dt_per_period=200, order=6) -> ConvergenceReport:
    """Max slow-coordinate distance to the limit dynamics as lam grows, at fixed fast action."""
    lams = np.asarray(sorted(lams), dtype=float)
    t_final = curve.period / abs(v0) if t_final is None else t_final
    dev = []
    for lam in lams:
        ham = CurveHamiltonian(curve, family, Ramp.static(lam), v_slow)
        pr = _fast_momentum(family, s0, lam, I0=I0)
        dt = 2 * np.pi / ham.max_frequency(0.5 * pr**2) / dt_per_period
        rec = integrate(ham, (s0, 0.0, v0, pr), t_final, dt, order, save_every=10)
        ref = reduced_trajectory(curve, v_slow, s0, v0, rec.t)
        dev.append(float(np.max(np.abs(rec.s[:, 0] - ref))))
    dev = np.array(dev)
    slope = float(np.polyfit(np.log(lams), np.log(dev), 1)[0])
    return ConvergenceReport(lams, dev, slope, {"I0": I0, "t_final": t_final})


def trajectory_deviation(curve, family_a, family_b, lams, fast_energy=0.5, v_slow=(0.0,), s0=0.0,
                         v0=1.0, t_final=None, dt_per_period=200, order=6) -> ConvergenceReport:
    """Max |s_A(t) - s_B(t)| between two confinements from identical initial data.

    Both runs start on the curve with normal momentum ``sqrt(2 fast_energy)``
    (same fast energy for every lam) and tangential speed ``v0``.
    """
    lams = np.asarray(sorted(lams), dtype=float)
    t_final = curve.period / abs(v0) if t_final is None else t_final
    pr = _fast_momentum(family_a, s0, 1.0, fast_energy=fast_energy)
    dev = []
    for lam in lams:
        hams = [CurveHamiltonian(curve, fam, Ramp.static(lam), v_slow) for fam in (family_a, family_b)]
        dt = 2 * np.pi / max(h.max_frequency(fast_energy) for h in hams) / dt_per_period
        tracks = []
        for ham in hams:
            rec = integrate(ham, (s0, 0.0, v0, pr), t_final, dt, order, save_every=10)
            tracks.append(rec.s[:, 0])
        dev.append(float(np.max(np.abs(tracks[0] - tracks[1]))))
    dev = np.array(dev)
    with np.errstate(divide="ignore"):
        slope = float(np.polyfit(np.log(lams), np.log(dev), 1)[0]) if np.all(dev > 0) else float("nan")
    return ConvergenceReport(lams, dev, slope, {"fast_energy": fast_energy, "t_final": t_final})
