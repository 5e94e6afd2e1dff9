"""Lambda-scaled confining potential families around the constraint curve."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "HARDWALL_INF",
    "NonPositiveFrequency",
    "ConfinementFamily",
    "TuningReport",
    "evaluate",
    "tune_harmonic",
    "residual_shift",
    "ground_energy_flatness",
    "family_from_config",
]

# Sentinel for the exterior of a hard wall; grid builders turn it into a Dirichlet edge.
HARDWALL_INF = np.inf


class NonPositiveFrequency(ValueError):
    pass


def _cos_series(coeffs, s, period):
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    s = np.asarray(s, dtype=float)
    k = np.arange(coeffs.size)
    return np.cos(np.multiply.outer(s * (2 * np.pi / period), k)) @ coeffs


def _as_tuple(v, default=(0.0,)):
    if v is None:
        return tuple(default)
    return tuple(float(x) for x in np.atleast_1d(v))


@dataclass(frozen=True)
class ConfinementFamily:
    """``lam * v(r; s)`` with ``v = omega0(s)^2 r^2/2 + b(s) r^3 + c(s) r^4``,
    or an infinite well of width ``w(s)/lam`` centred on the curve.

    Coefficient functions are cosine series in ``2 pi s / period``.
    """

    kind: str = "smooth"
    period: float = 2 * np.pi
    omega0: tuple = (1.0,)
    cubic: tuple = (0.0,)
    quartic: tuple = (0.0,)
    wall_width: tuple = (1.0,)
    tuned: bool = False

    def __post_init__(self):
        if self.kind not in ("smooth", "hardwall"):
            raise ValueError(f"unknown confinement kind {self.kind!r}")
        for name in ("omega0", "cubic", "quartic", "wall_width"):
            object.__setattr__(self, name, _as_tuple(getattr(self, name)))

    def omega(self, s):
        return _cos_series(self.omega0, s, self.period)

    def b(self, s):
        return _cos_series(self.cubic, s, self.period)

    def c(self, s):
        return _cos_series(self.quartic, s, self.period)

    def width(self, s):
        return _cos_series(self.wall_width, s, self.period)

    @property
    def mean_omega(self) -> float:
        return self.omega0[0]

    @property
    def mean_width(self) -> float:
        return self.wall_width[0]

    def is_s_independent(self) -> bool:
        if self.kind == "hardwall":
            return all(x == 0 for x in self.wall_width[1:])
        return all(all(x == 0 for x in coeffs[1:]) for coeffs in (self.omega0, self.cubic, self.quartic))

    def v(self, s, r):
        """Unscaled smooth profile ``v(r; s)``."""
        r = np.asarray(r, dtype=float)
        return 0.5 * self.omega(s) ** 2 * r**2 + self.b(s) * r**3 + self.c(s) * r**4

    def evaluate(self, lam, s, r):
        return evaluate(self, lam, s, r)

    def half_width(self, lam, s):
        return 0.5 * self.width(s) / lam

    def ground_width(self, lam, hbar=1.0, s=None):
        """Standard deviation of the harmonic-order ground density."""
        if self.kind == "hardwall":
            w = self.mean_width if s is None else self.width(s)
            return np.sqrt(1.0 / 12.0 - 1.0 / (2 * np.pi**2)) * w / lam
        om = self.min_omega() if s is None else self.omega(s)
        return np.sqrt(hbar / (om * np.sqrt(lam)) / 2.0)

    def min_omega(self, n: int = 512) -> float:
        s = np.linspace(0.0, self.period, n, endpoint=False)
        return float(np.min(self.omega(s)))

    def reference_energy(self, lam, hbar=1.0) -> float:
        """Harmonic-order (or ideal-well) fast ground energy of the tuned family."""
        if self.kind == "hardwall":
            return np.pi**2 * hbar**2 * lam**2 / (2 * self.mean_width**2)
        return 0.5 * hbar * self.mean_omega * np.sqrt(lam)

    def gap_estimate(self, lam, hbar=1.0) -> float:
        if self.kind == "hardwall":
            return 3 * np.pi**2 * hbar**2 * lam**2 / (2 * self.mean_width**2)
        return hbar * self.mean_omega * np.sqrt(lam)

    def harmonic_part(self) -> "ConfinementFamily":
        """Same family with the anharmonic terms removed."""
        return replace(self, cubic=(0.0,), quartic=(0.0,))


def evaluate(family: ConfinementFamily, lam, s, r):
    """Confining potential at (s, r); hard-wall exteriors return :data:`HARDWALL_INF`."""
    r = np.asarray(r, dtype=float)
    if family.kind == "smooth":
        return lam * family.v(s, r)
    half = family.half_width(lam, s)
    return np.where(np.abs(r) > half * (1 + 1e-12), HARDWALL_INF, 0.0)


def tune_harmonic(family: ConfinementFamily, n_check: int = 2048) -> ConfinementFamily:
    """Make the harmonic-order fast ground energy independent of s.

    Smooth families get ``omega0(s) -> mean(omega0)``, which fixes
    ``hbar * omega * sqrt(lam) / 2`` for every lam; the cubic and quartic
    profiles are kept on purpose.  Hard walls get a constant width.
    """
    s = np.linspace(0.0, family.period, n_check, endpoint=False)
    if family.kind == "smooth":
        if np.any(family.omega(s) <= 0):
            raise NonPositiveFrequency("omega0(s) must stay positive")
        return replace(family, omega0=(family.omega0[0],), tuned=True)
    if np.any(family.width(s) <= 0):
        raise NonPositiveFrequency("wall width must stay positive")
    return replace(family, wall_width=(family.wall_width[0],), tuned=True)


def residual_shift(family: ConfinementFamily, s, hbar=1.0):
    """Lambda-independent O(hbar^2) ground-energy shift of the anharmonic terms.

    First order in the quartic term plus second order in the cubic term of a
    harmonic oscillator with frequency ``omega0(s) sqrt(lam)``.
    """
    if family.kind == "hardwall":
        return np.zeros_like(np.asarray(s, dtype=float))
    om = family.omega(s)
    return hbar**2 * (0.75 * family.c(s) / om**2 - 11.0 / 8.0 * family.b(s) ** 2 / om**4)


@dataclass
class TuningReport:
    lams: np.ndarray
    s: np.ndarray
    energies: np.ndarray  # (n_lam, n_s) fast ground energies
    max_EGR_deviation: np.ndarray  # per lam, max_s - min_s
    residual_quartic_shift: np.ndarray
    predicted_deviation: float
    meta: dict = field(default_factory=dict)

    @property
    def lam_independent(self) -> float:
        """Relative spread of the deviation across lam."""
        d = self.max_EGR_deviation
        scale = max(np.max(np.abs(d)), 1e-300)
        return float((np.max(d) - np.min(d)) / scale)


def ground_energy_flatness(family: ConfinementFamily, lams, curve, hbar=1.0, n_s=32,
                           n_r=96, full_metric=True) -> TuningReport:
    """Spread of the fast ground energy along the curve for each lam."""
    from .reduction import fast_ground_states

    if not family.tuned:
        raise ValueError("ground_energy_flatness expects a tuned family")
    lams = np.asarray(sorted(lams), dtype=float)
    s = np.arange(n_s) * (curve.period / n_s)
    energies = np.array([
        fast_ground_states(curve, family, lam, s, hbar, n_r=n_r, full_metric=full_metric).E_GR
        for lam in lams])
    dev = energies.max(axis=1) - energies.min(axis=1)
    shift = residual_shift(family, s, hbar)
    return TuningReport(lams, s, energies, dev, shift, float(np.ptp(shift)))


def family_from_config(cfg: dict, period: float) -> ConfinementFamily:
    """Build a family from ``confinement.*`` keys (cosine coefficient lists)."""
    return ConfinementFamily(
        kind=cfg.get("kind", "smooth"),
        period=period,
        omega0=cfg.get("omega0", (1.0,)),
        cubic=cfg.get("cubic", (0.0,)),
        quartic=cfg.get("quartic", (0.0,)),
        wall_width=cfg.get("wall_width", (1.0,)),
    )
