"""Planar constraint curves in tubular (Frenet) coordinates.

Every closed curve is stored as a truncated Fourier series in the
arc-length-proportional parameter ``tau = 2*pi*s/L``, so ``|c'(tau)|`` is the
constant ``L/(2*pi)`` and all derivatives are analytic.  User parametrizations
are resampled to this form at construction.

Sign conventions: the normal ``n`` is the tangent rotated by +90 degrees (it
points to the left), so a counterclockwise circle has ``kappa > 0`` and the
tubular volume element is ``1 - kappa*r``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "OutOfTube",
    "EmbeddingCurve",
    "TubularMetric",
    "CurvatureProfile",
    "metric_at",
    "curvature",
    "curvature_profile",
    "sphere_scalar_curvature",
    "curve_from_config",
]

TWO_PI = 2.0 * np.pi


class OutOfTube(ValueError):
    """Raised when a normal offset leaves the tubular neighbourhood."""


def _real_fft_coeffs(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cosine/sine coefficients of uniformly sampled periodic data."""
    m = samples.shape[-1]
    ft = np.fft.rfft(samples) / m
    kmax = (m - 1) // 2
    cos = 2.0 * ft.real[: kmax + 1]
    sin = -2.0 * ft.imag[: kmax + 1]
    cos[0] = ft.real[0]
    sin[0] = 0.0
    return cos, sin


def _trim(cos: np.ndarray, sin: np.ndarray, rtol: float = 1e-15) -> int:
    scale = max(np.max(np.abs(cos)), np.max(np.abs(sin)), 1e-300)
    big = np.nonzero((np.abs(cos) > rtol * scale) | (np.abs(sin) > rtol * scale))[0]
    return int(big[-1]) + 1 if big.size else 1


def _eval_series(cos, sin, t, deriv=0):
    """Evaluate sum_k cos_k cos(k t) + sin_k sin(k t) (or a derivative)."""
    t = np.asarray(t, dtype=float)
    k = np.arange(cos.size, dtype=float)
    kt = np.multiply.outer(t, k)
    c, s = np.cos(kt), np.sin(kt)
    kp = k**deriv
    # d^n/dt^n cycles through (cos, -sin, -cos, sin)
    phase = deriv % 4
    if phase == 0:
        out = c @ (kp * cos) + s @ (kp * sin)
    elif phase == 1:
        out = -s @ (kp * cos) + c @ (kp * sin)
    elif phase == 2:
        out = -c @ (kp * cos) - s @ (kp * sin)
    else:
        out = s @ (kp * cos) - c @ (kp * sin)
    return out


@dataclass(frozen=True)
class EmbeddingCurve:
    """A regular planar curve parametrized canonically by arc length.

    Closed curves carry Fourier coefficients of ``x(tau), y(tau)`` with
    ``tau = 2*pi*s/L``.  Open curves are straight segments (``kind='line'``);
    quantum problems on them use periodic identification of the ends.
    """

    kind: str
    period: float
    closed: bool
    xc: np.ndarray = field(repr=False)
    xs: np.ndarray = field(repr=False)
    yc: np.ndarray = field(repr=False)
    ys: np.ndarray = field(repr=False)
    # (t, s) pairs of the user parametrization, s(0) = 0, s(T) = L
    arc_length_table: tuple[np.ndarray, np.ndarray] = field(repr=False, default=None)
    params: dict = field(default_factory=dict)

    # ---- constructors -------------------------------------------------
    @classmethod
    def circle(cls, radius: float, center=(0.0, 0.0)) -> "EmbeddingCurve":
        if radius <= 0:
            raise ValueError("radius must be positive")
        xc = np.array([center[0], radius])
        yc = np.array([center[1], 0.0])
        xs = np.array([0.0, 0.0])
        ys = np.array([0.0, radius])
        t = np.linspace(0.0, TWO_PI, 65)
        return cls("circle", TWO_PI * radius, True, xc, xs, yc, ys,
                   (t, radius * t), {"radius": radius})

    @classmethod
    def ellipse(cls, a: float, b: float, n_samples: int = 2048) -> "EmbeddingCurve":
        """Ellipse ``(a cos t, b sin t)``; s = 0 sits at the point ``(a, 0)``."""
        if a <= 0 or b <= 0:
            raise ValueError("semi-axes must be positive")
        curve = cls.from_parametrization(
            lambda t: (a * np.cos(t), b * np.sin(t)), n_samples=n_samples)
        return cls("ellipse", curve.period, True, curve.xc, curve.xs, curve.yc,
                   curve.ys, curve.arc_length_table, {"a": a, "b": b})

    @classmethod
    def line(cls, length: float) -> "EmbeddingCurve":
        if length <= 0:
            raise ValueError("length must be positive")
        t = np.array([0.0, length])
        z = np.zeros(1)
        return cls("line", float(length), False, z, z, z, z, (t, t.copy()),
                   {"length": length})

    @classmethod
    def fourier(cls, xc, xs, yc, ys, n_samples: int = 2048) -> "EmbeddingCurve":
        """Closed curve from cosine/sine coefficient lists of x(t), y(t)."""
        cx, sx, cy, sy = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (xc, xs, yc, ys))
        n = max(cx.size, sx.size, cy.size, sy.size)
        cx, sx, cy, sy = (np.pad(v, (0, n - v.size)) for v in (cx, sx, cy, sy))

        def c(t):
            return _eval_series(cx, sx, t), _eval_series(cy, sy, t)

        curve = cls.from_parametrization(c, n_samples=n_samples)
        params = {"xc": cx.tolist(), "xs": sx.tolist(), "yc": cy.tolist(), "ys": sy.tolist()}
        return cls("fourier", curve.period, True, curve.xc, curve.xs, curve.yc,
                   curve.ys, curve.arc_length_table, params)

    @classmethod
    def from_parametrization(cls, func: Callable, period: float = TWO_PI,
                             n_samples: int = 2048, newton_iter: int = 50) -> "EmbeddingCurve":
        """Resample a closed parametrization ``func(t) -> (x, y)`` to arc length.

        ``func`` is assumed periodic with the given period and smooth; the
        arc-length integral and its inverse are evaluated spectrally.
        """
        m = int(n_samples)
        u = np.arange(m) * (TWO_PI / m)  # parameter rescaled to [0, 2pi)
        x, y = (np.asarray(v, dtype=float) for v in func(u * period / TWO_PI))
        cx, sx = _real_fft_coeffs(x)
        cy, sy = _real_fft_coeffs(y)
        # drop coefficients below rounding before the dense series evaluations
        nx, ny = _trim(cx, sx), _trim(cy, sy)
        cx, sx, cy, sy = cx[:nx], sx[:nx], cy[:ny], sy[:ny]
        speed = np.hypot(_eval_series(cx, sx, u, 1), _eval_series(cy, sy, u, 1))
        if np.min(speed) <= 1e-12 * np.max(speed):
            raise ValueError("parametrization is not regular (|c'| vanishes)")
        dc, ds_ = _real_fft_coeffs(speed)
        nd = _trim(dc, ds_)
        dc, ds_ = dc[:nd], ds_[:nd]
        k = np.arange(1, dc.size, dtype=float)
        length = TWO_PI * dc[0]

        def s_of_u(uu):
            # s(u) = d0 u + sum_k (dc_k sin(ku) + ds_k (1 - cos(ku))) / k
            ku = np.multiply.outer(uu, k)
            return dc[0] * uu + np.sin(ku) @ (dc[1:] / k) + (1.0 - np.cos(ku)) @ (ds_[1:] / k)

        def speed_of_u(uu):
            return _eval_series(dc, ds_, uu)

        target = np.arange(m) * (length / m)
        uu = target / dc[0]
        for _ in range(newton_iter):
            step = (s_of_u(uu) - target) / speed_of_u(uu)
            uu = uu - step
            if np.max(np.abs(step)) < 1e-14:
                break
        xr = _eval_series(cx, sx, uu)
        yr = _eval_series(cy, sy, uu)
        xc, xs = _real_fft_coeffs(xr)
        yc, ys = _real_fft_coeffs(yr)
        n = max(_trim(xc, xs), _trim(yc, ys))
        t_table = np.linspace(0.0, TWO_PI, 257)
        s_table = s_of_u(t_table)
        s_table[-1] = length
        return cls("parametrized", float(length), True, xc[:n], xs[:n], yc[:n], ys[:n],
                   (t_table * period / TWO_PI, s_table), {})

    # ---- pointwise geometry --------------------------------------------
    @property
    def L(self) -> float:
        return self.period

    def _tau(self, s):
        return np.asarray(s, dtype=float) * (TWO_PI / self.period)

    def _derivs(self, s, n):
        tau = self._tau(s)
        scale = (TWO_PI / self.period) ** n
        return (scale * _eval_series(self.xc, self.xs, tau, n),
                scale * _eval_series(self.yc, self.ys, tau, n))

    def position(self, s):
        if not self.closed:
            s = np.asarray(s, dtype=float)
            return np.stack([s, np.zeros_like(s)], axis=-1)
        x, y = self._derivs(s, 0)
        return np.stack([x, y], axis=-1)

    def tangent(self, s):
        if not self.closed:
            s = np.asarray(s, dtype=float)
            return np.stack([np.ones_like(s), np.zeros_like(s)], axis=-1)
        dx, dy = self._derivs(s, 1)
        norm = np.hypot(dx, dy)
        return np.stack([dx / norm, dy / norm], axis=-1)

    def normal(self, s):
        t = self.tangent(s)
        return np.stack([-t[..., 1], t[..., 0]], axis=-1)

    def curvature(self, s):
        """Signed curvature from analytic first and second derivatives."""
        if not self.closed:
            return np.zeros_like(np.asarray(s, dtype=float))
        dx, dy = self._derivs(s, 1)
        ddx, ddy = self._derivs(s, 2)
        return (dx * ddy - dy * ddx) / np.hypot(dx, dy) ** 3

    def curvature_derivative(self, s):
        """d kappa / ds, exploiting the constant speed of the canonical parameter."""
        if not self.closed:
            return np.zeros_like(np.asarray(s, dtype=float))
        dx, dy = self._derivs(s, 1)
        d3x, d3y = self._derivs(s, 3)
        return (dx * d3y - dy * d3x) / np.hypot(dx, dy) ** 3

    def embed(self, s, r):
        """Cartesian point ``c(s) + r n(s)``."""
        r = np.asarray(r, dtype=float)
        return self.position(s) + r[..., None] * self.normal(s)

    def max_abs_curvature(self, n: int = 4096) -> float:
        s = np.linspace(0.0, self.period, n, endpoint=False)
        return float(np.max(np.abs(self.curvature(s))))

    def tube_radius(self) -> float:
        """Largest |r| for which ``1 - kappa r`` stays positive on the whole curve."""
        cached = self.__dict__.get("_tube_radius")
        if cached is None:
            k = self.max_abs_curvature()
            cached = np.inf if k < 1e-14 else 1.0 / k
            # frozen dataclass: stash directly in the instance dict
            self.__dict__["_tube_radius"] = cached
        return cached

    def validity_bound(self, s):
        k = np.abs(self.curvature(s))
        with np.errstate(divide="ignore"):
            return np.where(k < 1e-14, np.inf, 1.0 / np.maximum(k, 1e-300))

    def total_turning(self, n: int = 1024) -> float:
        """Integral of kappa ds by the (spectrally accurate) periodic trapezoid rule."""
        if not self.closed:
            return 0.0
        s = np.arange(n) * (self.period / n)
        return float(np.sum(self.curvature(s)) * self.period / n)

    def rotated(self, angle: float) -> "EmbeddingCurve":
        """Rigidly rotated copy (a flat-space isometry)."""
        c, s = np.cos(angle), np.sin(angle)
        return EmbeddingCurve(
            self.kind, self.period, self.closed,
            c * self.xc - s * self.yc, c * self.xs - s * self.ys,
            s * self.xc + c * self.yc, s * self.xs + c * self.ys,
            self.arc_length_table, dict(self.params))


@dataclass(frozen=True)
class TubularMetric:
    g_ss: np.ndarray
    g_rr: np.ndarray
    sqrt_g: np.ndarray
    validity_bound: np.ndarray

    @property
    def g_sr(self):
        return np.zeros_like(self.g_ss)


@dataclass(frozen=True)
class CurvatureProfile:
    s: np.ndarray
    kappa: np.ndarray
    scalar_curvature: float | None = None


def metric_at(curve: EmbeddingCurve, s, r) -> TubularMetric:
    """Tubular metric ``g_ss = (1 - kappa r)^2``, ``g_rr = 1`` at (s, r)."""
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    kappa = curve.curvature(s)
    bound = curve.validity_bound(s)
    if np.any(np.abs(r) >= bound):
        raise OutOfTube(
            f"|r| = {np.max(np.abs(r)):.4g} reaches the tube bound {np.min(bound):.4g}; "
            "the r-grid is too wide for this lambda")
    j = 1.0 - kappa * r
    return TubularMetric(j**2, np.ones_like(j), j, np.broadcast_to(bound, j.shape))


def curvature(curve: EmbeddingCurve, s):
    return curve.curvature(s)


def curvature_profile(curve: EmbeddingCurve, n: int = 256) -> CurvatureProfile:
    s = np.arange(n) * (curve.period / n)
    return CurvatureProfile(s, curve.curvature(s))


def sphere_scalar_curvature(radius: float) -> float:
    """Scalar curvature ``R = 2/a^2`` of a round 2-sphere (Ricci scalar convention)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if np.isinf(radius):
        return 0.0
    return 2.0 / radius**2


def curve_from_config(cfg: dict) -> EmbeddingCurve:
    """Build a curve from the ``curve.*`` scenario keys."""
    kind = cfg.get("kind", "circle")
    if kind == "circle":
        return EmbeddingCurve.circle(float(cfg.get("radius", 1.0)))
    if kind == "ellipse":
        return EmbeddingCurve.ellipse(float(cfg["a"]), float(cfg["b"]))
    if kind == "line":
        return EmbeddingCurve.line(float(cfg.get("length", TWO_PI)))
    if kind == "fourier":
        return EmbeddingCurve.fourier(cfg.get("xc", [0.0]), cfg.get("xs", [0.0]),
                                      cfg.get("yc", [0.0]), cfg.get("ys", [0.0]))
    raise ValueError(f"unknown curve kind {kind!r}")
