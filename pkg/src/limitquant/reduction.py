"""Born-Oppenheimer reduction onto the constraint curve.

Two independent routes to the effective potential ``V_eff(s)`` (reported as
the coefficient of hbar^2, reference measure ``ds``):

* coupling assembly: per-s fast ground states, their s-derivatives and the
  derivative-coupling integrals of the slow kinetic term;
* spectral extrapolation: full 2D eigenvalues fitted to a 1D operator
  ``-(hbar^2/2)(1+mu) d_s^2 + V + hbar^2 U`` and extrapolated in lam^-1/2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .geometry import EmbeddingCurve, OutOfTube
from .potentials import ConfinementFamily, residual_shift
from .qsolve import (DEFAULT_ORDER, Grid1D, build_direct_hamiltonian, build_full_hamiltonian,
                     build_laplace_beltrami, lowest_eigenpairs, slow_potential,
                     tubular_grid, with_potential)

log = logging.getLogger(__name__)

__all__ = [
    "GridTooNarrow",
    "InsufficientResolution",
    "ExtrapolationUnstable",
    "FastSolution",
    "FastBatch",
    "CouplingTerms",
    "EffectivePotentialEstimate",
    "r_half_width",
    "fast_ground_state",
    "fast_ground_states",
    "reference_fast_energy",
    "coupling_terms",
    "assemble_v_eff",
    "full_spectrum",
    "fit_band",
    "extrapolate",
    "extract_v_eff_spectral",
    "ambiguity_experiment",
    "compare_direct_quantizations",
    "adiabatic_decoupling_check",
    "cosine_basis",
    "slow_envelopes",
    "fit_curvature_law",
    "limit_spectrum",
    "CurvatureFit",
    "LimitSpectrumReport",
    "AmbiguityReport",
    "DirectComparison",
    "DecouplingReport",
]

WIDTHS_PER_SIDE = 6.0 * np.sqrt(2.0)
MIN_WIDTHS_PER_SIDE = 5.0
TUBE_FILL = 0.8


class GridTooNarrow(OutOfTube):
    """The tube cannot host the required r-extent at this lam."""


class InsufficientResolution(RuntimeError):
    pass


class ExtrapolationUnstable(RuntimeError):
    pass


def r_half_width(curve: EmbeddingCurve, family: ConfinementFamily, lam: float, hbar: float = 1.0) -> float:
    """Half-width of the r-grid: six oscillator lengths ``sqrt(hbar/(omega sqrt(lam)))`` per side.

    That is about 8.5 ground-state widths (std of |psi|^2).  Capped at 0.8 of
    the tube radius; if the cap leaves fewer than five widths per side (ten in
    total) the grid is refused.
    """
    if family.kind == "hardwall":
        half = float(np.max(family.half_width(lam, np.linspace(0, curve.period, 256))))
        if half >= TUBE_FILL * curve.tube_radius():
            raise GridTooNarrow(f"hard wall half-width {half:.4g} exceeds 0.8 tube radius")
        return half
    sigma = family.ground_width(lam, hbar)
    want = WIDTHS_PER_SIDE * sigma
    cap = TUBE_FILL * curve.tube_radius()
    if want <= cap:
        return want
    if cap >= MIN_WIDTHS_PER_SIDE * sigma:
        return cap
    raise GridTooNarrow(
        f"lam={lam:g}: tube cap {cap:.4g} holds only {cap / sigma:.2f} ground-state widths per side "
        f"(need {MIN_WIDTHS_PER_SIDE:g})")


@dataclass
class FastSolution:
    s: float
    lam: float
    E_GR: float
    E_1: float
    psi: np.ndarray
    r: np.ndarray
    weights: np.ndarray  # sqrt(g) h on the r-grid

    @property
    def gap(self) -> float:
        return self.E_1 - self.E_GR


@dataclass
class FastBatch:
    """Fast solutions on a common computational grid ``u = r / R(s)``."""

    s: np.ndarray
    lam: float
    E_GR: np.ndarray
    E_1: np.ndarray
    psi: np.ndarray  # (n_s, n_r), normalized with sqrt(g) dr
    psi1: np.ndarray
    u: np.ndarray  # nodes in [-1, 1]
    R: np.ndarray  # half-width per s
    J: np.ndarray  # (n_s, n_r) volume element at the nodes
    order: int = DEFAULT_ORDER

    @property
    def gap(self) -> np.ndarray:
        return self.E_1 - self.E_GR

    @property
    def h(self) -> np.ndarray:
        return self.R * (self.u[1] - self.u[0])

    @property
    def r(self) -> np.ndarray:
        return self.R[:, None] * self.u[None, :]


def _fast_operator(curve, family, lam, s, hbar, grid, full_metric, order):
    kappa = float(curve.curvature(s)) if full_metric else 0.0

    def metric(r):
        j = 1.0 - kappa * r
        return np.ones_like(j), j

    op = build_laplace_beltrami(grid, metric, hbar, order)
    if family.kind == "smooth":
        op = with_potential(op, family.evaluate(lam, s, grid.points))
    return op


def _fast_grid(curve, family, lam, s, hbar, n_r, half_width):
    if family.kind == "hardwall":
        half = float(family.half_width(lam, s))
    else:
        half = r_half_width(curve, family, lam, hbar) if half_width is None else half_width
    return Grid1D.dirichlet(-half, half, n_r), half


def _solve_two(op):
    a = op.symmetric().toarray()
    vals, vecs = sla.eigh(a, subset_by_index=(0, 1))
    vecs = vecs / np.sqrt(op.weights)[:, None]
    for c in range(2):
        # ground state positive; first excited state positive on the r > 0 side
        ref = np.sum(vecs[:, c]) if c == 0 else np.sum(vecs[:, c] * np.sign(op.grid.points))
        if ref < 0:
            vecs[:, c] *= -1
    return vals, vecs


def fast_ground_state(curve, family, lam, s, hbar=1.0, n_r=96, half_width=None,
                      full_metric=True, order=DEFAULT_ORDER) -> FastSolution:
    """Ground and first excited state of the r-problem with the metric frozen at s."""
    grid, _ = _fast_grid(curve, family, lam, s, hbar, n_r, half_width)
    op = _fast_operator(curve, family, lam, s, hbar, grid, full_metric, order)
    vals, vecs = _solve_two(op)
    return FastSolution(float(s), float(lam), float(vals[0]), float(vals[1]), vecs[:, 0],
                        grid.points, op.weights)


def fast_ground_states(curve, family, lam, s, hbar=1.0, n_r=96, half_width=None,
                       full_metric=True, order=DEFAULT_ORDER) -> FastBatch:
    s = np.atleast_1d(np.asarray(s, dtype=float))
    n = s.size
    e0, e1 = np.empty(n), np.empty(n)
    psi, psi1, J = (np.empty((n, n_r)) for _ in range(3))
    R = np.empty(n)
    u = None
    if half_width is None and family.kind == "smooth":
        half_width = r_half_width(curve, family, lam, hbar)
    for i, si in enumerate(s):
        grid, half = _fast_grid(curve, family, lam, si, hbar, n_r, half_width)
        op = _fast_operator(curve, family, lam, si, hbar, grid, full_metric, order)
        vals, vecs = _solve_two(op)
        e0[i], e1[i] = vals
        psi[i], psi1[i] = vecs[:, 0], vecs[:, 1]
        J[i] = op.weights / grid.spacing
        R[i] = half
        if u is None:
            u = grid.points / half
    return FastBatch(s, float(lam), e0, e1, psi, psi1, u, R, J, order)


def reference_fast_energy(curve, family, lam, hbar=1.0, n_r=96, order=DEFAULT_ORDER) -> float:
    """Discrete counterpart of the tuned harmonic-order ground energy.

    Flat metric, anharmonic terms dropped, same r-grid as the full problem, so
    the leading discretization error cancels on subtraction.
    """
    if family.kind == "hardwall":
        w = family.mean_width
        grid = Grid1D.dirichlet(-0.5 * w / lam, 0.5 * w / lam, n_r)
        op = build_laplace_beltrami(grid, None, hbar, order)
        return float(_solve_two(op)[0][0])
    half = r_half_width(curve, family, lam, hbar)
    grid = Grid1D.dirichlet(-half, half, n_r)
    om = family.mean_omega
    op = with_potential(build_laplace_beltrami(grid, None, hbar, order), 0.5 * lam * om**2 * grid.points**2)
    return float(_solve_two(op)[0][0])


def _spectral_ds(values, period, axis=0):
    n = values.shape[axis]
    k = np.fft.fftfreq(n, d=period / n) * 2 * np.pi
    if n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    return np.real(np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(values, axis=axis), axis=axis))


def _dr_nodes(psi, h):
    """4th-order central d/dr on Dirichlet nodes (zero walls, odd ghosts)."""
    p = np.pad(psi, ((0, 0), (2, 2)))
    p[:, 0] = -psi[:, 0]
    p[:, -1] = -psi[:, -1]
    d = (p[:, :-4] - 8 * p[:, 1:-3] + 8 * p[:, 3:-1] - p[:, 4:]) / 12.0
    return d / h[:, None]


def _ds_at_fixed_r(batch: FastBatch, period):
    """d psi / ds at fixed r on the moving grid r = u R(s)."""
    dpsi = _spectral_ds(batch.psi, period)
    if np.ptp(batch.R) > 0:
        dR = _spectral_ds(batch.R, period)
        dpsi = dpsi - (batch.u[None, :] * dR[:, None]) * _dr_nodes(batch.psi, batch.h)
    return dpsi


@dataclass
class CouplingTerms:
    """O(hbar^2) channels of the reduced potential (coefficients of hbar^2).

    ``fast``: anharmonic shift of the fast ground energy (flat metric).
    ``mixed``: the part of the fast ground energy from the r-derivatives acting
    on the metric; tubular coordinates are orthogonal, so no d_s d_r cross term
    exists and this is the whole mixed contribution.
    ``f``: both slow derivatives on the fast state, ``<d_s psi|d_s psi>/2``.
    ``h``: hermitized single slow derivative, ``-(1/2) d_s <psi|d_s psi>``.
    ``kinetic``: slow mass factor ``<1/J^2>`` (tends to 1).
    """

    s: np.ndarray
    lam: float
    hbar: float
    fast: np.ndarray
    mixed: np.ndarray
    f: np.ndarray
    h: np.ndarray
    kinetic: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.fast + self.mixed + self.f + self.h


def coupling_terms(curve, family, lam, hbar=1.0, n_s=64, n_r=96, order=DEFAULT_ORDER,
                   check_tol=1e-4) -> CouplingTerms:
    """Assemble every O(hbar^2) contribution of the slow kinetic term on a periodic s-grid."""
    s = np.arange(n_s) * (curve.period / n_s)
    full = fast_ground_states(curve, family, lam, s, hbar, n_r=n_r, order=order)
    flat = fast_ground_states(curve, family, lam, s, hbar, n_r=n_r, full_metric=False, order=order)
    e_ref = reference_fast_energy(curve, family, lam, hbar, n_r, order)
    dpsi = _ds_at_fixed_r(full, curve.period)
    h = full.h[:, None]
    inv_j = 1.0 / full.J
    A = np.sum(full.psi**2 * inv_j * h, axis=1)
    B = np.sum(full.psi * dpsi * inv_j * h, axis=1)
    C = np.sum(dpsi**2 * inv_j * h, axis=1)
    dB = _spectral_ds(B, curve.period)
    if n_s >= 16 and n_s % 2 == 0:
        half = _spectral_ds(full.psi[::2], curve.period)
        C_half = np.sum(half**2 * inv_j[::2] * h[::2], axis=1)
        err = np.max(np.abs(C_half - C[::2]))
        if err > check_tol * max(1.0, np.max(np.abs(C))):
            raise InsufficientResolution(
                f"d_s psi changes by {err:.3g} between n_s={n_s} and n_s={n_s // 2}")
    hb2 = hbar**2
    return CouplingTerms(s, float(lam), hbar, (flat.E_GR - e_ref) / hb2,
                         (full.E_GR - flat.E_GR) / hb2, 0.5 * C, -0.5 * dB, A)


def cosine_basis(s, period, n_terms):
    return np.cos(np.multiply.outer(np.asarray(s) * (2 * np.pi / period), np.arange(n_terms)))


def _project_cos(values, s, period, n_terms):
    basis = cosine_basis(s, period, n_terms)
    coef, *_ = np.linalg.lstsq(basis, values, rcond=None)
    return coef


@dataclass
class EffectivePotentialEstimate:
    s: np.ndarray
    v_eff: np.ndarray  # coefficient of hbar^2
    uncertainty: np.ndarray
    method: str
    hbar: float
    coeffs: np.ndarray
    coeff_uncertainty: np.ndarray
    period: float
    lams: np.ndarray
    per_lam: np.ndarray  # (n_lam, n_terms) coefficients before extrapolation
    residuals: np.ndarray  # fit residual (rms) per lam
    meta: dict = field(default_factory=dict)

    def __call__(self, s):
        return cosine_basis(s, self.period, self.coeffs.size) @ self.coeffs

    def energy(self, s=None):
        """Potential energy ``hbar^2 V_eff``."""
        return self.hbar**2 * (self.v_eff if s is None else self(s))


def extrapolate(lams, values, model=("inv_sqrt", "inv")):
    """Extrapolate ``x(lam) = x_inf + a lam^-1/2 + b lam^-1`` to lam -> inf.

    Returns ``(x_inf, uncertainty, correction_at_largest_lam)``.  The
    uncertainty is the shift of ``x_inf`` between the full fit and a fit of
    ``x_inf + a lam^-1/2`` to the two largest lam.
    """
    lams = np.asarray(lams, dtype=float)
    values = np.asarray(values, dtype=float)
    t = lams ** -0.5
    cols = [np.ones_like(t), t] + ([t**2] if "inv" in model else [])
    X = np.stack(cols[: min(len(cols), lams.size)], axis=1)
    coef, *_ = np.linalg.lstsq(X, values, rcond=None)
    x_inf = coef[0]
    X2 = np.stack([np.ones(2), t[-2:]], axis=1)
    coef2 = np.linalg.solve(X2, values[-2:])
    unc = np.abs(x_inf - coef2[0])
    resid = values - X @ coef
    if lams.size > X.shape[1]:
        unc = unc + np.sqrt(np.sum(resid**2, axis=0) / (lams.size - X.shape[1]))
    corr = values[-1] - x_inf
    return x_inf, unc, corr


def assemble_v_eff(curve, family, lams, hbar=1.0, n_s=64, n_r=96, n_terms=8,
                   order=DEFAULT_ORDER, map_fn=map) -> EffectivePotentialEstimate:
    """Coupling-assembly V_eff, extrapolated in lam^-1/2 from the given lam values.

    ``map_fn`` maps the per-lam work (e.g. an executor's ``map``); it must keep order.
    """
    lams = np.asarray(sorted(lams), dtype=float)
    terms = list(map_fn(lambda lam: coupling_terms(curve, family, lam, hbar, n_s, n_r, order), lams))
    s = terms[0].s
    per_lam = np.array([_project_cos(t.total, s, curve.period, n_terms) for t in terms])
    fit_res = np.array([np.sqrt(np.mean((cosine_basis(s, curve.period, n_terms) @ c - t.total) ** 2))
                        for c, t in zip(per_lam, terms)])
    return _finish_estimate(curve, lams, per_lam, fit_res, hbar, "coupling-assembly",
                            {"terms": terms, "n_s": n_s, "n_r": n_r})


def _finish_estimate(curve, lams, per_lam, fit_res, hbar, method, meta, s_out=None):
    period = curve.period
    n_terms = per_lam.shape[1]
    if lams.size >= 2:
        coeffs, unc, corr = extrapolate(lams, per_lam)
        if np.any(unc > 3 * (np.abs(corr) + fit_res[-1]) + 1e-9):
            raise ExtrapolationUnstable(
                f"{method}: extrapolated coefficients move by {np.max(unc):.3g} between fit windows")
    else:
        coeffs, unc, corr = per_lam[0], np.zeros(n_terms), np.zeros(n_terms)
    s_out = np.arange(128) * (period / 128) if s_out is None else s_out
    basis = cosine_basis(s_out, period, n_terms)
    v = basis @ coeffs
    u = np.sqrt((basis**2) @ (unc**2)) + fit_res[-1] * (lams.size < 2)
    meta = dict(meta, correction=corr)
    return EffectivePotentialEstimate(s_out, v, u, method, hbar, coeffs, unc, period, lams, per_lam,
                                      fit_res, meta)


# ---- full 2D spectra and the spectral route --------------------------------

def full_spectrum(curve, family, lam, v_slow=None, hbar=1.0, n_s=128, n_r=64, k=12, seed=0,
                  tol=1e-9, order=DEFAULT_ORDER):
    """Lowest ``k`` eigenpairs of the full 2D problem.

    Returns ``(EigenResult, e_ref, grid, columns)`` where ``columns`` holds the
    fast ground states on the r-columns of the grid.  The shift-invert target
    sits below ``min_s (E_GR(s) + V(s))`` over those columns, a lower bound
    for the 2D ground energy.
    """
    if family.kind == "hardwall" and not family.is_s_independent():
        raise ValueError("2D hard-wall problems need a tuned (constant-width) family")
    half = r_half_width(curve, family, lam, hbar)
    grid = tubular_grid(curve, n_s, n_r, half)
    op = build_full_hamiltonian(grid, curve, family, lam, v_slow, hbar, order)
    cols = fast_ground_states(curve, family, lam, grid.s_grid.points, hbar, n_r=n_r,
                              half_width=half, order=order)
    vs = slow_potential(v_slow, curve.period)(grid.s_grid.points)
    floor = float(np.min(cols.E_GR + vs))
    sigma = floor - 0.25 * hbar**2 * (2 * np.pi / curve.period) ** 2
    res = lowest_eigenpairs(op, k, tol=tol, seed=seed, sigma=sigma)
    e_ref = reference_fast_energy(curve, family, lam, hbar, n_r, order)
    return res, e_ref, grid, cols


def slow_envelopes(result, cols) -> np.ndarray:
    """Project 2D eigenvectors on the fast ground state: ``phi_j(s) = <chi_0(s)|Psi_j(s, .)>``."""
    n_s, n_r = cols.psi.shape
    vecs = result.eigenvectors.reshape(n_s, n_r, -1)
    w = cols.J * cols.h[:, None]
    return np.einsum("srj,sr->sj", vecs, cols.psi * w)


def fit_band(levels, envelopes, period, v_slow=None, hbar=1.0, n_terms=8, fit_mass=True,
             order=DEFAULT_ORDER):
    """Fit a band to ``-(hbar^2/2)(1+mu) d_s^2 + V + hbar^2 U`` on the slow grid.

    ``U`` is a cosine series in ``2 pi s / period``.  The unknowns enter the
    eigen-equation residuals ``(H - E_j) phi_j`` linearly, so the fit is a
    linear least-squares problem over all supplied levels.  Returns
    ``(U_coeffs, mu, rms)`` with ``rms`` the misfit between ``levels`` and the
    eigenvalues of the fitted operator.
    """
    levels = np.asarray(levels, dtype=float)
    phi = np.asarray(envelopes, dtype=float)
    n_s = phi.shape[0]
    grid, kin = _reduced_operator(period, n_s, hbar, order)
    T = kin.matrix().toarray()
    V = slow_potential(v_slow, period)(grid.points)
    basis = cosine_basis(grid.points, period, n_terms)
    Tphi = T @ phi
    rhs = (levels[None, :] * phi - Tphi - V[:, None] * phi).T.ravel()
    cols = [(hbar**2 * basis[:, m, None] * phi).T.ravel() for m in range(n_terms)]
    if fit_mass:
        cols.append(Tphi.T.ravel())
    A = np.stack(cols, axis=1)
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    U = sol[:n_terms]
    mu = float(sol[n_terms]) if fit_mass else 0.0
    H = (1 + mu) * 0.5 * (T + T.T) + np.diag(V + hbar**2 * (basis @ U))
    model = sla.eigh(H, eigvals_only=True, subset_by_index=(0, levels.size - 1))
    rms = float(np.sqrt(np.mean((model - levels) ** 2)))
    return U, mu, rms


def _reduced_operator(period, n_s, hbar, order):
    grid = Grid1D.periodic(period, n_s)
    kin = build_laplace_beltrami(grid, None, hbar, order)
    return grid, kin


def extract_v_eff_spectral(curve, family, lams, hbar=1.0, k=12, v_slow=None, n_s=128, n_r=64,
                           n_terms=8, seed=0, order=DEFAULT_ORDER, fit_mass=True,
                           return_spectra=False, map_fn=map):
    """Spectral-extrapolation V_eff from full 2D eigenpairs at several lam."""
    lams = np.asarray(sorted(lams), dtype=float)
    if lams.size < 3 or lams[-1] / lams[0] < 99.999:
        raise ValueError("need at least 3 lam values spanning 2 decades")

    def one(lam):
        res, e_ref, _, cols = full_spectrum(curve, family, lam, v_slow, hbar, n_s, n_r, k, seed,
                                            order=order)
        band = res.eigenvalues - e_ref
        coeffs, mu, r = fit_band(band, slow_envelopes(res, cols), curve.period, v_slow, hbar,
                                 n_terms, fit_mass, order)
        return coeffs, mu, r, band

    per_lam, masses, rms, spectra = (list(x) for x in zip(*map_fn(one, lams)))
    per_lam = np.array(per_lam)
    est = _finish_estimate(curve, lams, per_lam, np.array(rms) / hbar**2, hbar, "spectral-extrapolation",
                           {"mass_correction": np.array(masses), "n_s": n_s, "n_r": n_r, "k": k,
                            "band": np.array(spectra)})
    if return_spectra:
        return est, np.array(spectra)
    return est


# ---- curvature law ---------------------------------------------------------

@dataclass
class CurvatureFit:
    """Least-squares fit ``V_eff ~ c kappa^2 (+ offset)``."""

    c: float
    offset: float
    residual: float  # max |V_eff - fit| over the samples
    relative_residual: float  # residual / range of V_eff (or / |mean| when V_eff is flat)
    flat: bool


def fit_curvature_law(estimate: EffectivePotentialEstimate, curve: EmbeddingCurve,
                      offset: bool = False) -> CurvatureFit:
    """Fit the estimate to ``c kappa(s)^2``, optionally plus a constant.

    ``kappa^2`` is first projected on the estimate's own cosine basis, so the
    residual measures the deviation from the law and not the series truncation.
    """
    fine = np.arange(1024) * (curve.period / 1024)
    k2_coef = _project_cos(curve.curvature(fine) ** 2, fine, curve.period, estimate.coeffs.size)
    k2 = cosine_basis(estimate.s, curve.period, estimate.coeffs.size) @ k2_coef
    v = estimate.v_eff
    cols = [k2] + ([np.ones_like(k2)] if offset else [])
    coef, *_ = np.linalg.lstsq(np.stack(cols, axis=1), v, rcond=None)
    fit = np.stack(cols, axis=1) @ coef
    resid = float(np.max(np.abs(v - fit)))
    spread = float(np.ptp(v))
    flat = spread <= 2 * float(np.max(estimate.uncertainty)) + 1e-12
    scale = max(abs(float(np.mean(v))), 1e-300) if flat else spread
    return CurvatureFit(float(coef[0]), float(coef[1]) if offset else 0.0, resid, resid / scale, flat)


# ---- limit spectrum against direct quantization ----------------------------

@dataclass
class LimitSpectrumReport:
    lams: np.ndarray
    spacings: np.ndarray  # (n_lam, n_levels): E_j - E_0 of the slow band
    direct_spacings: np.ndarray
    extrapolated: np.ndarray
    extrapolation_uncertainty: np.ndarray
    error: np.ndarray  # |extrapolated - direct|
    exponents: np.ndarray  # per level, slope of log|spacing - direct| vs log lam
    exponent: float  # pooled slope over all levels
    spectra: np.ndarray  # (n_lam, k): eigenvalues minus the reference fast energy
    meta: dict = field(default_factory=dict)


def limit_spectrum(curve, family, lams, hbar=1.0, k=5, v_slow=None, n_s=128, n_r=64, seed=0,
                   n_direct=512, order=DEFAULT_ORDER, map_fn=map) -> LimitSpectrumReport:
    """Slow-band spacings of the full 2D problem against the direct quantization on the curve."""
    lams = np.asarray(sorted(lams), dtype=float)

    def one(lam):
        res, e_ref, _, _ = full_spectrum(curve, family, lam, v_slow, hbar, n_s, n_r, k, seed, order=order)
        return res.eigenvalues - e_ref

    spectra = np.array(list(map_fn(one, lams)))
    spacings = spectra[:, 1:] - spectra[:, :1]
    direct = lowest_eigenpairs(build_direct_hamiltonian(curve, v_slow, 0.0, hbar, n_direct, order), k,
                               seed=seed).eigenvalues
    d_sp = direct[1:] - direct[0]
    x_inf, unc, _ = extrapolate(lams, spacings)
    dev = np.abs(spacings - d_sp[None, :])
    logl = np.log(lams)
    exps = np.array([np.polyfit(logl, np.log(dev[:, j]), 1)[0] for j in range(dev.shape[1])])
    # common slope with one intercept per level
    y = np.log(dev) - np.log(dev).mean(axis=0)
    x = logl - logl.mean()
    pooled = float(np.sum(x[:, None] * y) / (np.sum(x**2) * y.shape[1]))
    return LimitSpectrumReport(lams, spacings, d_sp, x_inf, unc, np.abs(x_inf - d_sp), exps, pooled,
                               spectra, {"n_s": n_s, "n_r": n_r, "k": k, "hbar": hbar})


# ---- ambiguity: two confinements with the same classical limit -------------

@dataclass
class AmbiguityReport:
    s: np.ndarray
    v_a: EffectivePotentialEstimate
    v_b: EffectivePotentialEstimate
    difference: np.ndarray  # V_eff^B - V_eff^A (coefficient of hbar^2)
    uncertainty: np.ndarray
    predicted: np.ndarray  # perturbative anharmonic shift difference
    relative_error: float  # max |difference - predicted| / max |predicted|
    classical: object = None  # ConvergenceReport of the trajectory deviation, if computed

    @property
    def classical_ratio(self) -> float:
        """Deviation at the smallest lam over deviation at the largest."""
        if self.classical is None:
            return float("nan")
        d = self.classical.deviation
        return float(d[0] / d[-1]) if d[-1] > 0 else float("inf")


def ambiguity_experiment(curve, family_a, family_b, lams, hbar=1.0, method="coupling-assembly",
                         classical_lams=(1e2, 1e3, 1e4), fast_energy=0.5, v_slow=None, n_s=64,
                         n_r=96, n_terms=8, k=12, order=DEFAULT_ORDER) -> AmbiguityReport:
    """V_eff of two harmonic-order tuned confinements and their classical agreement.

    ``classical_lams=None`` skips the trajectory comparison.
    """
    for fam in (family_a, family_b):
        if fam.kind == "smooth" and any(x != 0 for x in fam.omega0[1:]):
            raise ValueError("both families must be tuned at harmonic order")
    if family_a.kind != family_b.kind or family_a.mean_omega != family_b.mean_omega:
        raise ValueError("families must share the confinement kind and mean frequency")

    def estimate(fam):
        if method == "coupling-assembly":
            return assemble_v_eff(curve, fam, lams, hbar, n_s, n_r, n_terms, order)
        if method == "spectral-extrapolation":
            return extract_v_eff_spectral(curve, fam, lams, hbar, k, v_slow, n_terms=n_terms, order=order)
        raise ValueError(f"unknown method {method!r}")

    v_a = estimate(family_a)
    v_b = v_a if family_b == family_a else estimate(family_b)
    s = v_a.s
    diff = v_b.v_eff - v_a.v_eff
    unc = np.hypot(v_a.uncertainty, v_b.uncertainty) if v_b is not v_a else np.zeros_like(diff)
    pred = (residual_shift(family_b, s, hbar) - residual_shift(family_a, s, hbar)) / hbar**2
    scale = float(np.max(np.abs(pred)))
    err = float(np.max(np.abs(diff - pred)))
    rel = err / scale if scale > 0 else err
    classical = None
    if classical_lams is not None and family_a.kind == "smooth":
        from .classical import trajectory_deviation

        vs = (0.0,) if v_slow is None or callable(v_slow) else v_slow
        classical = trajectory_deviation(curve, family_a, family_b, classical_lams, fast_energy, vs)
    return AmbiguityReport(s, v_a, v_b, diff, unc, pred, rel, classical)


# ---- direct quantizations ----------------------------------------------------

@dataclass
class DirectComparison:
    alphas: tuple
    direct: dict  # alpha -> lowest eigenvalues
    limit: np.ndarray | None  # spectrum of the reduced operator with V_eff
    shifts: dict  # alpha -> mean(limit - direct), or pairwise shifts on the sphere
    spacing_error: dict  # alpha -> max |limit spacing - direct spacing|
    tolerance: float
    matching: list
    curvature_fit: CurvatureFit | None
    non_geometric: bool
    meta: dict = field(default_factory=dict)


def compare_direct_quantizations(manifold, v_slow=None, alphas=(0.0, 1 / 6, 1 / 4), hbar=1.0,
                                 limit_estimate: EffectivePotentialEstimate | None = None, k=9,
                                 n_s=256, order=DEFAULT_ORDER, geometric_tol=0.1) -> DirectComparison:
    """Spectra of the alpha-family of direct quantizations against the limit spectrum.

    On a sphere only the analytic alpha-family is tabulated (the limit route is
    implemented for curves); ``shifts[(a, b)]`` is then the uniform offset of
    spectrum b against spectrum a together with its non-uniformity.
    """
    alphas = tuple(float(a) for a in alphas)
    direct = {}
    for a in alphas:
        h = build_direct_hamiltonian(manifold, v_slow, a, hbar, n_s, order)
        direct[a] = h.eigenvalues(k) if hasattr(h, "eigenvalues") else lowest_eigenpairs(h, k).eigenvalues
    if not isinstance(manifold, EmbeddingCurve):
        if limit_estimate is not None:
            raise ValueError("limit comparison is implemented for curves only")
        shifts = {}
        for a in alphas[1:]:
            d = direct[a] - direct[alphas[0]]
            shifts[(alphas[0], a)] = (float(np.mean(d)), float(np.max(np.abs(d - np.mean(d)))))
        return DirectComparison(alphas, direct, None, shifts, {}, 0.0, [], None, False,
                                {"manifold": "sphere"})
    if limit_estimate is None:
        return DirectComparison(alphas, direct, None, {}, {}, 0.0, [], None, False)
    grid = Grid1D.periodic(manifold.period, n_s)
    pot = slow_potential(v_slow, manifold.period)(grid.points) + hbar**2 * limit_estimate(grid.points)
    lim = lowest_eigenpairs(with_potential(build_laplace_beltrami(grid, None, hbar, order), pot), k).eigenvalues
    tol = 2 * hbar**2 * float(np.max(limit_estimate.uncertainty)) + 1e-8
    shifts, errs, matching = {}, {}, []
    for a, d in direct.items():
        shifts[a] = float(np.mean(lim - d))
        errs[a] = float(np.max(np.abs((lim[1:] - lim[0]) - (d[1:] - d[0]))))
        if errs[a] <= tol:
            matching.append(a)
    fit = fit_curvature_law(limit_estimate, manifold, offset=True)
    non_geo = (not fit.flat) and fit.relative_residual > geometric_tol
    return DirectComparison(alphas, direct, lim, shifts, errs, tol, matching, fit, non_geo)


# ---- adiabatic decoupling proxy ------------------------------------------------

@dataclass
class DecouplingReport:
    lams: np.ndarray
    s: np.ndarray
    ratio: np.ndarray  # (n_lam, n_s): hbar v ||Q d_s psi|| / gap
    first_excited: np.ndarray  # (n_lam, n_s): hbar v |<psi_1|d_s psi>| / gap
    max_ratio: np.ndarray
    exponent: float  # log-log slope of max_ratio against lam (nan when the ratio vanishes)
    trivial: bool
    meta: dict = field(default_factory=dict)


def adiabatic_decoupling_check(curve, family, lams, hbar=1.0, velocity=1.0, n_s=64, n_r=96,
                               order=DEFAULT_ORDER, map_fn=map) -> DecouplingReport:
    """Static adiabaticity proxy: slow-motion coupling out of the fast ground state over the gap.

    The coupling is the norm of ``d_s psi_GR`` outside the ground state,
    i.e. to the whole excited manifold; the overlap with ``psi_1`` alone is
    reported as well (it vanishes by parity for symmetric profile changes).
    """
    lams = np.asarray(sorted(lams), dtype=float)
    s = np.arange(n_s) * (curve.period / n_s)

    def one(lam):
        b = fast_ground_states(curve, family, lam, s, hbar, n_r=n_r, order=order)
        dpsi = _ds_at_fixed_r(b, curve.period)
        w = b.J * b.h[:, None]
        along = np.sum(b.psi * dpsi * w, axis=1)
        q = dpsi - along[:, None] * b.psi
        norm = np.sqrt(np.sum(q**2 * w, axis=1))
        first = np.abs(np.sum(b.psi1 * dpsi * w, axis=1))
        return hbar * velocity * norm / b.gap, hbar * velocity * first / b.gap

    ratios, firsts = zip(*map_fn(one, lams))
    ratio = np.array(ratios)
    mx = ratio.max(axis=1)
    scale = np.max(np.abs(curve.curvature(s))) + 1.0
    trivial = bool(np.all(mx <= 1e-9 * scale))
    exponent = float("nan") if trivial else float(np.polyfit(np.log(lams), np.log(mx), 1)[0])
    return DecouplingReport(lams, s, ratio, np.array(firsts), mx, exponent, trivial,
                            {"velocity": velocity, "n_s": n_s, "n_r": n_r})
