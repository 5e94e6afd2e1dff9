import math

import numpy as np
import pytest

from limitquant.geometry import EmbeddingCurve
from limitquant.potentials import ConfinementFamily, tune_harmonic
from limitquant.reduction import (GridTooNarrow, adiabatic_decoupling_check, ambiguity_experiment,
                                  assemble_v_eff, compare_direct_quantizations, coupling_terms,
                                  extract_v_eff_spectral, extrapolate, fast_ground_state,
                                  fit_curvature_law, limit_spectrum, r_half_width)

TWO_PI = 2 * math.pi
LINE = EmbeddingCurve.line(TWO_PI)
CIRCLE = EmbeddingCurve.circle(1.0)
ELLIPSE = EmbeddingCurve.ellipse(1.2, 0.8)


def harmonic(curve):
    return tune_harmonic(ConfinementFamily(period=curve.period))


def test_fast_ground_state_flat_line():
    f = fast_ground_state(LINE, harmonic(LINE), 1e4, 0.0, n_r=512)
    assert f.E_GR == pytest.approx(50.0, abs=1e-6)
    assert f.gap == pytest.approx(100.0, abs=1e-4)
    assert np.sum(f.weights * f.psi**2) == pytest.approx(1.0, abs=1e-12)
    assert np.all(f.psi > 0)  # nodeless, sign fixed


def test_fast_ground_state_hardwall():
    wall = ConfinementFamily(kind="hardwall", period=TWO_PI, wall_width=(1.0,), tuned=True)
    f = fast_ground_state(LINE, wall, 100.0, 0.0, n_r=384)
    assert f.E_GR == pytest.approx(math.pi**2 * 1e4 / 2, rel=1e-6)


def test_fast_ground_state_circle_offset_is_lambda_independent():
    lams = np.array([1e3, 1e4, 1e5])
    # absolute discretization error grows like E_GR ~ sqrt(lam), so resolve r finely
    delta = [fast_ground_state(CIRCLE, harmonic(CIRCLE), lam, 0.3, n_r=384).E_GR - 0.5 * math.sqrt(lam)
             for lam in lams]
    x_inf, unc, _ = extrapolate(lams, delta)
    assert x_inf == pytest.approx(-0.125, abs=1e-4)
    assert abs(delta[-1] - x_inf) < 0.01


def test_gap_scaling():
    fam = harmonic(LINE)
    g = [fast_ground_state(LINE, fam, lam, 0.0, n_r=256).gap for lam in (1e2, 1e4)]
    assert g[1] / g[0] == pytest.approx(10.0, rel=1e-5)
    wall = ConfinementFamily(kind="hardwall", period=TWO_PI, wall_width=(1.0,), tuned=True)
    g = [fast_ground_state(LINE, wall, lam, 0.0, n_r=256).gap for lam in (10.0, 100.0)]
    assert g[1] / g[0] == pytest.approx(100.0, rel=1e-5)


def test_grid_too_narrow():
    with pytest.raises(GridTooNarrow):
        r_half_width(ELLIPSE, harmonic(ELLIPSE), 1e3)


def test_coupling_channels_vanish_for_s_independent_problem():
    ct = coupling_terms(LINE, harmonic(LINE), 1e4)
    for name in ("fast", "mixed", "f", "h"):
        np.testing.assert_array_equal(getattr(ct, name), 0.0)


def test_coupling_gaussian_width_oracle():
    # line with omega(s) = 1 + 0.3 cos s: Gaussian ground state of width sigma(s)
    fam = ConfinementFamily(period=TWO_PI, omega0=(1.0, 0.3))
    lam = 1e4
    ct = coupling_terms(LINE, fam, lam, n_s=64, n_r=96)
    om = 1 + 0.3 * np.cos(ct.s)
    sigma = np.sqrt(0.5 / (om * math.sqrt(lam)))
    dsigma = 0.5 * sigma * 0.3 * np.sin(ct.s) / om
    overlap = dsigma**2 / (2 * sigma**2)  # <d_s psi | d_s psi>
    np.testing.assert_allclose(ct.f, 0.5 * overlap, atol=1e-6)


def test_circle_assembled_constant():
    ct = coupling_terms(CIRCLE, harmonic(CIRCLE), 1e4)
    assert np.ptp(ct.total) < 1e-10


def test_extrapolate_exact_model():
    lams = np.array([1e2, 1e3, 1e4, 1e5])
    x = 0.3 + 2.0 * lams**-0.5 - 5.0 / lams
    x_inf, unc, corr = extrapolate(lams, x)
    assert x_inf == pytest.approx(0.3, abs=1e-12)
    assert corr == pytest.approx(x[-1] - 0.3, abs=1e-12)


def test_assembled_lambda_independence():
    est = assemble_v_eff(ELLIPSE, harmonic(ELLIPSE), [1e4, 1e5, 1e6], n_s=64)
    v = est.per_lam  # cosine coefficients per lam
    d45 = np.max(np.abs(v[0] - v[1]))
    d56 = np.max(np.abs(v[1] - v[2]))
    bias_1e4 = np.max(np.abs(v[0] - est.coeffs) + est.coeff_uncertainty)
    assert d45 < bias_1e4
    assert d56 / d45 == pytest.approx(10**-0.5, rel=0.25)


def test_ellipse_assembled_kappa_law_and_symmetry():
    est = assemble_v_eff(ELLIPSE, harmonic(ELLIPSE), [1e4, 1e5, 1e6], n_s=64)
    fit = fit_curvature_law(est, ELLIPSE)
    assert fit.c == pytest.approx(-0.125, rel=1e-3)
    assert fit.relative_residual < 1e-3
    # reflection symmetries of the ellipse: s -> -s and s -> L/2 - s
    f = est.energy
    s = np.linspace(0, ELLIPSE.period, 23)
    np.testing.assert_allclose(f(-s), f(s), atol=1e-10)
    np.testing.assert_allclose(f(ELLIPSE.period / 2 - s), f(s), atol=1e-6)


def test_hbar_collapse():
    lams = [1e5, 1e6, 1e7]
    ests = [assemble_v_eff(ELLIPSE, harmonic(ELLIPSE), lams, hbar=h, n_s=64) for h in (0.5, 1.0, 2.0)]
    for a in ests[1:]:
        comb = np.hypot(a.uncertainty, ests[0].uncertainty)
        assert np.all(np.abs(a.v_eff - ests[0].v_eff) <= 2 * comb + 1e-9)


def test_spectral_route_line_and_circle():
    est = extract_v_eff_spectral(LINE, harmonic(LINE), [1e4, 1e5, 1e6], n_s=64, n_r=48)
    assert np.max(np.abs(est.v_eff)) <= max(2 * np.max(est.uncertainty), 1e-9)
    est = extract_v_eff_spectral(CIRCLE, harmonic(CIRCLE), [1e4, 1e5, 1e6], n_s=64, n_r=48)
    assert np.mean(est.v_eff) == pytest.approx(-0.125, abs=2 * np.max(est.uncertainty) + 1e-4)
    assert np.ptp(est.v_eff) <= 2 * np.max(est.uncertainty) + 1e-9


def test_constant_slow_potential_leaves_v_eff():
    a = extract_v_eff_spectral(CIRCLE, harmonic(CIRCLE), [1e4, 1e5, 1e6], v_slow=(0.0, 0.3), n_s=64, n_r=48)
    b = extract_v_eff_spectral(CIRCLE, harmonic(CIRCLE), [1e4, 1e5, 1e6], v_slow=(2.5, 0.3), n_s=64, n_r=48)
    np.testing.assert_allclose(a.v_eff, b.v_eff, atol=1e-7)


def test_limit_spectrum_small():
    rep = limit_spectrum(CIRCLE, harmonic(CIRCLE), [1e3, 1e4, 1e5], k=5, n_s=64, n_r=48)
    np.testing.assert_allclose(rep.direct_spacings, [0.5, 0.5, 2.0, 2.0], atol=1e-5)
    assert np.max(rep.error) < 1e-3
    assert -0.6 <= rep.exponent <= -0.4


def test_ambiguity_identical_families():
    fam = harmonic(ELLIPSE)
    rep = ambiguity_experiment(ELLIPSE, fam, fam, [1e4, 1e5, 1e6], classical_lams=None)
    np.testing.assert_array_equal(rep.difference, 0.0)


def test_direct_comparison_circle_and_sphere():
    est = assemble_v_eff(CIRCLE, harmonic(CIRCLE), [1e4, 1e5, 1e6])
    comp = compare_direct_quantizations(CIRCLE, None, limit_estimate=est)
    assert comp.matching == list(comp.alphas)
    shift = comp.shifts[0.0]
    assert shift == pytest.approx(est.coeffs[0], abs=1e-6)
    sphere = compare_direct_quantizations(("sphere", 1.0), k=16)
    assert sphere.shifts[(0.0, 0.25)][0] == pytest.approx(0.5, abs=1e-15)
    assert sphere.shifts[(0.0, 0.25)][1] < 1e-14
    assert sphere.shifts[(0.0, 1 / 6)][0] == pytest.approx(1 / 3, abs=1e-15)


def test_direct_comparison_flags_quartic_family():
    fam_b = tune_harmonic(ConfinementFamily(period=ELLIPSE.period, quartic=(0.3, 0.3)))
    est = assemble_v_eff(ELLIPSE, fam_b, [1e4, 1e5, 1e6])
    comp = compare_direct_quantizations(ELLIPSE, None, limit_estimate=est)
    assert comp.non_geometric
    assert comp.matching == []
    geo = compare_direct_quantizations(ELLIPSE, None, limit_estimate=assemble_v_eff(
        ELLIPSE, harmonic(ELLIPSE), [1e4, 1e5, 1e6]))
    assert not geo.non_geometric


def test_decoupling():
    flat = adiabatic_decoupling_check(LINE, harmonic(LINE), [1e2, 1e3])
    assert flat.trivial
    np.testing.assert_array_equal(flat.ratio, 0.0)
    smooth = adiabatic_decoupling_check(LINE, ConfinementFamily(period=TWO_PI, omega0=(1.0, 0.2)),
                                        [1e2, 1e3, 1e4, 1e5])
    assert smooth.exponent == pytest.approx(-0.5, abs=0.1)
    wall = adiabatic_decoupling_check(LINE, ConfinementFamily(kind="hardwall", period=TWO_PI,
                                                              wall_width=(1.0, 0.2)), [1e2, 1e3, 1e4, 1e5])
    assert wall.exponent == pytest.approx(-2.0, abs=0.2)
