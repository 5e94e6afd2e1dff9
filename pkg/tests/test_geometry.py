import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from limitquant.geometry import (EmbeddingCurve, OutOfTube, curvature, curvature_profile, curve_from_config,
                                 metric_at, sphere_scalar_curvature)


def ellipse_kappa_at_t(a, b, t):
    return a * b / (a**2 * math.sin(t) ** 2 + b**2 * math.cos(t) ** 2) ** 1.5


def test_metric_on_unit_circle():
    m = metric_at(EmbeddingCurve.circle(1.0), 0.3, 0.1)
    assert m.g_ss == pytest.approx(0.81, abs=1e-12)
    assert m.g_rr == 1.0
    assert m.sqrt_g == pytest.approx(0.9, abs=1e-12)


@pytest.mark.parametrize("curve", [EmbeddingCurve.circle(1.0), EmbeddingCurve.ellipse(1.2, 0.8),
                                   EmbeddingCurve.line(3.0)])
def test_metric_on_curve_is_identity(curve):
    s = np.linspace(0, curve.period, 7)
    m = metric_at(curve, s, 0.0)
    np.testing.assert_allclose(m.g_ss, 1.0, atol=1e-14)
    np.testing.assert_allclose(m.sqrt_g, 1.0, atol=1e-14)


def test_metric_ellipse_vertex():
    # t=0 is the vertex (a, 0), where kappa = a/b^2 = 2
    m = metric_at(EmbeddingCurve.ellipse(2.0, 1.0), 0.0, 0.05)
    assert m.g_ss == pytest.approx(0.81, abs=1e-8)


def test_out_of_tube():
    with pytest.raises(OutOfTube):
        metric_at(EmbeddingCurve.circle(1.0), 0.0, 1.0)


def test_curvature_circle_and_line():
    s = np.linspace(0, 4 * math.pi, 9)
    np.testing.assert_allclose(curvature(EmbeddingCurve.circle(2.0), s), 0.5, atol=1e-14)
    np.testing.assert_allclose(curvature(EmbeddingCurve.line(5.0), s), 0.0, atol=0)


def test_curvature_ellipse_against_finite_difference_frenet():
    a, b = 2.0, 1.0
    curve = EmbeddingCurve.ellipse(a, b)
    # arc length to t = pi/2 by refined quadrature, then kappa from a central-difference Frenet oracle
    t = np.linspace(0, math.pi / 2, 200001)
    speed = np.hypot(a * np.sin(t), b * np.cos(t))
    s = float(np.sum(0.5 * (speed[1:] + speed[:-1]) * np.diff(t)))
    h = 1e-4
    pts = [np.array([a * math.cos(math.pi / 2 + k * h), b * math.sin(math.pi / 2 + k * h)]) for k in (-1, 0, 1)]
    d1 = (pts[2] - pts[0]) / (2 * h)
    d2 = (pts[2] - 2 * pts[1] + pts[0]) / h**2
    kappa_fd = (d1[0] * d2[1] - d1[1] * d2[0]) / np.linalg.norm(d1) ** 3
    assert kappa_fd == pytest.approx(0.25, abs=1e-6)
    assert curvature(curve, s) == pytest.approx(0.25, abs=1e-8)


def test_sphere_scalar_curvature():
    assert sphere_scalar_curvature(1.0) == 2.0
    assert sphere_scalar_curvature(2.0) == 0.5
    assert sphere_scalar_curvature(1e8) < 1e-15


def test_arc_length_table_monotone():
    curve = EmbeddingCurve.ellipse(1.2, 0.8)
    t_tab, s_tab = curve.arc_length_table
    assert s_tab[0] == 0.0
    assert np.all(np.diff(s_tab) > 0)
    assert s_tab[-1] == pytest.approx(curve.period, rel=1e-12)


def test_reparametrization_invariance():
    a, b = 1.2, 0.8
    ref = EmbeddingCurve.ellipse(a, b)

    def warped(u):
        t = u + 0.3 * np.sin(u)  # monotone since |0.3 cos| < 1
        return a * np.cos(t), b * np.sin(t)

    other = EmbeddingCurve.from_parametrization(warped)
    assert other.period == pytest.approx(ref.period, rel=1e-10)
    s = np.linspace(0, ref.period, 50, endpoint=False)
    np.testing.assert_allclose(curvature(other, s), curvature(ref, s), atol=1e-8)


@pytest.mark.parametrize("curve", [EmbeddingCurve.circle(0.7), EmbeddingCurve.ellipse(1.2, 0.8),
                                   EmbeddingCurve.ellipse(2.0, 1.0),
                                   EmbeddingCurve.fourier([0, 1.0, 0.1], [0, 0, 0], [0, 0, 0.05], [0, 1.0, 0])])
def test_total_turning(curve):
    assert curve.total_turning() == pytest.approx(2 * math.pi, abs=1e-6)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_metric_matches_embedding_jacobian(seed):
    curve = EmbeddingCurve.ellipse(1.2, 0.8)
    rng = np.random.default_rng(seed)
    s = rng.uniform(0, curve.period, 2)
    r = rng.uniform(-0.5, 0.5, 2) * curve.tube_radius()
    h = 1e-5
    dx = (curve.embed(s + h, r) - curve.embed(s - h, r)) / (2 * h)
    g_num = np.sum(dx**2, axis=-1)
    np.testing.assert_allclose(metric_at(curve, s, r).g_ss, g_num, atol=1e-8)


def test_rotation_preserves_curvature():
    curve = EmbeddingCurve.ellipse(1.2, 0.8)
    s = np.linspace(0, curve.period, 17)
    np.testing.assert_allclose(curve.rotated(0.7).curvature(s), curve.curvature(s), atol=1e-12)


def test_curvature_profile_and_config():
    prof = curvature_profile(EmbeddingCurve.circle(2.0), n=16)
    np.testing.assert_allclose(prof.kappa, 0.5)
    c = curve_from_config({"kind": "ellipse", "a": 1.2, "b": 0.8})
    assert c.kind == "ellipse"
    with pytest.raises(ValueError):
        curve_from_config({"kind": "spiral"})
