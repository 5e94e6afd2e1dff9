import math

import numpy as np
import pytest
import scipy.sparse as sp

from limitquant.geometry import EmbeddingCurve
from limitquant.potentials import ConfinementFamily, tune_harmonic
from limitquant.qsolve import (Grid1D, Grid2D, NonPositiveMetric, build_direct_hamiltonian,
                               build_full_hamiltonian, build_laplace_beltrami, lowest_eigenpairs,
                               tubular_grid, with_potential)
from limitquant.reduction import r_half_width

TWO_PI = 2 * math.pi


def ring(n, order=4, length=TWO_PI):
    return build_laplace_beltrami(Grid1D.periodic(length, n), None, 1.0, order)


def oscillator(n=800, order=4, omega=1.0):
    grid = Grid1D.dirichlet(-10.0, 10.0, n)
    return with_potential(build_laplace_beltrami(grid, None, 1.0, order), 0.5 * omega**2 * grid.points**2)


def test_constant_in_kernel():
    op = ring(64)
    np.testing.assert_allclose(op.apply(np.ones(64)), 0.0, atol=1e-12)


def test_plane_wave_eigenvalue():
    L, n = 3.0, 128
    grid = Grid1D.periodic(L, n)
    op = build_laplace_beltrami(grid, None, 1.0, 2)
    psi = np.cos(2 * math.pi * grid.points / L)
    exact = 0.5 * (2 * math.pi / L) ** 2
    np.testing.assert_allclose(op.apply(psi), exact * psi, atol=exact * (2 * math.pi / n) ** 2)


def test_ring_spectrum():
    res = lowest_eigenpairs(ring(512), 5)
    np.testing.assert_allclose(res.eigenvalues, [0, 0.5, 0.5, 2.0, 2.0], atol=1e-4)


def test_oscillator_spectrum():
    res = lowest_eigenpairs(oscillator(), 3)
    np.testing.assert_allclose(res.eigenvalues, [0.5, 1.5, 2.5], atol=1e-6)


def test_infinite_well_spectrum():
    op = build_laplace_beltrami(Grid1D.dirichlet(0.0, math.pi, 400), None, 1.0)
    res = lowest_eigenpairs(op, 3)
    np.testing.assert_allclose(res.eigenvalues, [0.5, 2.0, 4.5], atol=1e-4)


def test_eigenvectors_orthonormal_and_residuals():
    op = oscillator(400)
    res = lowest_eigenpairs(op, 6, tol=1e-9)
    gram = res.eigenvectors.T @ (op.weights[:, None] * res.eigenvectors)
    np.testing.assert_allclose(gram, np.eye(6), atol=1e-8)
    assert np.all(res.residuals <= 1e-9)


def test_ring_order_two_convergence():
    ns = np.array([64, 128, 256])
    errs = [abs(lowest_eigenpairs(ring(n, order=2), 5).eigenvalues[3] - 2.0) for n in ns]
    slope = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)
    errs4 = [abs(lowest_eigenpairs(ring(n, order=4), 5).eigenvalues[3] - 2.0) for n in ns]
    assert -np.polyfit(np.log(ns), np.log(errs4), 1)[0] == pytest.approx(4.0, abs=0.1)


def test_tubular_stencil_coefficient():
    # unit circle, row r = 0.1: the s-neighbour coupling carries g^ss = 1/0.81
    curve = EmbeddingCurve.circle(1.0)
    grid = Grid2D(Grid1D.periodic(TWO_PI, 32), Grid1D.dirichlet(-0.3, 0.3, 17))
    j = int(np.argmin(np.abs(grid.r_grid.points - 0.1)))
    assert grid.r_grid.points[j] == pytest.approx(0.1, abs=1e-14)
    op = build_laplace_beltrami(grid, curve, 1.0, order=2)
    h = op.matrix().tocsr()
    nr = grid.r_grid.n
    row = 5 * nr + j
    neighbour = 6 * nr + j
    coeff = -h[row, neighbour] * 2 * grid.s_grid.spacing**2
    assert coeff == pytest.approx(1 / 0.81, rel=1e-12)


def _random_pairs(op, n_pairs, seed=1):
    rng = np.random.default_rng(seed)
    m = op.matrix()
    for _ in range(n_pairs):
        u, v = rng.standard_normal(op.dim), rng.standard_normal(op.dim)
        yield op.inner(u, m @ v), op.inner(m @ u, v), op.norm(u) * op.norm(v)


@pytest.mark.parametrize("order", [2, 4])
def test_self_adjoint(order):
    curve = EmbeddingCurve.ellipse(1.2, 0.8)
    fam = tune_harmonic(ConfinementFamily(period=curve.period))
    grid = tubular_grid(curve, 32, 24, r_half_width(curve, fam, 1e4))
    ops = [build_full_hamiltonian(grid, curve, fam, 1e4, (0.0, 0.3), 1.0, order), oscillator(100, order)]
    for op in ops:
        scale = sp.linalg.norm(op.matrix())
        for a, b, n in _random_pairs(op, 50):
            assert abs(a - b) <= 1e-12 * n * scale


def test_kinetic_positive_semidefinite():
    curve = EmbeddingCurve.ellipse(1.2, 0.8)
    grid = tubular_grid(curve, 24, 16, 0.2)
    op = build_laplace_beltrami(grid, curve)
    ev = np.linalg.eigvalsh(op.symmetric().toarray())
    assert ev[0] > -1e-10


def test_measure_scale_invariance():
    curve = EmbeddingCurve.circle(1.0)
    grid = tubular_grid(curve, 24, 16, 0.3)
    a = lowest_eigenpairs(build_laplace_beltrami(grid, curve), 6).eigenvalues
    b = lowest_eigenpairs(build_laplace_beltrami(grid, curve, measure_scale=3.7), 6).eigenvalues
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_non_positive_metric():
    with pytest.raises(NonPositiveMetric):
        build_laplace_beltrami(Grid1D.periodic(1.0, 16), lambda x: (np.ones_like(x), -np.ones_like(x)))


def test_line_full_hamiltonian_separable():
    line = EmbeddingCurve.line(TWO_PI)
    fam = tune_harmonic(ConfinementFamily(period=TWO_PI))
    lam = 1e4
    grid = tubular_grid(line, 32, 512, r_half_width(line, fam, lam))
    e = lowest_eigenpairs(build_full_hamiltonian(grid, line, fam, lam), 3).eigenvalues
    assert e[0] == pytest.approx(50.0, abs=1e-6)
    np.testing.assert_allclose(e[1:] - e[0], [0.5, 0.5], atol=1e-4)


def test_circle_full_hamiltonian_offset():
    # ground energy 50 + O(hbar^2) with the offset close to -kappa^2 hbar^2/8 at lam = 1e4
    curve = EmbeddingCurve.circle(1.0)
    fam = tune_harmonic(ConfinementFamily(period=TWO_PI))
    lam = 1e4
    grid = tubular_grid(curve, 32, 64, r_half_width(curve, fam, lam))
    e0 = lowest_eigenpairs(build_full_hamiltonian(grid, curve, fam, lam), 1).eigenvalues[0]
    assert e0 - 50.0 == pytest.approx(-0.125, abs=0.01)


def test_constant_slow_potential_shifts_spectrum():
    curve = EmbeddingCurve.ellipse(1.2, 0.8)
    fam = tune_harmonic(ConfinementFamily(period=curve.period))
    grid = tubular_grid(curve, 48, 32, r_half_width(curve, fam, 1e4))
    a = lowest_eigenpairs(build_full_hamiltonian(grid, curve, fam, 1e4, (0.0, 0.2)), 6).eigenvalues
    b = lowest_eigenpairs(build_full_hamiltonian(grid, curve, fam, 1e4, (0.7, 0.2)), 6).eigenvalues
    np.testing.assert_allclose(b - a, 0.7, atol=1e-9)


def test_rotation_invariance():
    curve = EmbeddingCurve.ellipse(1.2, 0.8)
    fam = tune_harmonic(ConfinementFamily(period=curve.period))
    grid = tubular_grid(curve, 48, 32, r_half_width(curve, fam, 1e4))
    a = lowest_eigenpairs(build_full_hamiltonian(grid, curve, fam, 1e4), 6).eigenvalues
    b = lowest_eigenpairs(build_full_hamiltonian(grid, curve.rotated(1.1), fam, 1e4), 6).eigenvalues
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_krylov_matches_dense_and_is_seeded():
    curve = EmbeddingCurve.circle(1.0)
    fam = tune_harmonic(ConfinementFamily(period=TWO_PI))
    grid = tubular_grid(curve, 64, 48, r_half_width(curve, fam, 1e3))  # 3072 unknowns: Krylov path
    op = build_full_hamiltonian(grid, curve, fam, 1e3)
    a = lowest_eigenpairs(op, 5, seed=3)
    b = lowest_eigenpairs(op, 5, seed=3)
    np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)
    dense = np.linalg.eigvalsh(op.symmetric().toarray())[:5]
    np.testing.assert_allclose(a.eigenvalues, dense, atol=1e-8)


def test_direct_hamiltonians():
    curve = EmbeddingCurve.ellipse(1.2, 0.8)
    a = build_direct_hamiltonian(curve, (0.0, 0.5), 0.0)
    b = build_direct_hamiltonian(curve, (0.0, 0.5), 0.25)
    assert (a.stiffness != b.stiffness).nnz == 0
    np.testing.assert_array_equal(a.potential, b.potential)
    sphere = build_direct_hamiltonian(("sphere", 1.0), None, 1 / 6)
    np.testing.assert_allclose(sphere.eigenvalues(9), [1 / 3] + [1 + 1 / 3] * 3 + [3 + 1 / 3] * 5, atol=1e-15)
    quarter = build_direct_hamiltonian(("sphere", 1.0), None, 0.25)
    np.testing.assert_allclose(quarter.eigenvalues(9) - sphere.eigenvalues(9), 1 / 6, atol=1e-15)
