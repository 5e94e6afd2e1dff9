"""Divergence-form Laplace-Beltrami operators on tensor grids and eigensolvers.

Operators are assembled from their quadratic form

    Q(u) = sum_faces (hbar^2/2) * (g^ii sqrt(g))_face * (D_i u)_face^2 * cell
         + sum_nodes V * sqrt(g) * u^2 * cell

so the stiffness matrix ``K`` is symmetric by construction and ``H = M^-1 K``
is self-adjoint in the volume-weighted product ``<u, v> = sum u v sqrt(g) h``.
``D_i`` is a staggered (node -> half-node) difference of order 2 or 4.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import EmbeddingCurve, OutOfTube, sphere_scalar_curvature

__all__ = [
    "Grid1D",
    "Grid2D",
    "DiscreteOperator",
    "EigenResult",
    "NoConvergence",
    "NonPositiveMetric",
    "staggered_difference",
    "build_laplace_beltrami",
    "with_potential",
    "lowest_eigenpairs",
    "tubular_grid",
    "build_full_hamiltonian",
    "build_direct_hamiltonian",
    "SphereSpectrum",
    "slow_potential",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 2000
DEFAULT_ORDER = 4


class NoConvergence(RuntimeError):
    def __init__(self, iterations, message="eigensolver did not converge"):
        super().__init__(f"{message} after {iterations} iterations")
        self.iterations = iterations


class NonPositiveMetric(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid; periodic grids omit the duplicate endpoint, Dirichlet
    grids hold interior nodes only (the boundary nodes carry u = 0)."""

    points: np.ndarray
    spacing: float
    boundary: str

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("grid spacing must be positive")
        if self.points.size < 16:
            raise ValueError("grids need at least 16 points")
        if self.boundary not in ("periodic", "dirichlet"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @classmethod
    def periodic(cls, length: float, n: int, start: float = 0.0) -> "Grid1D":
        h = length / n
        return cls(start + h * np.arange(n), h, "periodic")

    @classmethod
    def dirichlet(cls, a: float, b: float, n: int) -> "Grid1D":
        h = (b - a) / (n + 1)
        return cls(a + h * np.arange(1, n + 1), h, "dirichlet")

    @property
    def n(self) -> int:
        return self.points.size

    def half_points(self) -> np.ndarray:
        h = self.spacing
        if self.boundary == "periodic":
            return self.points + 0.5 * h
        return np.concatenate([[self.points[0] - 0.5 * h], self.points + 0.5 * h])

    @property
    def extent(self) -> tuple[float, float]:
        h = self.spacing
        if self.boundary == "periodic":
            return float(self.points[0]), float(self.points[0] + h * self.n)
        return float(self.points[0] - h), float(self.points[-1] + h)


@dataclass(frozen=True)
class Grid2D:
    s_grid: Grid1D
    r_grid: Grid1D

    def __post_init__(self):
        if self.s_grid.boundary != "periodic" or self.r_grid.boundary != "dirichlet":
            raise ValueError("Grid2D expects a periodic s-grid and a Dirichlet r-grid")

    @property
    def shape(self) -> tuple[int, int]:
        return self.s_grid.n, self.r_grid.n

    @property
    def size(self) -> int:
        return self.s_grid.n * self.r_grid.n

    @property
    def cell(self) -> float:
        return self.s_grid.spacing * self.r_grid.spacing

    def mesh(self):
        return np.meshgrid(self.s_grid.points, self.r_grid.points, indexing="ij")


_STENCIL = {
    2: (np.array([0, 1]), np.array([-1.0, 1.0])),
    4: (np.array([-1, 0, 1, 2]), np.array([1.0, -27.0, 27.0, -1.0]) / 24.0),
}


def staggered_difference(grid: Grid1D, order: int = DEFAULT_ORDER) -> sp.csr_matrix:
    """Node-to-half-node derivative matrix.

    Half node ``j`` sits at ``points[j] + h/2`` (periodic) or, for Dirichlet
    grids, the half nodes run from the left wall cell to the right one.
    Ghost values beyond the Dirichlet walls use odd reflection.
    """
    offsets, coeffs = _STENCIL[order]
    n, h = grid.n, grid.spacing
    rows, cols, vals = [], [], []
    if grid.boundary == "periodic":
        for off, c in zip(offsets, coeffs):
            rows.append(np.arange(n))
            cols.append((np.arange(n) + off) % n)
            vals.append(np.full(n, c / h))
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n))
    # Dirichlet: interior nodes 0..n-1, walls at -1 and n, half node k between k-1 and k
    for k in range(n + 1):
        for off, c in zip(offsets, coeffs):
            node = k - 1 + off
            sign = 1.0
            if node == -1 or node == n:
                continue
            if node < -1:
                node, sign = -2 - node, -1.0
            elif node > n:
                node, sign = 2 * n - node, -1.0
            rows.append(k)
            cols.append(node)
            vals.append(sign * c / h)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))


@dataclass
class DiscreteOperator:
    """``H = M^-1 K`` with ``K`` symmetric and ``M = diag(weights)``."""

    stiffness: sp.csr_matrix
    weights: np.ndarray
    hbar: float
    grid: object
    potential: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.weights.size

    def apply(self, u):
        return (self.stiffness @ u) / self.weights

    def matrix(self) -> sp.csr_matrix:
        return sp.diags(1.0 / self.weights) @ self.stiffness

    def symmetric(self) -> sp.csr_matrix:
        w = 1.0 / np.sqrt(self.weights)
        return (sp.diags(w) @ self.stiffness @ sp.diags(w)).tocsr()

    def inner(self, u, v) -> float:
        return float(np.sum(u * v * self.weights))

    def norm(self, u) -> float:
        return float(np.sqrt(self.inner(u, u)))


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, normalized in the weighted norm
    residuals: np.ndarray
    labels: np.ndarray | None = None  # +1 even / -1 odd under s -> -s, 0 if unlabelled


def _flat_metric_1d(x):
    one = np.ones_like(x)
    return one, one


def build_laplace_beltrami(grid, metric=None, hbar: float = 1.0, order: int = DEFAULT_ORDER,
                           measure_scale: float = 1.0) -> DiscreteOperator:
    """Assemble ``-(hbar^2/2) (1/sqrt g) d_i (g^ij sqrt g d_j)``.

    For a :class:`Grid1D`, ``metric(x)`` returns ``(g^xx, sqrt_g)``.  For a
    :class:`Grid2D`, ``metric`` is an :class:`EmbeddingCurve` (tubular metric)
    or a callable ``(s, r) -> (g^ss, g^rr, sqrt_g)``.  Metric factors are
    evaluated at half nodes for the fluxes and at nodes for the measure.
    """
    pref = 0.5 * hbar**2
    if isinstance(grid, Grid1D):
        metric = metric or _flat_metric_1d
        d = staggered_difference(grid, order)
        g_half, sg_half = metric(grid.half_points())
        g_node, sg_node = metric(grid.points)
        flux = np.asarray(g_half * sg_half, dtype=float) * measure_scale
        sg_node = np.asarray(sg_node, dtype=float) * measure_scale
        if np.any(sg_node <= 0) or np.any(flux <= 0):
            raise NonPositiveMetric("metric must be positive on all grid points")
        h = grid.spacing
        k = pref * (d.T @ sp.diags(flux * h) @ d)
        return DiscreteOperator(k.tocsr(), sg_node * h, hbar, grid, meta={"order": order})

    if not isinstance(grid, Grid2D):
        raise TypeError("grid must be Grid1D or Grid2D")
    if isinstance(metric, EmbeddingCurve):
        metric = _tubular_metric(metric)
    elif metric is None:
        metric = lambda s, r: (np.ones_like(s * r), np.ones_like(s * r), np.ones_like(s * r))  # noqa: E731
    sg, rg = grid.s_grid, grid.r_grid
    ns, nr = grid.shape
    ds = sp.kron(staggered_difference(sg, order), sp.identity(nr), format="csr")
    dr = sp.kron(sp.identity(ns), staggered_difference(rg, order), format="csr")
    S, R = np.meshgrid(sg.half_points(), rg.points, indexing="ij")
    gss, _, sgs = metric(S, R)
    S, R = np.meshgrid(sg.points, rg.half_points(), indexing="ij")
    _, grr, sgr = metric(S, R)
    S, R = grid.mesh()
    _, _, sg_node = metric(S, R)
    flux_s = (gss * sgs).ravel() * measure_scale
    flux_r = (grr * sgr).ravel() * measure_scale
    sg_node = sg_node.ravel() * measure_scale
    if np.any(sg_node <= 0) or np.any(flux_s <= 0) or np.any(flux_r <= 0):
        raise NonPositiveMetric("metric must be positive on all grid points")
    cell = grid.cell
    k = pref * (ds.T @ sp.diags(flux_s * cell) @ ds + dr.T @ sp.diags(flux_r * cell) @ dr)
    return DiscreteOperator(k.tocsr(), sg_node * cell, hbar, grid, meta={"order": order})


def _tubular_metric(curve: EmbeddingCurve):
    bound = curve.tube_radius()

    def metric(s, r):
        if np.any(np.abs(r) >= bound):
            raise OutOfTube(f"r-grid reaches |r| = {np.max(np.abs(r)):.4g} >= tube radius {bound:.4g}")
        j = 1.0 - curve.curvature(s) * r
        return 1.0 / j**2, np.ones_like(j), j

    return metric


def with_potential(op: DiscreteOperator, values) -> DiscreteOperator:
    """Return ``op + diag(values)`` (values sampled on the grid nodes)."""
    v = np.broadcast_to(np.asarray(values, dtype=float).ravel(), op.weights.shape)
    if not np.all(np.isfinite(v)):
        raise ValueError("potential must be finite on the grid; put walls on the grid boundary")
    k = op.stiffness + sp.diags(v * op.weights)
    pot = v if op.potential is None else op.potential + v
    return replace(op, stiffness=k.tocsr(), potential=np.array(pot))


def _reflection_perm(grid):
    if isinstance(grid, Grid1D) and grid.boundary == "periodic":
        n = grid.n
        return (-np.arange(n)) % n if abs(grid.points[0]) < 1e-14 else None
    if isinstance(grid, Grid2D) and abs(grid.s_grid.points[0]) < 1e-14:
        ns, nr = grid.shape
        idx = np.arange(ns * nr).reshape(ns, nr)
        return idx[(-np.arange(ns)) % ns].ravel()
    return None


def _label_degenerate(vals, vecs, weights, perm, tol):
    """Rotate near-degenerate pairs into s-reflection eigenvectors (even first)."""
    labels = np.zeros(vals.size, dtype=int)
    if perm is None:
        return vals, vecs, labels
    i = 0
    while i < vals.size:
        j = i + 1
        while j < vals.size and abs(vals[j] - vals[i]) <= tol * max(1.0, abs(vals[i])):
            j += 1
        block = vecs[:, i:j]
        refl = block.T @ (weights[:, None] * block[perm])
        refl = 0.5 * (refl + refl.T)
        ev, rot = np.linalg.eigh(refl)
        order = np.argsort(-ev)
        block = block @ rot[:, order]
        vecs[:, i:j] = block
        labels[i:j] = np.where(ev[order] > 0, 1, -1)
        i = j
    return vals, vecs, labels


def lowest_eigenpairs(op: DiscreteOperator, k: int, tol: float = 1e-9, seed: int = 0,
                      sigma: float | None = None, degenerate_tol: float = 1e-7,
                      maxiter: int | None = None) -> EigenResult:
    """The ``k`` lowest eigenpairs of ``M^-1 K``.

    Dense LAPACK below :data:`DENSE_LIMIT` unknowns; shift-invert Lanczos
    (ARPACK) otherwise, shifted to ``sigma`` or to a lower bound from the
    potential.  Starting vectors come from ``seed``.
    """
    n = op.dim
    if k < 1 or k > max(1, n // 4):
        raise ValueError(f"need 1 <= k <= dim/4 (k={k}, dim={n})")
    a = op.symmetric()
    w = np.sqrt(op.weights)
    if n < DENSE_LIMIT:
        vals, vecs = sla.eigh(a.toarray(), subset_by_index=(0, k - 1))
    else:
        if sigma is None:
            floor = 0.0 if op.potential is None else float(np.min(op.potential))
            sigma = floor - 1e-3 * max(1.0, abs(floor))
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        try:
            vals, vecs = spla.eigsh(a, k=k, sigma=sigma, which="LM", v0=v0, tol=tol * 1e-2,
                                    maxiter=maxiter, ncv=min(n - 1, max(2 * k + 1, 40)))
        except spla.ArpackNoConvergence as exc:
            raise NoConvergence(maxiter or 0) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    vecs = vecs / w[:, None]
    # fix the global sign so that results are reproducible
    for c in range(vecs.shape[1]):
        col = vecs[:, c]
        p = np.argmax(np.abs(col))
        if col[p] < 0:
            vecs[:, c] = -col
    vals, vecs, labels = _label_degenerate(vals, vecs, op.weights, _reflection_perm(op.grid),
                                           degenerate_tol)
    res = np.array([np.sqrt(np.sum((op.apply(vecs[:, c]) - vals[c] * vecs[:, c]) ** 2 * op.weights))
                    for c in range(vecs.shape[1])])
    if np.any(res > tol * np.maximum(1.0, np.abs(vals))):
        raise NoConvergence(maxiter or 0, f"residual {np.max(res):.3g} above tol {tol:.1g}")
    return EigenResult(vals, vecs, res, labels)


def tubular_grid(curve: EmbeddingCurve, n_s: int, n_r: int, half_width: float) -> Grid2D:
    return Grid2D(Grid1D.periodic(curve.period, n_s), Grid1D.dirichlet(-half_width, half_width, n_r))


def slow_potential(source, period: float) -> Callable:
    """Slow potential V(s) from a callable, a constant or cosine coefficients in 2 pi s/L."""
    if callable(source):
        return source
    coeffs = np.atleast_1d(np.asarray(0.0 if source is None else source, dtype=float))

    def v(s):
        s = np.asarray(s, dtype=float)
        k = np.arange(coeffs.size)
        return np.cos(np.multiply.outer(s * (2 * np.pi / period), k)) @ coeffs

    return v


def build_full_hamiltonian(grid2d: Grid2D, curve: EmbeddingCurve, family, lam: float,
                           v_slow=None, hbar: float = 1.0, order: int = DEFAULT_ORDER) -> DiscreteOperator:
    """Full 2D Hamiltonian in tubular coordinates: Laplace-Beltrami + V(s) + lam*v(r; s)."""
    op = build_laplace_beltrami(grid2d, curve, hbar, order)
    S, R = grid2d.mesh()
    vs = slow_potential(v_slow, curve.period)(S)
    conf = family.evaluate(lam, S, R)
    if not np.all(np.isfinite(conf)):
        raise ValueError("hard-wall interior must coincide with the r-grid extent")
    op = with_potential(op, vs + conf)
    op.meta.update(lam=lam, kind="full")
    return op


@dataclass(frozen=True)
class SphereSpectrum:
    """Analytic Laplace-Beltrami spectrum on a round sphere plus alpha hbar^2 R."""

    radius: float
    alpha: float
    hbar: float = 1.0
    v_const: float = 0.0

    @property
    def scalar_curvature(self) -> float:
        return sphere_scalar_curvature(self.radius)

    def level(self, l):
        l = np.asarray(l)
        return (self.hbar**2 * l * (l + 1) / (2 * self.radius**2)
                + self.alpha * self.hbar**2 * self.scalar_curvature + self.v_const)

    def degeneracy(self, l):
        return 2 * np.asarray(l) + 1

    def eigenvalues(self, n: int) -> np.ndarray:
        """The ``n`` lowest eigenvalues with multiplicity."""
        out, l = [], 0
        while len(out) < n:
            out.extend([float(self.level(l))] * int(self.degeneracy(l)))
            l += 1
        return np.array(out[:n])


def build_direct_hamiltonian(manifold, v_slow=None, alpha: float = 0.0, hbar: float = 1.0,
                             n_s: int = 256, order: int = DEFAULT_ORDER):
    """Direct quantization on the constraint manifold.

    Curves give ``-(hbar^2/2) d_s^2 + V(s)`` on a periodic arc-length grid; a
    curve's intrinsic curvature vanishes, so ``alpha`` has no effect.  A sphere
    (given as ``("sphere", radius)``) returns its analytic spectrum shifted by
    ``alpha hbar^2 R``; ``v_slow`` must then be a constant.
    """
    if isinstance(manifold, tuple) and manifold[0] == "sphere":
        v0 = 0.0 if v_slow is None else float(np.atleast_1d(v_slow)[0])
        return SphereSpectrum(float(manifold[1]), float(alpha), hbar, v0)
    if not isinstance(manifold, EmbeddingCurve):
        raise TypeError("manifold must be an EmbeddingCurve or ('sphere', radius)")
    grid = Grid1D.periodic(manifold.period, n_s)
    op = build_laplace_beltrami(grid, None, hbar, order)
    intrinsic_r = 0.0
    pot = slow_potential(v_slow, manifold.period)(grid.points) + alpha * hbar**2 * intrinsic_r
    op = with_potential(op, pot)
    op.meta.update(kind="direct", alpha=alpha)
    return op
