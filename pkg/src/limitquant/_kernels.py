"""Hot loops of the classical integrators.

Two interchangeable backends share one calling convention: numba-compiled
scalar loops (default) and numpy code vectorized over the trajectory batch.
Set ``LIMITQUANT_DISABLE_NUMBA=1`` to force the numpy path.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:  # pragma: no cover - import guard
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    _HAVE_NUMBA = False

ENV_FLAG = "LIMITQUANT_DISABLE_NUMBA"


def numba_enabled() -> bool:
    flag = os.environ.get(ENV_FLAG, "").strip().lower()
    return _HAVE_NUMBA and flag not in ("1", "true", "yes", "on")


def _njit(func):
    if not _HAVE_NUMBA:
        return func
    return numba.njit(cache=False, fastmath=False, nogil=True)(func)


# ---- composition coefficients -----------------------------------------

_YOSHIDA6 = (0.784513610477560, 0.235573213359357, -1.17767998417887)


def composition_weights(order: int) -> np.ndarray:
    """Leapfrog stage weights of a symmetric composition of the given order."""
    if order == 2:
        return np.array([1.0])
    if order == 4:
        g1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
        return np.array([g1, 1.0 - 2.0 * g1, g1])
    if order == 6:
        w3, w2, w1 = _YOSHIDA6
        w0 = 1.0 - 2.0 * (w1 + w2 + w3)
        return np.array([w3, w2, w1, w0, w1, w2, w3])
    raise ValueError(f"unsupported integrator order {order}")


def kick_drift(order: int) -> tuple[np.ndarray, np.ndarray]:
    """(kick, drift) fractions of dt for kick-drift-kick stages, adjacent kicks merged."""
    w = composition_weights(order)
    kick = np.empty(w.size + 1)
    kick[0] = 0.5 * w[0]
    kick[1:-1] = 0.5 * (w[:-1] + w[1:])
    kick[-1] = 0.5 * w[-1]
    return kick, w.copy()


# ---- ramp schedule ------------------------------------------------------

@_njit
def _ramp(t, lam0, lam1, t_start, duration):
    """Quintic smoothstep between lam0 and lam1; zero duration is a sudden jump."""
    if duration <= 0.0:
        return lam1 if t > t_start else lam0
    u = (t - t_start) / duration
    if u <= 0.0:
        return lam0
    if u >= 1.0:
        return lam1
    return lam0 + (lam1 - lam0) * u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


def _ramp_np(t, lam0, lam1, t_start, duration):
    if duration <= 0.0:
        return lam1 if t > t_start else lam0
    u = min(max((t - t_start) / duration, 0.0), 1.0)
    return lam0 + (lam1 - lam0) * u**3 * (10.0 - 15.0 * u + 6.0 * u * u)


# ---- 1D polynomial well -------------------------------------------------

@_njit
def _poly_force(q, lam, om2, b, c):
    return -lam * (om2 * q + 3.0 * b * q * q + 4.0 * c * q * q * q)


@_njit
def _poly_energy(q, p, lam, om2, b, c):
    return 0.5 * p * p + lam * (0.5 * om2 * q * q + b * q * q * q + c * q * q * q * q)


@_njit
def _poly_run_nb(q0, p0, t0, dt, n_steps, save_every, kick, drift, om2, b, c,
                 lam0, lam1, t_start, duration):
    n_b = q0.size
    n_save = n_steps // save_every + 1
    qs = np.empty((n_save, n_b))
    ps = np.empty((n_save, n_b))
    es = np.empty((n_save, n_b))
    ts = np.empty(n_save)
    n_st = drift.size
    for j in range(n_b):
        q = q0[j]
        p = p0[j]
        t = t0
        lam = _ramp(t, lam0, lam1, t_start, duration)
        qs[0, j] = q
        ps[0, j] = p
        es[0, j] = _poly_energy(q, p, lam, om2, b, c)
        ts[0] = t
        f = _poly_force(q, lam, om2, b, c)
        k = 1
        for step in range(1, n_steps + 1):
            for i in range(n_st):
                p += kick[i] * dt * f
                q += drift[i] * dt * p
                t += drift[i] * dt
                f = _poly_force(q, _ramp(t, lam0, lam1, t_start, duration), om2, b, c)
            p += kick[n_st] * dt * f
            if step % save_every == 0:
                t = t0 + step * dt  # strip accumulated rounding of the stage sum
                lam = _ramp(t, lam0, lam1, t_start, duration)
                qs[k, j] = q
                ps[k, j] = p
                es[k, j] = _poly_energy(q, p, lam, om2, b, c)
                ts[k] = t
                k += 1
    return ts, qs, ps, es


def _poly_run_np(q0, p0, t0, dt, n_steps, save_every, kick, drift, om2, b, c,
                 lam0, lam1, t_start, duration):
    q = np.array(q0, dtype=float)
    p = np.array(p0, dtype=float)
    n_save = n_steps // save_every + 1
    qs = np.empty((n_save, q.size))
    ps = np.empty_like(qs)
    es = np.empty_like(qs)
    ts = np.empty(n_save)

    def force(q, lam):
        return -lam * (om2 * q + 3.0 * b * q**2 + 4.0 * c * q**3)

    def energy(q, p, lam):
        return 0.5 * p**2 + lam * (0.5 * om2 * q**2 + b * q**3 + c * q**4)

    t = t0
    lam = _ramp_np(t, lam0, lam1, t_start, duration)
    qs[0], ps[0], es[0], ts[0] = q, p, energy(q, p, lam), t
    f = force(q, lam)
    k = 1
    for step in range(1, n_steps + 1):
        for i in range(drift.size):
            p += kick[i] * dt * f
            q += drift[i] * dt * p
            t += drift[i] * dt
            f = force(q, _ramp_np(t, lam0, lam1, t_start, duration))
        p += kick[-1] * dt * f
        if step % save_every == 0:
            t = t0 + step * dt
            lam = _ramp_np(t, lam0, lam1, t_start, duration)
            qs[k], ps[k], es[k], ts[k] = q, p, energy(q, p, lam), t
            k += 1
    return ts, qs, ps, es


def poly_run(*args):
    """Integrate a batch of 1D trajectories in ``lam(t) (om2 q^2/2 + b q^3 + c q^4)``.

    Returns ``(t, q, p, energy)`` sampled every ``save_every`` steps.
    """
    if numba_enabled():
        return _poly_run_nb(*args)
    return _poly_run_np(*args)


# ---- particle in the plane near a closed curve --------------------------

@_njit
def _cos_val(coef, theta):
    # cos(k theta) by the angle-addition recurrence
    c1, s1 = math.cos(theta), math.sin(theta)
    ck, sk = 1.0, 0.0
    v = 0.0
    for k in range(coef.size):
        v += coef[k] * ck
        ck, sk = ck * c1 - sk * s1, sk * c1 + ck * s1
    return v


@_njit
def _cos_der(coef, theta):
    c1, s1 = math.cos(theta), math.sin(theta)
    ck, sk = 1.0, 0.0
    v = 0.0
    for k in range(coef.size):
        v -= k * coef[k] * sk
        ck, sk = ck * c1 - sk * s1, sk * c1 + ck * s1
    return v


@_njit
def _project(x, y, tau, xc, xs, yc, ys, closed):
    """Closest-point projection; returns (tau, r, kappa, tx, ty)."""
    if not closed:
        return x, y, 0.0, 1.0, 0.0
    n = xc.size
    cx = cy = dx = dy = ddx = ddy = 0.0
    for it in range(40):
        cx = cy = dx = dy = ddx = ddy = 0.0
        c1 = math.cos(tau)
        s1 = math.sin(tau)
        ck, sk = 1.0, 0.0
        for k in range(n):
            cx += xc[k] * ck + xs[k] * sk
            cy += yc[k] * ck + ys[k] * sk
            dx += k * (xs[k] * ck - xc[k] * sk)
            dy += k * (ys[k] * ck - yc[k] * sk)
            ddx -= k * k * (xc[k] * ck + xs[k] * sk)
            ddy -= k * k * (yc[k] * ck + ys[k] * sk)
            ck, sk = ck * c1 - sk * s1, sk * c1 + ck * s1
        ex = cx - x
        ey = cy - y
        f = ex * dx + ey * dy
        fp = dx * dx + dy * dy + ex * ddx + ey * ddy
        step = f / fp
        tau -= step
        if abs(step) < 1e-13:
            break
    # one last evaluation is skipped: the step is below rounding
    sp = math.sqrt(dx * dx + dy * dy)
    tx = dx / sp
    ty = dy / sp
    r = (x - cx) * (-ty) + (y - cy) * tx
    kappa = (dx * ddy - dy * ddx) / (sp * sp * sp)
    return tau, r, kappa, tx, ty


@_njit
def _curve_state(x, y, px, py, tau, lam, geo, xc, xs, yc, ys, om, bc, cc, vs):
    """Projection, energy and force at one phase-space point."""
    closed = geo[1] > 0.5
    period = geo[0]
    tau, r, kappa, tx, ty = _project(x, y, tau, xc, xs, yc, ys, closed)
    scale = 2.0 * math.pi / period
    th = tau if closed else x * scale
    w = _cos_val(om, th)
    bb = _cos_val(bc, th)
    c4 = _cos_val(cc, th)
    dw = _cos_der(om, th) * scale
    db = _cos_der(bc, th) * scale
    dc = _cos_der(cc, th) * scale
    r2 = r * r
    u = _cos_val(vs, th) + lam * (0.5 * w * w * r2 + bb * r2 * r + c4 * r2 * r2)
    du_s = _cos_der(vs, th) * scale + lam * (w * dw * r2 + db * r2 * r + dc * r2 * r2)
    du_r = lam * (w * w * r + 3.0 * bb * r2 + 4.0 * c4 * r2 * r)
    jac = 1.0 - kappa * r
    nx = -ty
    ny = tx
    fx = -du_s * tx / jac - du_r * nx
    fy = -du_s * ty / jac - du_r * ny
    e = 0.5 * (px * px + py * py) + u
    return tau, r, jac, tx, ty, fx, fy, e


@_njit
def _curve_run_nb(x0, y0, px0, py0, tau0, dt, n_steps, save_every, kick, drift, geo,
                  xc, xs, yc, ys, om, bc, cc, vs, lam0, lam1, t_start, duration):
    n_b = x0.size
    n_save = n_steps // save_every + 1
    out = np.empty((6, n_save, n_b))  # s, r, p_s, p_r, energy, min jacobian so far
    ts = np.empty(n_save)
    n_st = drift.size
    period = geo[0]
    closed = geo[1] > 0.5
    for j in range(n_b):
        x = x0[j]
        y = y0[j]
        px = px0[j]
        py = py0[j]
        tau = tau0[j]
        t = 0.0
        jmin = 1.0
        lam = _ramp(t, lam0, lam1, t_start, duration)
        tau, r, jac, tx, ty, fx, fy, e = _curve_state(x, y, px, py, tau, lam, geo, xc, xs, yc, ys,
                                                      om, bc, cc, vs)
        k = 0
        for step in range(n_steps + 1):
            if step > 0:
                for i in range(n_st):
                    px += kick[i] * dt * fx
                    py += kick[i] * dt * fy
                    x += drift[i] * dt * px
                    y += drift[i] * dt * py
                    t += drift[i] * dt
                    lam = _ramp(t, lam0, lam1, t_start, duration)
                    tau, r, jac, tx, ty, fx, fy, e = _curve_state(
                        x, y, px, py, tau, lam, geo, xc, xs, yc, ys, om, bc, cc, vs)
                    if jac < jmin:
                        jmin = jac
                px += kick[n_st] * dt * fx
                py += kick[n_st] * dt * fy
            if step % save_every == 0:
                t = step * dt
                lam = _ramp(t, lam0, lam1, t_start, duration)
                tau, r, jac, tx, ty, fx, fy, e = _curve_state(
                    x, y, px, py, tau, lam, geo, xc, xs, yc, ys, om, bc, cc, vs)
                ptan = px * tx + py * ty
                out[0, k, j] = tau * period / (2.0 * math.pi) if closed else x
                out[1, k, j] = r
                out[2, k, j] = jac * ptan
                out[3, k, j] = -px * ty + py * tx
                out[4, k, j] = e
                out[5, k, j] = jmin
                ts[k] = t
                k += 1
    return ts, out


class _CurveNP:
    """Vectorized counterpart of the scalar curve kernels."""

    def __init__(self, geo, xc, xs, yc, ys, om, bc, cc, vs):
        self.period = geo[0]
        self.closed = geo[1] > 0.5
        self.k = np.arange(xc.size, dtype=float)
        self.xc, self.xs, self.yc, self.ys = xc, xs, yc, ys
        self.coefs = (om, bc, cc, vs)

    def _series(self, coef, th):
        k = np.arange(coef.size, dtype=float)
        kt = np.multiply.outer(th, k)
        return np.cos(kt) @ coef, -(np.sin(kt) @ (k * coef))

    def state(self, x, y, px, py, tau, lam):
        if self.closed:
            k = self.k
            for _ in range(40):
                kt = np.multiply.outer(tau, k)
                ck, sk = np.cos(kt), np.sin(kt)
                cx = ck @ self.xc + sk @ self.xs
                cy = ck @ self.yc + sk @ self.ys
                dx = ck @ (k * self.xs) - sk @ (k * self.xc)
                dy = ck @ (k * self.ys) - sk @ (k * self.yc)
                ddx = -(ck @ (k * k * self.xc) + sk @ (k * k * self.xs))
                ddy = -(ck @ (k * k * self.yc) + sk @ (k * k * self.ys))
                ex, ey = cx - x, cy - y
                step = (ex * dx + ey * dy) / (dx * dx + dy * dy + ex * ddx + ey * ddy)
                tau = tau - step
                if np.max(np.abs(step)) < 1e-13:
                    break
            sp = np.hypot(dx, dy)
            tx, ty = dx / sp, dy / sp
            r = (x - cx) * (-ty) + (y - cy) * tx
            kappa = (dx * ddy - dy * ddx) / sp**3
            th = tau
        else:
            tau, r, kappa = x, y, np.zeros_like(x)
            tx, ty = np.ones_like(x), np.zeros_like(x)
            th = x * (2 * np.pi / self.period)
        scale = 2 * np.pi / self.period
        (w, dw), (bb, db), (c4, dc), (v, dv) = (self._series(c, th) for c in self.coefs)
        r2 = r * r
        u = v + lam * (0.5 * w * w * r2 + bb * r2 * r + c4 * r2 * r2)
        du_s = scale * (dv + lam * (w * dw * r2 + db * r2 * r + dc * r2 * r2))
        du_r = lam * (w * w * r + 3 * bb * r2 + 4 * c4 * r2 * r)
        jac = 1.0 - kappa * r
        fx = -du_s * tx / jac + du_r * ty
        fy = -du_s * ty / jac - du_r * tx
        e = 0.5 * (px * px + py * py) + u
        return tau, r, jac, tx, ty, fx, fy, e


def _curve_run_np(x0, y0, px0, py0, tau0, dt, n_steps, save_every, kick, drift, geo,
                  xc, xs, yc, ys, om, bc, cc, vs, lam0, lam1, t_start, duration):
    model = _CurveNP(geo, xc, xs, yc, ys, om, bc, cc, vs)
    x, y, px, py, tau = (np.array(v, dtype=float) for v in (x0, y0, px0, py0, tau0))
    n_save = n_steps // save_every + 1
    out = np.empty((6, n_save, x.size))
    ts = np.empty(n_save)
    t = 0.0
    jmin = np.ones_like(x)
    st = model.state(x, y, px, py, tau, _ramp_np(t, lam0, lam1, t_start, duration))
    k = 0
    for step in range(n_steps + 1):
        if step > 0:
            for i in range(drift.size):
                px = px + kick[i] * dt * st[5]
                py = py + kick[i] * dt * st[6]
                x = x + drift[i] * dt * px
                y = y + drift[i] * dt * py
                t += drift[i] * dt
                st = model.state(x, y, px, py, st[0], _ramp_np(t, lam0, lam1, t_start, duration))
                jmin = np.minimum(jmin, st[2])
            px = px + kick[-1] * dt * st[5]
            py = py + kick[-1] * dt * st[6]
        if step % save_every == 0:
            t = step * dt
            st = model.state(x, y, px, py, st[0], _ramp_np(t, lam0, lam1, t_start, duration))
            tau, r, jac, tx, ty, _, _, e = st
            out[0, k] = tau * model.period / (2 * np.pi) if model.closed else x
            out[1, k] = r
            out[2, k] = jac * (px * tx + py * ty)
            out[3, k] = -px * ty + py * tx
            out[4, k] = e
            out[5, k] = jmin
            ts[k] = t
            k += 1
    return ts, out


def curve_run(*args):
    """Integrate a batch of planar trajectories near a curve.

    Returns ``(t, out)`` with ``out[:, k, j] = (s, r, p_s, p_r, energy, min 1-kappa r)``.
    """
    if numba_enabled():
        return _curve_run_nb(*args)
    return _curve_run_np(*args)
