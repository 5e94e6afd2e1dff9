"""Time the numba kernels against the pure-numpy fallback on the same batches.

Usage: python benchmarks/bench_kernels.py [--batch N] [--periods P] [--repeat R]
"""

from __future__ import annotations

import argparse
import math
import os
import time

import numpy as np

from limitquant import _kernels
from limitquant.classical import CurveHamiltonian, PolyWell, Ramp, WellHamiltonian, integrate
from limitquant.geometry import EmbeddingCurve
from limitquant.potentials import ConfinementFamily, tune_harmonic


def _timed(fn, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _with_backend(numpy_only: bool, fn):
    old = os.environ.get(_kernels.ENV_FLAG)
    os.environ[_kernels.ENV_FLAG] = "1" if numpy_only else "0"
    try:
        return fn()
    finally:
        if old is None:
            del os.environ[_kernels.ENV_FLAG]
        else:
            os.environ[_kernels.ENV_FLAG] = old


def well_case(batch, periods):
    well = PolyWell(1.0, 0.0, 0.1)
    ham = WellHamiltonian(well, Ramp(1.0, 4.0, periods * 2 * math.pi))
    phase = np.linspace(0, 2 * np.pi, batch, endpoint=False)
    q0, p0 = np.cos(phase), np.sin(phase)
    t_final = (periods + 2) * 2 * math.pi
    return lambda: integrate(ham, (q0, p0), t_final, 2 * math.pi / 400, order=6, save_every=100).energy


def curve_case(batch, periods):
    curve = EmbeddingCurve.ellipse(1.2, 0.8)
    fam = tune_harmonic(ConfinementFamily(period=curve.period, quartic=(0.3, 0.3)))
    ham = CurveHamiltonian(curve, fam, Ramp.static(1e3))
    s0 = np.linspace(0, curve.period, batch, endpoint=False)
    pr0 = np.full(batch, 1.0)
    state = (s0, np.zeros(batch), np.ones(batch), pr0)
    omega = math.sqrt(1e3)
    t_final = periods * 2 * math.pi / omega
    return lambda: integrate(ham, state, t_final, 2 * math.pi / omega / 200, order=6, save_every=100).energy


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--periods", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _kernels._HAVE_NUMBA:
        print("numba is not installed; only the numpy path is available")
    print(f"{'case':10s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max |dE|':>10s}")
    for name, make in (("well", well_case), ("curve", curve_case)):
        fn = make(args.batch, args.periods)
        _with_backend(False, fn)  # compile outside the timing
        t_nb, e_nb = _with_backend(False, lambda: _timed(fn, args.repeat))
        t_np, e_np = _with_backend(True, lambda: _timed(fn, args.repeat))
        diff = float(np.max(np.abs(e_nb - e_np)))
        print(f"{name:10s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
