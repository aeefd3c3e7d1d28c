"""Timing comparison of the compiled and interpreted kernel paths.

Runs the forward filter, backward smoother and simulator on a synthetic
dataset through both the numba-compiled kernels (when available) and their
pure-python implementations, and prints per-call times. Usage::

    python -m demandhmm.benchmark [--days 1500] [--repeat 20]

The interpreted path is what runs when ``DEMANDHMM_NUMBA=0`` is set or
numba is not importable.
"""

from __future__ import annotations

import argparse
import datetime as dt
import time

import numpy as np

from . import kernels
from .accel import NUMBA_AVAILABLE, USE_NUMBA
from .covariates import build_covariates, smooth_cwv_baseline
from .emission import build_day_tables, build_design
from .generative import default_truth, simulate, sinusoidal_cwv, uk_holiday_calendar
from .states import log_initial_distribution, log_transition_tables, transition_matrix, initial_distribution


def _setup(days: int):
    rng = np.random.default_rng(0)
    start = dt.date(2019, 1, 2)
    dates = [start + dt.timedelta(days=i) for i in range(days)]
    cal = uk_holiday_calendar(2018, start.year + days // 365 + 1)
    cwv = sinusoidal_cwv(dates, rng)
    cov = build_covariates(dates, cal, cwv, smooth_cwv_baseline(dates, cwv, 10))
    emission, trans, _ = default_truth()
    sim = simulate(emission, trans, cov, seed=1)
    design = build_design(cov, emission.k_annual, emission.k_prec_annual)
    tables = build_day_tables(emission, design)
    loglam = log_transition_tables(trans, cov.n[1:], cov.p[1:])
    logl0 = log_initial_distribution(int(cov.n[0]), int(cov.p[0]))
    lam = np.stack(
        [transition_matrix(trans, int(n), int(p)) for n, p in zip(cov.n[1:], cov.p[1:])]
    )
    l0 = initial_distribution(int(cov.n[0]), int(cov.p[0]))
    return cov, sim, tables, loglam, logl0, lam, l0


def _time(fn, repeat: int) -> float:
    fn()  # warm up (numba compilation)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def run_benchmark(days: int = 1500, repeat: int = 20) -> dict:
    cov, sim, tb, loglam, logl0, lam, l0 = _setup(days)
    T = cov.T
    y = sim.y
    pa, pb = kernels._PAIR_A, kernels._PAIR_B
    msgs = np.empty((T, 11))
    lognorm = np.empty(T)
    smoothed = np.empty((T + 1, 4))
    rng = np.random.default_rng(2)
    u = rng.random(T + 1)
    z = rng.standard_normal((T, 2))
    states = np.empty(T + 1, dtype=np.int64)
    ysim = np.empty((T, 2))

    def fwd(kern):
        return lambda: kern(y, loglam, logl0, tb.mu, tb.phi, tb.tau1, tb.tau2,
                            tb.ltau1, tb.ltau2, tb.psi, tb.v_inv, tb.v_logdet,
                            pa, pb, msgs, lognorm)

    def bwd(kern):
        return lambda: kern(y, loglam, msgs, tb.mu, tb.phi, tb.tau1, tb.tau2,
                            tb.ltau1, tb.ltau2, tb.psi, pa, pb, smoothed)

    def sim_(kern):
        return lambda: kern(lam, l0, tb.mu, tb.phi, tb.tau1, tb.tau2, tb.psi,
                            tb.v_chol, u, z, False, 0, np.zeros(2), np.zeros(2),
                            states, ysim)

    fwd(kernels.forward_kernel)()  # fill msgs for the smoother timings
    results = {"days": days, "numba_enabled": USE_NUMBA, "numba_available": NUMBA_AVAILABLE}
    rows = [
        ("forward_filter", fwd(kernels.forward_kernel), fwd(kernels._forward_impl)),
        ("backward_smooth", bwd(kernels.backward_kernel), bwd(kernels._backward_impl)),
        ("simulate", sim_(kernels.simulate_kernel), sim_(kernels._simulate_impl)),
    ]
    for name, accel_fn, plain_fn in rows:
        t_plain = _time(plain_fn, max(1, repeat // 4))
        t_accel = _time(accel_fn, repeat) if USE_NUMBA else t_plain
        results[name] = {
            "python_s": t_plain,
            "numba_s": t_accel if USE_NUMBA else None,
            "speedup": (t_plain / t_accel) if USE_NUMBA else None,
        }
    return results


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--days", type=int, default=1500)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    res = run_benchmark(args.days, args.repeat)
    print(f"T = {res['days']} days; numba enabled: {res['numba_enabled']}")
    print(f"{'kernel':<18}{'python':>12}{'numba':>12}{'speedup':>10}")
    for name in ("forward_filter", "backward_smooth", "simulate"):
        r = res[name]
        numba_s = f"{r['numba_s'] * 1e3:9.3f} ms" if r["numba_s"] else "         -"
        speed = f"{r['speedup']:8.1f}x" if r["speedup"] else "       -"
        print(f"{name:<18}{r['python_s'] * 1e3:9.3f} ms{numba_s}{speed}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
