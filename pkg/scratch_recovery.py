"""Scratch: desk-scale parameter recovery run (deleted before ship)."""
import datetime as dt
import sys
import time

import numpy as np

from demandhmm.covariates import build_covariates, smooth_cwv_baseline
from demandhmm.filtering import rao_blackwell_states
from demandhmm.generative import default_truth, simulate, sinusoidal_cwv, uk_holiday_calendar
from demandhmm.priors import default_hyperparameters
from demandhmm.sampler import SamplerConfig, run_mcmc
from demandhmm.states import ModelMode

T = int(sys.argv[1]) if len(sys.argv) > 1 else 600
iters = int(sys.argv[2]) if len(sys.argv) > 2 else 1500
mode = sys.argv[3] if len(sys.argv) > 3 else "four_state"

rng = np.random.default_rng(2024)
dates = [dt.date(2019, 1, 2) + dt.timedelta(days=i) for i in range(T)]
cal = uk_holiday_calendar(2018, 2026)
cwv = sinusoidal_cwv(dates, rng)
cov = build_covariates(dates, cal, cwv, smooth_cwv_baseline(dates, cwv, 10))
emission, trans, latents = default_truth()
sim = simulate(emission, trans, cov, seed=99)
print(f"T={T} holidays={int(cov.is_holiday.sum())} states:", np.bincount(sim.states, minlength=5)[1:])

hyper = default_hyperparameters("paper-like")
cfg = SamplerConfig(n_chains=4, n_iterations=iters, burn_in=0.5, thin=10,
                    algorithm="hmc", seed=31, n_leapfrog=16)
t0 = time.time()
draws, dg = run_mcmc(sim.y, cov, hyper, cfg, ModelMode(mode))
elapsed = time.time() - t0
print(f"fit: {elapsed/60:.1f} min, M={draws.n_draws}, div={dg.divergences}, accept={dg.accept_rate.round(2)}")
print(f"max R-hat = {dg.max_rhat:.4f}  min ESS = {dg.min_ess:.0f}")
worst = sorted(dg.rhat.items(), key=lambda kv: -kv[1])[:8]
print("worst rhat:", [(k, round(v, 3)) for k, v in worst])

if mode == "four_state":
    # truth coverage for the designated structural parameters
    space = draws.space
    u_truth = space.pack(emission, trans, latents)
    truth_con = space.constrained_values(u_truth)
    con = draws.constrained()
    designated = [
        "level_1", "level_2",
        "holiday_1_1", "holiday_1_2", "holiday_1_3",
        "holiday_2_1", "holiday_2_2", "holiday_2_3",
        "weather_1_1", "weather_2_1",
        "decay_mean_1", "decay_mean_2", "decay_prec",
        "prec_base_2", "prec_base_3", "prec_holiday_1",
        "to_pre_const", "to_pre_dist", "to_normal_const", "to_post_const",
    ]
    hits = 0
    for name in designated:
        k = draws.names.index(name)
        lo, hi = np.quantile(con[:, k], [0.05, 0.95])
        tv = truth_con[space.names.index(name)]
        ok = lo <= tv <= hi
        hits += ok
        print(f"  {name:<18} truth={tv: .4f} CI=[{lo: .4f},{hi: .4f}] {'OK' if ok else 'MISS'}")
    print(f"coverage: {hits}/20")

    sm = rao_blackwell_states(draws, sim.y, cov)
    mode_states = np.argmax(sm.probs, axis=1) + 1
    true = sim.states
    prox = np.isin(true, (1, 3))
    far4 = (true == 4) & (cov.gap > 5)
    acc_prox = (mode_states[prox] == true[prox]).mean()
    acc_far = (mode_states[far4] == true[far4]).mean()
    print(f"state recovery: prox {acc_prox:.3f} (n={prox.sum()}), far-normal {acc_far:.4f} (n={far4.sum()})")
