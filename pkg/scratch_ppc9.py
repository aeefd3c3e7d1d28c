"""Scratch: criterion-9 dry run (deleted before ship)."""
import datetime as dt
import time

import numpy as np

from demandhmm.covariates import build_covariates, smooth_cwv_baseline
from demandhmm.generative import default_truth, simulate, sinusoidal_cwv, uk_holiday_calendar
from demandhmm.ppc import coverage_by_gap, posterior_predictive_replicates
from demandhmm.priors import default_hyperparameters
from demandhmm.sampler import SamplerConfig, run_mcmc
from demandhmm.states import ModelMode

rng = np.random.default_rng(2024)
T = 1500
dates = [dt.date(2019, 1, 2) + dt.timedelta(days=i) for i in range(T)]
cal = uk_holiday_calendar(2018, 2026)
cwv = sinusoidal_cwv(dates, rng)
cov = build_covariates(dates, cal, cwv, smooth_cwv_baseline(dates, cwv, 10))
emission, trans, latents = default_truth()
sim = simulate(emission, trans, cov, seed=99)
hyper = default_hyperparameters("paper-like")

t0 = time.time()
cfg4 = SamplerConfig(n_chains=4, n_iterations=4000, thin=10, algorithm="hmc", seed=31)
draws4, dg4 = run_mcmc(sim.y, cov, hyper, cfg4)
print(f"four_state fit {((time.time()-t0)/60):.1f} min rhat={dg4.max_rhat:.3f}")

t0 = time.time()
cfg2 = SamplerConfig(n_chains=4, n_iterations=2000, thin=10, algorithm="hmc", seed=47)
draws2, dg2 = run_mcmc(sim.y, cov, hyper, cfg2, ModelMode.TWO_STATE)
print(f"two_state fit {((time.time()-t0)/60):.1f} min rhat={dg2.max_rhat:.3f}")

reps4 = posterior_predictive_replicates(draws4, sim.y, cov, ModelMode.FOUR_STATE, seed=555)
reps2 = posterior_predictive_replicates(draws2, sim.y, cov, ModelMode.TWO_STATE, seed=555)
cov4 = coverage_by_gap(reps4, sim.y, cov)
cov2 = coverage_by_gap(reps2, sim.y, cov)
for label, s in (("four", cov4), ("two", cov2)):
    print(label, [(b, round(s.fraction_for(b), 4)) for b in s.bucket_labels])
g1_4 = cov4.fraction_for("1")
g1_2 = cov2.fraction_for("1")
print(f"gap-1 exceedance: four={g1_4:.4f} two={g1_2:.4f}")
gap1 = cov.gap[1:] == 1
bias2 = (reps2.mean(axis=0) - sim.y)[gap1].mean()
bias4 = (reps4.mean(axis=0) - sim.y)[gap1].mean()
print(f"gap-1 mean predictive bias: two={bias2:.4f} four={bias4:.4f}")
