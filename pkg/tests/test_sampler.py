import datetime as dt

import numpy as np
import pytest

from demandhmm.diagnostics import ess_bulk, split_rhat
from demandhmm.filtering import log_likelihood
from demandhmm.generative import simulate
from demandhmm.jaxmodel import JaxPosterior
from demandhmm.paramspace import ParamSpace
from demandhmm.priors import default_hyperparameters, log_prior, sample_prior
from demandhmm.sampler import (
    NumpyPosterior,
    SamplerConfig,
    compute_diagnostics,
    run_mcmc,
)
from demandhmm.states import ModelMode

from helpers import make_cov, small_truth


@pytest.fixture(scope="module")
def problem():
    emission, trans, latents = small_truth()
    cov = make_cov(
        dt.date(2021, 2, 1), 40,
        [(dt.date(2021, 2, 8), 1), (dt.date(2021, 2, 20), 2)],
        rng=np.random.default_rng(0),
    )
    y = simulate(emission, trans, cov, seed=21).y
    hyper = default_hyperparameters("paper-like", 2, 2)
    space = ParamSpace(2, 2)
    return emission, trans, latents, cov, y, hyper, space


class TestLogPosterior:
    def test_composition(self, problem):
        emission, trans, latents, cov, y, hyper, space = problem
        post = NumpyPosterior(y, cov, hyper, space)
        u = space.pack(emission, trans, latents)
        expected = (
            log_likelihood(y, cov, emission, trans)
            + log_prior(emission, trans, latents, hyper)
            + space.log_jacobian(u)
        )
        assert post(u) == pytest.approx(expected, rel=1e-13)

    def test_purity(self, problem):
        *_, cov, y, hyper, space = problem
        emission, trans, latents = sample_prior(hyper, np.random.default_rng(3))
        post = NumpyPosterior(y, cov, hyper, space)
        u = space.pack(emission, trans, latents)
        assert post(u) == post(u)  # bitwise identical

    def test_numpy_and_jax_paths_agree(self, problem):
        *_, cov, y, hyper, space = problem
        np_post = NumpyPosterior(y, cov, hyper, space)
        jx_post = JaxPosterior(y, cov, hyper, space)
        rng = np.random.default_rng(4)
        for _ in range(20):
            emission, trans, latents = sample_prior(hyper, rng)
            u = space.pack(emission, trans, latents)
            a, b = np_post(u), jx_post.logpost(u)
            assert b == pytest.approx(a, rel=1e-9)

    def test_gradient_matches_finite_differences(self, problem):
        *_, cov, y, hyper, space = problem
        jx_post = JaxPosterior(y, cov, hyper, space)
        rng = np.random.default_rng(5)
        emission, trans, latents = sample_prior(hyper, rng)
        u0 = space.pack(emission, trans, latents)
        checked = 0
        for _ in range(20):
            u = u0 + 0.01 * rng.standard_normal(space.size)
            _, g = jx_post.logpost_and_grad(u)
            k = int(rng.integers(space.size))
            h = 1e-4 * max(1.0, abs(u[k]))
            e = np.zeros(space.size)
            e[k] = h
            fd = (jx_post.logpost(u + e) - jx_post.logpost(u - e)) / (2 * h)
            assert abs(g[k] - fd) <= 1e-5 * max(abs(g[k]), abs(fd), 1.0)
            checked += 1
        assert checked == 20

    def test_sensitivity_localised_to_post_holiday_transitions(self):
        # without any holiday inside or at the anchor day, the holiday-exit
        # coefficients cannot affect the likelihood
        emission, trans, _ = small_truth()
        cov_free = make_cov(dt.date(2021, 2, 1), 30, [], rng=np.random.default_rng(6))
        y_free = simulate(emission, trans, cov_free, seed=22).y
        cov_hol = make_cov(
            dt.date(2021, 2, 1), 30, [(dt.date(2021, 2, 10), 2)], rng=np.random.default_rng(6)
        )
        y_hol = simulate(emission, trans, cov_hol, seed=22).y
        h = 1e-4
        for field in ("to_post_const", "to_post_gap2"):
            up = type(trans)(**{**trans.__dict__, field: getattr(trans, field) + h})
            dn = type(trans)(**{**trans.__dict__, field: getattr(trans, field) - h})
            fd_free = log_likelihood(y_free, cov_free, emission, up) - log_likelihood(
                y_free, cov_free, emission, dn
            )
            assert fd_free == 0.0
        up = type(trans)(**{**trans.__dict__, "to_post_const": trans.to_post_const + h})
        dn = type(trans)(**{**trans.__dict__, "to_post_const": trans.to_post_const - h})
        fd_hol = log_likelihood(y_hol, cov_hol, emission, up) - log_likelihood(
            y_hol, cov_hol, emission, dn
        )
        assert fd_hol != 0.0

    def test_clamped_transform_keeps_posterior_finite(self, problem):
        # extreme unconstrained coordinates stay strictly inside the support
        *_, cov, y, hyper, space = problem
        post = NumpyPosterior(y, cov, hyper, space)
        emission, trans, latents = sample_prior(hyper, np.random.default_rng(7))
        u = space.pack(emission, trans, latents)
        u[space.slice("ar_eig01")] = 60.0
        assert np.isfinite(post(u))

    def test_invalid_vector_returns_minus_inf(self, problem):
        *_, cov, y, hyper, space = problem
        post = NumpyPosterior(y, cov, hyper, space)
        emission, trans, latents = sample_prior(hyper, np.random.default_rng(7))
        u = space.pack(emission, trans, latents)
        u[0] = np.nan
        assert post(u) == -np.inf


class TestRunMcmc:
    def test_rwm_deterministic(self, problem):
        *_, cov, y, hyper, space = problem
        cfg = SamplerConfig(
            n_chains=2, n_iterations=60, burn_in=0.5, thin=2,
            algorithm="adaptive-metropolis", seed=5,
        )
        d1, g1 = run_mcmc(y, cov, hyper, cfg)
        d2, g2 = run_mcmc(y, cov, hyper, cfg)
        assert np.array_equal(d1.free_draws, d2.free_draws)
        assert np.array_equal(d1.logpost, d2.logpost)
        assert np.array_equal(g1.accept_rate, g2.accept_rate)

    def test_hmc_deterministic(self, problem):
        *_, cov, y, hyper, space = problem
        cfg = SamplerConfig(
            n_chains=2, n_iterations=40, burn_in=0.5, thin=2, algorithm="hmc",
            seed=6, n_leapfrog=5,
        )
        d1, _ = run_mcmc(y, cov, hyper, cfg)
        d2, _ = run_mcmc(y, cov, hyper, cfg)
        assert np.array_equal(d1.free_draws, d2.free_draws)

    def test_retained_draw_count_and_provenance(self, problem):
        *_, cov, y, hyper, space = problem
        cfg = SamplerConfig(
            n_chains=2, n_iterations=80, burn_in=0.5, thin=4,
            algorithm="adaptive-metropolis", seed=7,
        )
        draws, _ = run_mcmc(y, cov, hyper, cfg)
        assert draws.n_draws == 2 * 10
        assert set(np.unique(draws.chain)) == {0, 1}
        assert np.all(draws.iteration >= 40)

    def test_every_retained_draw_has_finite_likelihood(self, problem):
        *_, cov, y, hyper, space = problem
        cfg = SamplerConfig(
            n_chains=2, n_iterations=60, burn_in=0.5, thin=3,
            algorithm="adaptive-metropolis", seed=8,
        )
        draws, _ = run_mcmc(y, cov, hyper, cfg)
        for i in range(draws.n_draws):
            emission, trans, _ = draws.params_at(i)
            assert np.isfinite(log_likelihood(y, cov, emission, trans))

    def test_free_subset_requires_base(self, problem):
        *_, cov, y, hyper, space = problem
        cfg = SamplerConfig(n_chains=1, n_iterations=20, free=["level"],
                            algorithm="adaptive-metropolis", seed=9)
        with pytest.raises(ValueError, match="base_params"):
            run_mcmc(y, cov, hyper, cfg)

    def test_two_state_mode_runs(self, problem):
        *_, cov, y, hyper, space = problem
        cfg = SamplerConfig(
            n_chains=2, n_iterations=40, burn_in=0.5, thin=2,
            algorithm="adaptive-metropolis", seed=10,
        )
        draws, _ = run_mcmc(y, cov, hyper, cfg, ModelMode.TWO_STATE)
        assert draws.mode is ModelMode.TWO_STATE
        assert "to_pre_const" not in draws.names


class TestDiagnostics:
    def test_iid_normal(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((4, 2000))
        assert 0.99 <= split_rhat(x) <= 1.01
        assert ess_bulk(x) >= 0.8 * x.size

    def test_constant_chains(self):
        x = np.tile(np.array([[1.0], [2.0], [3.0], [4.0]]), (1, 50))
        assert split_rhat(x) == np.inf
        assert ess_bulk(x) <= 8.0
        same = np.ones((4, 50))
        assert split_rhat(same) == 1.0

    def test_chain_label_permutation_invariant(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((4, 500)) + np.array([[0.0], [0.1], [0.0], [0.2]])
        perm = x[[2, 0, 3, 1]]
        assert split_rhat(x) == pytest.approx(split_rhat(perm), rel=1e-12)
        assert ess_bulk(x) == pytest.approx(ess_bulk(perm), rel=1e-12)

    def test_separated_chains_flagged(self):
        rng = np.random.default_rng(13)
        x = 0.1 * rng.standard_normal((4, 500))
        x[0] += 5.0
        assert split_rhat(x) > 1.5

    def test_compute_diagnostics_names(self, problem):
        *_, cov, y, hyper, space = problem
        cfg = SamplerConfig(
            n_chains=2, n_iterations=60, burn_in=0.5, thin=2,
            algorithm="adaptive-metropolis", seed=14,
        )
        draws, diag = run_mcmc(y, cov, hyper, cfg)
        assert set(diag.rhat) == set(draws.names)
        assert set(diag.ess) == set(draws.names)
        assert diag.n_retained == draws.n_draws
        payload = diag.to_dict()
        assert "max_rhat" in payload and "accept_rate" in payload
