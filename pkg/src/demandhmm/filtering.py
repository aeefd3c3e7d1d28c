"""Exact conditional-on-parameters state inference.

The observed-data log likelihood marginalises the hidden state path with a
forward filter on the 11-pair augmented chain; a backward pass turns the
stored forward messages into smoothed state marginals for days 0..T.
Rao-Blackwell averaging of the per-draw smoothed marginals over posterior
draws yields the reported state probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .covariates import CovariateSeries
from .emission import DayTables, DesignMatrices, EmissionParams, build_day_tables, build_design
from .states import ModelMode, TransitionParams, log_initial_distribution, log_transition_tables


@dataclass(frozen=True)
class ForwardMessages:
    """Per-day normalised log messages over the 11 pairs plus log increments.

    ``logsumexp(log_messages[t]) = 0`` by construction and
    ``lognorm[: t + 1].sum()`` is the log likelihood of the first t+1 days.
    """

    log_messages: np.ndarray   # (T, 11)
    lognorm: np.ndarray        # (T,)
    log_likelihood: float


@dataclass(frozen=True)
class SmoothedStates:
    """Smoothed four-state marginals for days 0..T, rows summing to one."""

    probs: np.ndarray          # (T+1, 4)


def _validate(y: np.ndarray, cov: CovariateSeries) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != 2:
        raise ValueError(f"log-demand must be (T, 2), got {y.shape}")
    if y.shape[0] != cov.T:
        raise ValueError(f"series length {y.shape[0]} does not match covariates ({cov.T})")
    if not np.all(np.isfinite(y)):
        raise ValueError("log-demand series contains NaN or infinite values")
    return y


def forward_filter(
    y: np.ndarray,
    cov: CovariateSeries,
    emission: EmissionParams,
    trans: TransitionParams | None,
    mode: ModelMode = ModelMode.FOUR_STATE,
    design: DesignMatrices | None = None,
    tables: DayTables | None = None,
):
    """Run the filter; returns ``(log_likelihood, ForwardMessages)``."""
    y = _validate(y, cov)
    if design is None:
        design = build_design(cov, emission.k_annual, emission.k_prec_annual)
    if tables is None:
        tables = build_day_tables(emission, design)
    loglam = log_transition_tables(trans, cov.n[1:], cov.p[1:], mode)
    logl0 = log_initial_distribution(int(cov.n[0]), int(cov.p[0]), mode)
    T = y.shape[0]
    msgs = np.empty((T, 11))
    lognorm = np.empty(T)
    loglik = kernels.forward_kernel(
        y, loglam, logl0, tables.mu, tables.phi, tables.tau1, tables.tau2,
        tables.ltau1, tables.ltau2, tables.psi, tables.v_inv, tables.v_logdet,
        kernels._PAIR_A, kernels._PAIR_B, msgs, lognorm,
    )
    return float(loglik), ForwardMessages(msgs, lognorm, float(loglik))


def log_likelihood(
    y, cov, emission, trans, mode=ModelMode.FOUR_STATE, design=None
) -> float:
    """Observed-data log likelihood (forward filter, messages discarded)."""
    loglik, _ = forward_filter(y, cov, emission, trans, mode, design)
    return loglik


def backward_smooth(
    messages: ForwardMessages,
    y: np.ndarray,
    cov: CovariateSeries,
    emission: EmissionParams,
    trans: TransitionParams | None,
    mode: ModelMode = ModelMode.FOUR_STATE,
    design: DesignMatrices | None = None,
    tables: DayTables | None = None,
) -> SmoothedStates:
    """Smoothed state marginals from stored forward messages."""
    y = _validate(y, cov)
    if messages.log_messages.shape != (y.shape[0], 11):
        raise ValueError("forward messages do not match the series length")
    if design is None:
        design = build_design(cov, emission.k_annual, emission.k_prec_annual)
    if tables is None:
        tables = build_day_tables(emission, design)
    loglam = log_transition_tables(trans, cov.n[1:], cov.p[1:], mode)
    smoothed = np.empty((y.shape[0] + 1, 4))
    kernels.backward_kernel(
        y, loglam, messages.log_messages, tables.mu, tables.phi, tables.tau1,
        tables.tau2, tables.ltau1, tables.ltau2, tables.psi,
        kernels._PAIR_A, kernels._PAIR_B, smoothed,
    )
    smoothed /= smoothed.sum(axis=1, keepdims=True)
    return SmoothedStates(probs=smoothed)


def smooth_states(
    y, cov, emission, trans, mode=ModelMode.FOUR_STATE, design=None
):
    """Filter and smooth in one call; returns ``(loglik, SmoothedStates)``."""
    if design is None:
        design = build_design(cov, emission.k_annual, emission.k_prec_annual)
    tables = build_day_tables(emission, design)
    loglik, messages = forward_filter(y, cov, emission, trans, mode, design, tables)
    smoothed = backward_smooth(messages, y, cov, emission, trans, mode, design, tables)
    return loglik, smoothed


def rao_blackwell_states(draws, y, cov, design=None) -> SmoothedStates:
    """Average per-draw smoothed marginals over retained posterior draws.

    ``draws`` is a ``sampler.PosteriorDraws``; the model mode travels with it.
    """
    if draws.n_draws < 1:
        raise ValueError("at least one posterior draw is required")
    y = _validate(y, cov)
    if design is None:
        space = draws.space
        design = build_design(cov, space.k_annual, space.k_prec_annual)
    total = np.zeros((y.shape[0] + 1, 4))
    for i in range(draws.n_draws):
        emission, trans, _ = draws.params_at(i)
        _, smoothed = smooth_states(y, cov, emission, trans, draws.mode, design)
        total += smoothed.probs
    total /= draws.n_draws
    return SmoothedStates(probs=total)
