"""Hierarchical prior over the demand-model and transition parameters.

The prior couples the two regions through shared latent means: intercepts,
weather coefficients, weekday and annual Fourier coefficients and holiday
effects are exchangeable across regions around region-free means, with fixed
variance/correlation hyperparameters. The holiday-effect decay factors get an
asymmetric hierarchy on the logit scale: the two mean-decay factors are more
strongly tied to each other than either is to the precision-decay factor.

Marginal moments implied by the decay hierarchy (logit scale):
``Var = v_decay`` for the mean decays, ``Cor = r_decay_1`` between them, and
``Cor = sqrt(r_decay_1) * r_decay_2`` between a mean decay and the precision
decay.

Hyperparameters are plain data, configurable from a flat ``key = value`` text
file; unknown keys are rejected. Transition-coefficient prior variances are
capped at 1 to keep the implied transition-probability priors unimodal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .emission import EmissionParams
from .states import ModelMode, TransitionParams

LOG_2PI = math.log(2.0 * math.pi)


class ConfigError(ValueError):
    """Raised for malformed or unknown configuration entries."""


@dataclass(frozen=True)
class HyperLatents:
    """Latent hyperprior means shared between the two regions."""

    mu_level: float
    mu_weather: np.ndarray      # (2,)
    mu_weekday: np.ndarray      # (2, 3) cos/sin x harmonic
    mu_annual: np.ndarray       # (2, K)
    mu_holiday: np.ndarray      # (3,)
    logit_decay_mean: float     # shared centre of the two mean-decay logits
    mu_logit_decay: float       # grand mean of the decay hierarchy


@dataclass(frozen=True)
class Hyperparameters:
    """Every fixed prior constant, in model units."""

    k_annual: int
    k_prec_annual: int
    m_trans: np.ndarray         # (7,)
    v_trans: np.ndarray         # (7,), each in (0, 1]
    a_ar: np.ndarray            # (2,)
    b_ar: np.ndarray            # (2,)
    m_level: float
    v_level: float
    r_level: float
    m_weather: np.ndarray       # (2,)
    v_weather: np.ndarray       # (2,)
    r_weather: np.ndarray       # (2,)
    v_weekday: float
    r_weekday: float
    v_annual: np.ndarray        # (K,), non-increasing
    r_annual: float
    v_holiday: float
    c_holiday: float            # compound-symmetry correlation of the 3x3 block
    r_holiday: float
    m_decay: float
    v_decay: float
    r_decay_1: float
    r_decay_2: float
    m_prec_base: np.ndarray     # (3,)
    v_prec_base: np.ndarray     # (3,)
    v_prec_holiday: np.ndarray  # (3,)
    v_prec_annual: np.ndarray   # (3, Kp)

    def __post_init__(self):
        def pos(name, x):
            if np.any(np.asarray(x) <= 0.0):
                raise ConfigError(f"{name} must be positive")

        def corr(name, x):
            x = np.asarray(x)
            if np.any(x <= 0.0) or np.any(x >= 1.0):
                raise ConfigError(f"{name} must lie in (0, 1)")

        if self.m_trans.shape != (7,) or self.v_trans.shape != (7,):
            raise ConfigError("transition prior moments must have length 7")
        pos("v_trans", self.v_trans)
        if np.any(self.v_trans > 1.0):
            raise ConfigError("v_trans entries above 1 give bimodal transition priors")
        pos("a_ar", self.a_ar)
        pos("b_ar", self.b_ar)
        pos("v_level", self.v_level)
        corr("r_level", self.r_level)
        pos("v_weather", self.v_weather)
        corr("r_weather", self.r_weather)
        pos("v_weekday", self.v_weekday)
        corr("r_weekday", self.r_weekday)
        if self.v_annual.shape != (self.k_annual,):
            raise ConfigError("v_annual must have k_annual entries")
        pos("v_annual", self.v_annual)
        if np.any(np.diff(self.v_annual) > 0.0):
            raise ConfigError("v_annual must be non-increasing in the harmonic")
        corr("r_annual", self.r_annual)
        pos("v_holiday", self.v_holiday)
        corr("c_holiday", self.c_holiday)
        corr("r_holiday", self.r_holiday)
        pos("v_decay", self.v_decay)
        corr("r_decay_1", self.r_decay_1)
        corr("r_decay_2", self.r_decay_2)
        pos("v_prec_base", self.v_prec_base)
        pos("v_prec_holiday", self.v_prec_holiday)
        if self.v_prec_annual.shape != (3, self.k_prec_annual):
            raise ConfigError("v_prec_annual must be (3, k_prec_annual)")
        pos("v_prec_annual", self.v_prec_annual)

    def holiday_cov(self) -> np.ndarray:
        """Compound-symmetric 3x3 covariance of the holiday-effect block."""
        c = self.c_holiday
        return self.v_holiday * ((1.0 - c) * np.eye(3) + c * np.ones((3, 3)))


def default_hyperparameters(
    mode: str = "weak", k_annual: int = 6, k_prec_annual: int = 12
) -> Hyperparameters:
    """Documented presets.

    ``weak``: zero-centred, transition-coefficient variances at the unimodality
    bound, broad everything else. ``paper-like``: identical demand-model prior,
    but transition-coefficient means tuned so the prior state chain confines
    proximity behaviour to roughly the two days around each holiday.
    """
    if mode not in ("weak", "paper-like"):
        raise ConfigError(f"unknown preset {mode!r}")
    m_trans = np.zeros(7)
    if mode == "paper-like":
        m_trans = np.array([0.0, -20.0, 1.0, 15.0, -1.0, 0.0, 1.0])
    decay_gamma = 0.5 ** np.arange(k_annual)
    decay_kappa = 0.7 ** np.arange(k_prec_annual)
    return Hyperparameters(
        k_annual=k_annual,
        k_prec_annual=k_prec_annual,
        m_trans=m_trans,
        v_trans=np.ones(7),
        a_ar=np.array([2.0, 2.0]),
        b_ar=np.array([2.0, 2.0]),
        m_level=0.0,
        v_level=25.0,
        r_level=0.5,
        m_weather=np.zeros(2),
        v_weather=np.array([1.0, 0.01]),
        r_weather=np.array([0.5, 0.5]),
        v_weekday=0.25,
        r_weekday=0.5,
        v_annual=0.5 * decay_gamma,
        r_annual=0.5,
        v_holiday=0.25,
        c_holiday=0.5,
        r_holiday=0.5,
        m_decay=0.0,
        v_decay=1.0,
        r_decay_1=0.5,
        r_decay_2=0.5,
        m_prec_base=np.zeros(3),
        v_prec_base=np.array([1.0, 25.0, 25.0]),
        v_prec_holiday=np.ones(3),
        v_prec_annual=np.tile(0.25 * decay_kappa, (3, 1)),
    )


# ---------------------------------------------------------------------------
# Density evaluation


def _norm_lpdf(x, m, v) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(-0.5 * (LOG_2PI + np.log(v)) - 0.5 * (x - m) ** 2 / v))


def _beta_lpdf(x: float, a: float, b: float) -> float:
    return (
        (a - 1.0) * math.log(x)
        + (b - 1.0) * math.log1p(-x)
        - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    )


def _mvn3_lpdf(x, m, cov) -> float:
    sign, logdet = np.linalg.slogdet(cov)
    d = np.asarray(x) - m
    quad = d @ np.linalg.solve(cov, d)
    return float(-1.5 * LOG_2PI - 0.5 * logdet - 0.5 * quad)


def _logit(x: float) -> float:
    return math.log(x) - math.log1p(-x)


def log_prior(
    emission: EmissionParams,
    trans: TransitionParams | None,
    latents: HyperLatents,
    hyper: Hyperparameters,
    mode: ModelMode = ModelMode.FOUR_STATE,
) -> float:
    """Joint log prior density of all parameters and hyper-latents.

    The density is taken with respect to the natural parameterisation: unit
    interval parameters contribute their logit-normal (decay) or beta (AR)
    densities directly. Support violations yield ``-inf`` rather than raising
    so that samplers can reject.
    """
    four = mode is ModelMode.FOUR_STATE
    ar = emission.ar_eig01
    if np.any(ar <= 0.0) or np.any(ar >= 1.0):
        return -np.inf
    if four:
        rho = np.concatenate([emission.decay_mean, [emission.decay_prec]])
        if np.any(rho <= 0.0) or np.any(rho >= 1.0):
            return -np.inf

    lp = 0.0
    if four:
        lp += _norm_lpdf(trans.as_array(), hyper.m_trans, hyper.v_trans)
    for i in range(2):
        lp += _beta_lpdf(float(ar[i]), float(hyper.a_ar[i]), float(hyper.b_ar[i]))

    lp += _norm_lpdf(emission.level, latents.mu_level, (1.0 - hyper.r_level) * hyper.v_level)
    lp += _norm_lpdf(latents.mu_level, hyper.m_level, hyper.r_level * hyper.v_level)

    for i in range(2):
        ri, vi = float(hyper.r_weather[i]), float(hyper.v_weather[i])
        lp += _norm_lpdf(emission.weather[:, i], latents.mu_weather[i], (1.0 - ri) * vi)
        lp += _norm_lpdf(latents.mu_weather[i], float(hyper.m_weather[i]), ri * vi)

    lp += _norm_lpdf(
        emission.weekday, latents.mu_weekday[None], (1.0 - hyper.r_weekday) * hyper.v_weekday
    )
    lp += _norm_lpdf(latents.mu_weekday, 0.0, hyper.r_weekday * hyper.v_weekday)

    v_ann = hyper.v_annual[None, None, :]
    lp += _norm_lpdf(emission.annual, latents.mu_annual[None], (1.0 - hyper.r_annual) * v_ann)
    lp += _norm_lpdf(latents.mu_annual, 0.0, hyper.r_annual * hyper.v_annual[None, :])

    v_beta = hyper.holiday_cov()
    for j in range(2):
        lp += _mvn3_lpdf(emission.holiday[j], latents.mu_holiday, (1.0 - hyper.r_holiday) * v_beta)
    lp += _mvn3_lpdf(latents.mu_holiday, np.zeros(3), hyper.r_holiday * v_beta)

    if four:
        v, r1, r2 = hyper.v_decay, hyper.r_decay_1, hyper.r_decay_2
        lrho = np.array([_logit(float(x)) for x in emission.decay_mean])
        lrho_p = _logit(emission.decay_prec)
        lp += _norm_lpdf(lrho, latents.logit_decay_mean, (1.0 - r1) * v)
        lp += _norm_lpdf(latents.logit_decay_mean, latents.mu_logit_decay, (1.0 - r2) * r1 * v)
        lp += _norm_lpdf(lrho_p, latents.mu_logit_decay, (1.0 - r2) * r1 * v)
        lp += _norm_lpdf(latents.mu_logit_decay, hyper.m_decay, r1 * r2 * v)
        # change of measure from logits to the (0, 1) decay values themselves
        for x in (*emission.decay_mean, emission.decay_prec):
            lp += -math.log(x) - math.log1p(-x)

    lp += _norm_lpdf(emission.prec_base, hyper.m_prec_base, hyper.v_prec_base)
    lp += _norm_lpdf(emission.prec_holiday, 0.0, hyper.v_prec_holiday)
    lp += _norm_lpdf(emission.prec_annual, 0.0, hyper.v_prec_annual[:, None, :])
    return lp


def sample_prior_batch(
    hyper: Hyperparameters,
    rng: np.random.Generator,
    n: int,
    mode: ModelMode = ModelMode.FOUR_STATE,
) -> dict:
    """``n`` exact prior draws as a dict of arrays with leading dimension n.

    Used directly for Monte Carlo checks of the prior's marginal moments;
    :func:`sample_prior` is the single-draw structured view.
    """
    four = mode is ModelMode.FOUR_STATE
    kg, kp = hyper.k_annual, hyper.k_prec_annual
    out = {}

    if four:
        out["trans"] = rng.normal(hyper.m_trans, np.sqrt(hyper.v_trans), size=(n, 7))

    out["ar_eig01"] = rng.beta(hyper.a_ar, hyper.b_ar, size=(n, 2))

    mu_level = rng.normal(hyper.m_level, math.sqrt(hyper.r_level * hyper.v_level), size=n)
    out["mu_level"] = mu_level
    out["level"] = rng.normal(
        mu_level[:, None], math.sqrt((1.0 - hyper.r_level) * hyper.v_level), size=(n, 2)
    )

    mu_weather = rng.normal(hyper.m_weather, np.sqrt(hyper.r_weather * hyper.v_weather), size=(n, 2))
    out["mu_weather"] = mu_weather
    out["weather"] = rng.normal(
        mu_weather[:, None, :],
        np.sqrt((1.0 - hyper.r_weather) * hyper.v_weather)[None, None, :],
        size=(n, 2, 2),
    )

    mu_weekday = rng.normal(0.0, math.sqrt(hyper.r_weekday * hyper.v_weekday), size=(n, 2, 3))
    out["mu_weekday"] = mu_weekday
    out["weekday"] = rng.normal(
        mu_weekday[:, None], math.sqrt((1.0 - hyper.r_weekday) * hyper.v_weekday), size=(n, 2, 2, 3)
    )

    mu_annual = rng.normal(
        0.0, np.sqrt(hyper.r_annual * hyper.v_annual)[None, :], size=(n, 2, kg)
    )
    out["mu_annual"] = mu_annual
    out["annual"] = rng.normal(
        mu_annual[:, None],
        np.sqrt((1.0 - hyper.r_annual) * hyper.v_annual)[None, None, None, :],
        size=(n, 2, 2, kg),
    )

    v_beta = hyper.holiday_cov()
    chol_hyper = np.linalg.cholesky(hyper.r_holiday * v_beta)
    chol_cond = np.linalg.cholesky((1.0 - hyper.r_holiday) * v_beta)
    mu_holiday = rng.standard_normal((n, 3)) @ chol_hyper.T
    out["mu_holiday"] = mu_holiday
    out["holiday"] = (
        mu_holiday[:, None, :] + rng.standard_normal((n, 2, 3)) @ chol_cond.T
    )

    if four:
        v, r1, r2 = hyper.v_decay, hyper.r_decay_1, hyper.r_decay_2
        mu_ld = rng.normal(hyper.m_decay, math.sqrt(r1 * r2 * v), size=n)
        ld_mean = rng.normal(mu_ld, math.sqrt((1.0 - r2) * r1 * v))
        ld_prec = rng.normal(mu_ld, math.sqrt((1.0 - r2) * r1 * v))
        lrho = rng.normal(ld_mean[:, None], math.sqrt((1.0 - r1) * v), size=(n, 2))
        out["mu_logit_decay"] = mu_ld
        out["logit_decay_mean"] = ld_mean
        out["logit_decay"] = np.concatenate([lrho, ld_prec[:, None]], axis=1)
        out["decay_mean"] = 1.0 / (1.0 + np.exp(-lrho))
        out["decay_prec"] = 1.0 / (1.0 + np.exp(-ld_prec))

    out["prec_base"] = rng.normal(hyper.m_prec_base, np.sqrt(hyper.v_prec_base), size=(n, 3))
    out["prec_holiday"] = rng.normal(0.0, np.sqrt(hyper.v_prec_holiday), size=(n, 3))
    out["prec_annual"] = rng.normal(
        0.0, np.sqrt(hyper.v_prec_annual)[None, :, None, :], size=(n, 3, 2, kp)
    )
    return out


def sample_prior(
    hyper: Hyperparameters,
    rng: np.random.Generator,
    mode: ModelMode = ModelMode.FOUR_STATE,
):
    """One exact draw of (EmissionParams, TransitionParams | None, HyperLatents)."""
    four = mode is ModelMode.FOUR_STATE
    d = sample_prior_batch(hyper, rng, 1, mode)
    trans = TransitionParams.from_array(d["trans"][0]) if four else None
    emission = EmissionParams(
        ar_eig01=d["ar_eig01"][0],
        level=d["level"][0],
        holiday=d["holiday"][0],
        annual=d["annual"][0],
        weekday=d["weekday"][0],
        weather=d["weather"][0],
        decay_mean=d["decay_mean"][0] if four else np.array([0.5, 0.5]),
        decay_prec=float(d["decay_prec"][0]) if four else 0.5,
        prec_base=d["prec_base"][0],
        prec_holiday=d["prec_holiday"][0],
        prec_annual=d["prec_annual"][0],
    )
    latents = HyperLatents(
        mu_level=float(d["mu_level"][0]),
        mu_weather=d["mu_weather"][0],
        mu_weekday=d["mu_weekday"][0],
        mu_annual=d["mu_annual"][0],
        mu_holiday=d["mu_holiday"][0],
        logit_decay_mean=float(d["logit_decay_mean"][0]) if four else 0.0,
        mu_logit_decay=float(d["mu_logit_decay"][0]) if four else 0.0,
    )
    return emission, trans, latents


# ---------------------------------------------------------------------------
# Flat configuration file


_VECTOR_KEYS = {"v_annual", "v_prec_annual_1", "v_prec_annual_2", "v_prec_annual_3"}
_TRANS = ("to_pre_const", "to_pre_dist", "to_normal_const", "to_normal_days",
          "to_normal_eve", "to_post_const", "to_post_gap2")


def config_keys() -> tuple[str, ...]:
    """Every key the configuration file accepts."""
    keys = ["preset", "k_annual", "k_prec_annual"]
    keys += [f"m_{n}" for n in _TRANS] + [f"v_{n}" for n in _TRANS]
    keys += ["a_ar_1", "a_ar_2", "b_ar_1", "b_ar_2"]
    keys += ["m_level", "v_level", "r_level"]
    keys += ["m_weather_1", "m_weather_2", "v_weather_1", "v_weather_2",
             "r_weather_1", "r_weather_2"]
    keys += ["v_weekday", "r_weekday", "v_annual", "r_annual"]
    keys += ["v_holiday", "c_holiday", "r_holiday"]
    keys += ["m_decay", "v_decay", "r_decay_1", "r_decay_2"]
    keys += [f"m_prec_base_{i}" for i in (1, 2, 3)]
    keys += [f"v_prec_base_{i}" for i in (1, 2, 3)]
    keys += [f"v_prec_holiday_{i}" for i in (1, 2, 3)]
    keys += [f"v_prec_annual_{i}" for i in (1, 2, 3)]
    return tuple(keys)


def parse_config(path) -> dict:
    """Parse a ``key = value`` file; values are numbers or comma-separated lists."""
    known = set(config_keys())
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            if key == "preset":
                out[key] = value
            elif "," in value or key in _VECTOR_KEYS:
                try:
                    out[key] = tuple(float(v) for v in value.split(","))
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: bad list for {key!r}") from exc
            else:
                try:
                    out[key] = float(value)
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: bad number for {key!r}") from exc
    return out


def hyperparameters_from_config(cfg: dict) -> Hyperparameters:
    """Build hyperparameters from a parsed config, starting from a preset.

    Any key not present falls back to the preset value (``preset`` defaults to
    ``paper-like``).
    """
    cfg = dict(cfg)
    preset = cfg.pop("preset", "paper-like")
    kg = int(cfg.pop("k_annual", 6))
    kp = int(cfg.pop("k_prec_annual", 12))
    base = default_hyperparameters(preset, k_annual=kg, k_prec_annual=kp)
    if not cfg:
        return base

    def take(key, default):
        return cfg.pop(key, default)

    m_trans = np.array([take(f"m_{n}", base.m_trans[i]) for i, n in enumerate(_TRANS)])
    v_trans = np.array([take(f"v_{n}", base.v_trans[i]) for i, n in enumerate(_TRANS)])
    va = take("v_annual", tuple(base.v_annual))
    va = np.atleast_1d(np.asarray(va, dtype=np.float64))
    vpa = np.stack(
        [
            np.atleast_1d(np.asarray(take(f"v_prec_annual_{i + 1}", tuple(base.v_prec_annual[i])), dtype=np.float64))
            for i in range(3)
        ]
    )
    hyper = Hyperparameters(
        k_annual=kg,
        k_prec_annual=kp,
        m_trans=m_trans,
        v_trans=v_trans,
        a_ar=np.array([take("a_ar_1", base.a_ar[0]), take("a_ar_2", base.a_ar[1])]),
        b_ar=np.array([take("b_ar_1", base.b_ar[0]), take("b_ar_2", base.b_ar[1])]),
        m_level=take("m_level", base.m_level),
        v_level=take("v_level", base.v_level),
        r_level=take("r_level", base.r_level),
        m_weather=np.array([take("m_weather_1", base.m_weather[0]), take("m_weather_2", base.m_weather[1])]),
        v_weather=np.array([take("v_weather_1", base.v_weather[0]), take("v_weather_2", base.v_weather[1])]),
        r_weather=np.array([take("r_weather_1", base.r_weather[0]), take("r_weather_2", base.r_weather[1])]),
        v_weekday=take("v_weekday", base.v_weekday),
        r_weekday=take("r_weekday", base.r_weekday),
        v_annual=va,
        r_annual=take("r_annual", base.r_annual),
        v_holiday=take("v_holiday", base.v_holiday),
        c_holiday=take("c_holiday", base.c_holiday),
        r_holiday=take("r_holiday", base.r_holiday),
        m_decay=take("m_decay", base.m_decay),
        v_decay=take("v_decay", base.v_decay),
        r_decay_1=take("r_decay_1", base.r_decay_1),
        r_decay_2=take("r_decay_2", base.r_decay_2),
        m_prec_base=np.array([take(f"m_prec_base_{i + 1}", base.m_prec_base[i]) for i in range(3)]),
        v_prec_base=np.array([take(f"v_prec_base_{i + 1}", base.v_prec_base[i]) for i in range(3)]),
        v_prec_holiday=np.array([take(f"v_prec_holiday_{i + 1}", base.v_prec_holiday[i]) for i in range(3)]),
        v_prec_annual=vpa,
    )
    if cfg:
        raise ConfigError(f"unknown configuration keys: {sorted(cfg)}")
    return hyper


def load_hyperparameters(path) -> Hyperparameters:
    return hyperparameters_from_config(parse_config(path))


def hyperparameters_to_dict(hyper: Hyperparameters) -> dict:
    """JSON-friendly snapshot for run manifests."""
    out = {}
    for f in fields(hyper):
        v = getattr(hyper, f.name)
        out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
    return out
