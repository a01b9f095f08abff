"""Gibbs sampler for the reconciliation model.

Each sweep draws the state path given the parameters and the data, then the
autoregressive coefficients given the states, then every shock variance
given the states and the coefficients. The state draw conditions on the
whole observation grid, so ``Z alpha_t = Y_t`` holds exactly in every draw.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import pandas as pd

from . import _kernels
from .exceptions import DegenerateModelError, InputError, SamplerError
from .filter import _STATUS_MESSAGES, _as_grid
from .ssm import (
    ParamVector,
    ReconConfig,
    StateSpaceModel,
    build_state_space,
    is_stationary,
    load_mapping,
    state_layout,
    theta_labels,
    theta_pack,
)

log = logging.getLogger(__name__)

MAX_STATIONARY_ATTEMPTS = 1000


@dataclass(frozen=True)
class McmcSettings:
    iterations: int = 100_000
    burn_in: int = 90_000
    thin: int = 10
    chains: int = 1
    seed: int = 0
    store_states: bool = True

    def __post_init__(self):
        for name in ("iterations", "thin", "chains"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise InputError(f"{name} must be a positive integer")
        if int(self.burn_in) != self.burn_in or not 0 <= self.burn_in < self.iterations:
            raise InputError("burn_in must be an integer in [0, iterations)")
        if int(self.seed) != self.seed or self.seed < 0:
            raise InputError("seed must be a nonnegative integer")

    @property
    def kept_per_chain(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    @property
    def n_kept(self) -> int:
        return self.chains * self.kept_per_chain

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class PriorSpec:
    """Priors: normal on the regression coefficients, inverse-gamma on variances.

    ``scale_priors`` maps a scale label (``sigma_e``, ``sigma_news_0_1`` ...)
    to an inverse-gamma ``(shape, rate)`` on its variance. Labels in
    ``restricted`` are pinned to zero: scales exactly, AR coefficients through
    a prior variance of ``restricted_var``. With ``config.center`` the
    ``mean_*`` entries are the normal prior on the regression intercept.
    """

    rho_mean: float = 0.0
    rho_var: float = 100.0
    mean_mean: float = 0.0
    mean_var: float = 100.0
    var_shape: float = 3.0
    var_rate: float = 2.0
    scale_priors: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    restricted: frozenset[str] = frozenset()
    restricted_var: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "restricted", frozenset(self.restricted))
        object.__setattr__(self, "scale_priors",
                           {k: (float(a), float(b)) for k, (a, b) in dict(self.scale_priors).items()})
        if self.rho_var <= 0 or self.mean_var <= 0:
            raise InputError("prior variances must be positive")
        if not 0 < self.restricted_var <= 1e-8:
            raise InputError("restricted_var must lie in (0, 1e-8]")
        for shape, rate in [(self.var_shape, self.var_rate), *self.scale_priors.values()]:
            if shape <= 0 or rate <= 0:
                raise InputError("inverse-gamma shape and rate must be positive")

    def inverse_gamma(self, label: str) -> tuple[float, float]:
        return self.scale_priors.get(label, (self.var_shape, self.var_rate))

    def restricted_labels(self, config: ReconConfig) -> frozenset[str]:
        out = set(self.restricted)
        if config.restrict_final_news:
            out |= {f"sigma_news_{s}_{config.l}" for s in range(2)}
        return frozenset(out)

    def check(self, config: ReconConfig) -> None:
        labels = set(theta_labels(config))
        bad = (set(self.restricted) | set(self.scale_priors)) - labels
        if bad:
            raise InputError(f"prior refers to unknown parameters: {sorted(bad)}")
        if "sigma_e" in self.restricted_labels(config):
            raise InputError("sigma_e cannot be restricted")

    def to_dict(self) -> dict[str, Any]:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["restricted"] = sorted(self.restricted)
        out["scale_priors"] = {k: list(v) for k, v in self.scale_priors.items()}
        return out

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> PriorSpec:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown prior keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "scale_priors" in kwargs:
            kwargs["scale_priors"] = {k: tuple(v) for k, v in kwargs["scale_priors"].items()}
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> PriorSpec:
        return cls.from_mapping(load_mapping(path))


# --- single conditional draws ----------------------------------------------

def draw_states(model: StateSpaceModel, obs, rng: np.random.Generator) -> np.ndarray:
    """Joint draw of ``alpha_1..alpha_T`` from ``p(alpha | Y, theta)``.

    Raises :class:`DegenerateModelError` if ``Y`` is impossible under the model.
    """
    y, mask = _as_grid(obs, model.n_obs)
    z0 = rng.standard_normal(model.m)
    eta = rng.standard_normal((max(y.shape[0] - 1, 0), model.r))
    draw, status, fail_t = _kernels.simulation_smoother_kernel(
        y, mask, np.ascontiguousarray(model.Z), np.ascontiguousarray(model.T), model.c,
        np.ascontiguousarray(model.R), model.a1, model.P1, model.initial_factor(), z0, eta, True,
    )
    if status != _kernels.STATUS_OK:
        raise DegenerateModelError(f"{_STATUS_MESSAGES[status]} (period index {fail_t})")
    return draw


def recover_shocks(states: np.ndarray, config: ReconConfig) -> dict[str, np.ndarray]:
    """Scaled shocks implied by a state path, for transitions ``t -> t+1``.

    ``news[t, s, i]`` is the contribution of news shock ``i`` of series ``s``
    to the truth at ``t+1``; ``noise`` holds the noise states themselves.
    Only valid without spillovers or cross loadings.
    """
    st = state_layout(config)
    nxt = states[1:]
    news = np.empty((nxt.shape[0], 2, config.l))
    noise = np.empty_like(news)
    for s in range(2):
        nu = nxt[:, st[f"news_{s}"]]
        news[:, s, :-1] = nu[:, 1:] - nu[:, :-1]
        news[:, s, -1] = -nu[:, -1]
        noise[:, s, :] = nxt[:, st[f"noise_{s}"]]
    return {"news": news, "noise": noise}


def _design(states: np.ndarray, config: ReconConfig) -> np.ndarray:
    X = states[:-1, :config.p]
    if config.center:
        X = np.column_stack([np.ones(X.shape[0]), X])
    return X


def draw_coefficients(states: np.ndarray, config: ReconConfig, priors: PriorSpec,
                      params: ParamVector, rng: np.random.Generator) -> tuple[np.ndarray, float | None]:
    """Draw ``rho`` (and the mean when centred) from their exact conditional.

    The truth equation is a regression of ``y~_{t+1}`` net of its news
    contributions on ``p`` lags with error variance ``sigma_e^2``. Draws are
    repeated until stationary; after ``MAX_STATIONARY_ATTEMPTS`` failures the
    previous value is kept.
    """
    if states.shape[0] < config.p + 2:
        raise InputError(f"need at least {config.p + 2} periods to draw coefficients")
    shocks = recover_shocks(states, config)
    target = states[1:, 0] - shocks["news"].sum(axis=(1, 2))
    X = _design(states, config)
    k = X.shape[1]
    b0 = np.full(k, priors.rho_mean)
    v0 = np.full(k, priors.rho_var)
    offset = 1 if config.center else 0
    if config.center:
        b0[0], v0[0] = priors.mean_mean, priors.mean_var
    restricted = priors.restricted_labels(config)
    for j in range(config.p):
        if f"rho_{j + 1}" in restricted:
            b0[offset + j], v0[offset + j] = 0.0, priors.restricted_var
    s2 = params.sigma_e ** 2
    prec = np.diag(1.0 / v0) + X.T @ X / s2
    L = np.linalg.cholesky(prec)
    rhs = b0 / v0 + X.T @ target / s2
    post_mean = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    for _ in range(MAX_STATIONARY_ATTEMPTS):
        beta = post_mean + np.linalg.solve(L.T, rng.standard_normal(k))
        rho = beta[offset:]
        if is_stationary(rho):
            break
    else:
        log.warning("no stationary coefficient draw in %d attempts; keeping previous value",
                    MAX_STATIONARY_ATTEMPTS)
        return params.rho.copy(), params.mean
    mean = None
    if config.center:
        mean = float(beta[0] / (1.0 - rho.sum()))
    return rho.copy(), mean


def draw_scales(states: np.ndarray, config: ReconConfig, priors: PriorSpec,
                params: ParamVector, rng: np.random.Generator) -> tuple[float, np.ndarray, np.ndarray]:
    """Inverse-gamma draws of every free shock variance; returns standard deviations."""
    shocks = recover_shocks(states, config)
    X = states[:-1, :config.p]
    intercept = params.mean * (1.0 - params.rho.sum()) if config.center else 0.0
    truth = states[1:, 0] - intercept - X @ params.rho - shocks["news"].sum(axis=(1, 2))
    restricted = priors.restricted_labels(config)
    n = truth.size

    def one(label, resid):
        if label in restricted:
            return 0.0
        a0, b0 = priors.inverse_gamma(label)
        shape = a0 + 0.5 * n
        rate = b0 + 0.5 * float(resid @ resid)
        return float(np.sqrt(rate / rng.gamma(shape)))

    sigma_e = one("sigma_e", truth)
    news = np.empty((2, config.l))
    noise = np.empty((2, config.l))
    for s in range(2):
        for i in range(config.l):
            news[s, i] = one(f"sigma_news_{s}_{i + 1}", shocks["news"][:, s, i])
    for s in range(2):
        for i in range(config.l):
            noise[s, i] = one(f"sigma_noise_{s}_{i + 1}", shocks["noise"][:, s, i])
    return sigma_e, news, noise


# --- initial values --------------------------------------------------------

def initial_params(config: ReconConfig, values: np.ndarray, priors: PriorSpec | None = None) -> ParamVector:
    """Starting point from simple sample moments of the grid.

    The AR coefficients come from least squares on the last release of
    series 0 (the row mean of observed entries if that column is too
    sparse); shock scales split the variance of each series' total revision
    evenly across its shocks.
    """
    priors = priors or PriorSpec()
    l, p = config.l, config.p
    proxy = values[:, l - 1]
    if np.isfinite(proxy).sum() < 2 * p + 3:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            proxy = np.nanmean(values, axis=1)
    proxy = pd.Series(proxy).interpolate(limit_direction="both").to_numpy()
    centred = proxy - (proxy.mean() if np.isfinite(proxy).all() else 0.0)
    rho = np.zeros(p)
    resid_var = np.nanvar(centred) if centred.size > 1 else 1.0
    if centred.size > 2 * p + 2:
        X = np.column_stack([centred[p - j - 1:-j - 1] for j in range(p)])
        yv = centred[p:]
        coef, *_ = np.linalg.lstsq(X, yv, rcond=None)
        while not is_stationary(coef):
            coef = 0.9 * coef
        rho = coef
        resid_var = float(np.var(yv - X @ coef))
    if not np.isfinite(resid_var) or resid_var <= 0:
        resid_var = 1.0
    rev = np.empty((2, l))
    for s in range(2):
        # total revision variance shared evenly across the 2l shocks of the series
        d = values[:, (s + 1) * l - 1] - values[:, s * l]
        v = np.nanvar(d) if np.isfinite(d).sum() > 1 else np.nan
        if not np.isfinite(v) or v <= 0:
            v = 0.1 * resid_var
        rev[s] = np.sqrt(v / (2 * l))
    restricted = priors.restricted_labels(config)
    news = rev.copy()
    noise = rev.copy()
    for s in range(2):
        for i in range(l):
            if f"sigma_news_{s}_{i + 1}" in restricted:
                news[s, i] = 0.0
            if f"sigma_noise_{s}_{i + 1}" in restricted:
                noise[s, i] = 0.0
    sigma_e = float(np.sqrt(max(resid_var - np.sum(news ** 2), 0.25 * resid_var)))
    mean = float(np.nanmean(values)) if config.center else None
    return ParamVector(rho, sigma_e, news, noise, mean)


# --- posterior container ---------------------------------------------------

def recursive_mean(draws) -> np.ndarray:
    """Running mean ``m_k = mean(x_1..x_k)`` along the first axis."""
    x = np.asarray(draws, dtype=float)
    k = np.arange(1, x.shape[0] + 1).reshape((-1,) + (1,) * (x.ndim - 1))
    return np.cumsum(x, axis=0) / k


@dataclass
class PosteriorDraws:
    """Kept draws of all chains, stacked chain by chain."""

    config: ReconConfig
    settings: McmcSettings
    priors: PriorSpec
    labels: list[str]
    theta: np.ndarray
    chain: np.ndarray
    states: np.ndarray | None
    values: np.ndarray
    offset: float = 0.0
    periods: pd.PeriodIndex | None = None
    init: list[dict] = field(default_factory=list)
    rejected: list[int] = field(default_factory=list)

    @property
    def n_draws(self) -> int:
        return self.theta.shape[0]

    def frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.theta, columns=self.labels)
        df.insert(0, "chain", self.chain)
        df.insert(1, "draw", np.concatenate([np.arange(c) for c in np.bincount(self.chain)]))
        return df

    def summaries(self) -> pd.DataFrame:
        th = self.theta
        return pd.DataFrame(
            {
                "mean": th.mean(axis=0),
                "sd": th.std(axis=0, ddof=1) if th.shape[0] > 1 else np.zeros(th.shape[1]),
                "q05": np.quantile(th, 0.05, axis=0),
                "q50": np.quantile(th, 0.50, axis=0),
                "q95": np.quantile(th, 0.95, axis=0),
            },
            index=pd.Index(self.labels, name="parameter"),
        )

    def recursive_means(self) -> pd.DataFrame:
        out = []
        for c in np.unique(self.chain):
            part = pd.DataFrame(recursive_mean(self.theta[self.chain == c]), columns=self.labels)
            part.insert(0, "chain", c)
            part.insert(1, "k", np.arange(1, part.shape[0] + 1))
            out.append(part)
        return pd.concat(out, ignore_index=True)

    def posterior_mean_params(self) -> ParamVector:
        from .ssm import theta_unpack
        params = theta_unpack(self.theta.mean(axis=0), self.config)
        if not is_stationary(params.rho):
            params.rho = np.median(self.theta[:, :self.config.p], axis=0)
        return params

    @classmethod
    def concat(cls, parts: list[PosteriorDraws]) -> PosteriorDraws:
        """Stack independently run chains; chain ids are renumbered in order."""
        if not parts:
            raise InputError("nothing to concatenate")
        first = parts[0]
        for p in parts[1:]:
            if p.labels != first.labels or p.config != first.config:
                raise InputError("draws come from different models")
        chains, base = [], 0
        for p in parts:
            chains.append(p.chain + base)
            base += int(p.chain.max()) + 1 if p.chain.size else 0
        states = None
        if all(p.states is not None for p in parts):
            states = np.concatenate([p.states for p in parts])
        return cls(first.config, first.settings, first.priors, list(first.labels),
                   np.concatenate([p.theta for p in parts]), np.concatenate(chains), states,
                   first.values, first.offset, first.periods,
                   [d for p in parts for d in p.init], [r for p in parts for r in p.rejected])


# --- driver ----------------------------------------------------------------

def _check_supported(config: ReconConfig) -> None:
    if config.spillovers or config.cross_news != "none" or config.cross_noise != "none":
        raise InputError("estimation supports the base model only "
                         "(no spillovers, no cross-series loadings)")


def _run_chain(config, y, priors, settings, init, rng, chain_id, store_states):
    params = init.copy()
    theta_out = np.empty((settings.kept_per_chain, len(theta_labels(config))))
    state_out = (np.empty((settings.kept_per_chain, y.shape[0], config.m))
                 if store_states else None)
    limit = max(1, int(0.1 * settings.iterations))
    consecutive = rejected = kept = 0
    for it in range(1, settings.iterations + 1):
        try:
            model = build_state_space(config, params)
            states = draw_states(model, y, rng)
            rho, mean = draw_coefficients(states, config, priors, params, rng)
            params.rho, params.mean = rho, mean
            params.sigma_e, params.sigma_news, params.sigma_noise = draw_scales(
                states, config, priors, params, rng)
        except (DegenerateModelError, np.linalg.LinAlgError) as exc:
            consecutive += 1
            rejected += 1
            log.debug("chain %d sweep %d rejected: %s", chain_id, it, exc)
            if consecutive > limit:
                raise SamplerError(f"chain {chain_id}: {consecutive} consecutive sweeps "
                                   f"rejected (last: {exc})") from exc
            continue
        consecutive = 0
        if it > settings.burn_in and (it - settings.burn_in) % settings.thin == 0:
            theta_out[kept] = theta_pack(params, config)
            if store_states:
                state_out[kept] = states
            kept += 1
    if kept < settings.kept_per_chain:
        theta_out, state_out = theta_out[:kept], None if state_out is None else state_out[:kept]
    return theta_out, state_out, rejected


def run_gibbs(config: ReconConfig, obs, priors: PriorSpec | None = None,
              settings: McmcSettings | None = None, init: ParamVector | None = None,
              *, demean: bool = True) -> PosteriorDraws:
    """Run ``settings.chains`` independent chains and stack the kept draws.

    Without ``config.center`` the pooled mean of all observed entries is
    removed first (``demean``) and stored as ``offset``. Chain ``c`` uses the
    ``c``-th child of ``SeedSequence(settings.seed)``.
    """
    priors = priors or PriorSpec()
    settings = settings or McmcSettings()
    _check_supported(config)
    priors.check(config)
    y_raw, mask = _as_grid(obs, config.n_obs)
    if mask.all():
        raise InputError("observation grid has no observed entries")
    if y_raw.shape[0] < config.p + 2:
        raise InputError(f"need at least {config.p + 2} periods")
    values = np.where(mask, np.nan, y_raw)
    offset = float(np.nanmean(values)) if demean and not config.center else 0.0
    y = np.where(mask, np.nan, values - offset)

    labels = theta_labels(config)
    periods = getattr(obs, "periods", None)
    children = np.random.SeedSequence(settings.seed).spawn(settings.chains)
    thetas, states, chains, inits, rejected = [], [], [], [], []
    for c, child in enumerate(children):
        rng = np.random.default_rng(child)
        start = init.copy() if init is not None else initial_params(config, y, priors)
        if config.center and start.mean is None:
            start.mean = 0.0
        start.validate(config)
        inits.append(start.to_dict())
        log.info("chain %d initial values: %s", c, start.to_dict())
        th, st, rej = _run_chain(config, y, priors, settings, start, rng, c, settings.store_states)
        thetas.append(th)
        states.append(st)
        chains.append(np.full(th.shape[0], c))
        rejected.append(rej)
        if rej:
            log.info("chain %d: %d sweeps rejected", c, rej)
    return PosteriorDraws(
        config, settings, priors, labels, np.concatenate(thetas), np.concatenate(chains),
        np.concatenate(states) if settings.store_states else None,
        values, offset, periods, inits, rejected,
    )
