"""Estimator-style front end for the Gibbs sampler.

``NewsNoiseReconciler`` follows the scikit-learn conventions: hyper-parameters
are constructor arguments, ``fit`` learns from an observation grid (periods x
``2l`` columns, NaN for missing releases) and ``transform`` maps a grid to the
smoothed true series at the posterior-mean parameters.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InputError
from .filter import kalman_filter, kalman_smoother
from .sampler import McmcSettings, PosteriorDraws, PriorSpec, run_gibbs
from .ssm import ReconConfig, build_state_space
from .vintages import ObservationMatrix, VintagePanel, to_observation_matrix


def check_observation_grid(X, n_columns: int) -> np.ndarray:
    """Validate a periods x columns grid; NaN marks a missing entry."""
    if isinstance(X, ObservationMatrix):
        X = X.values
    try:
        arr = check_array(X, dtype=float, ensure_all_finite="allow-nan", ensure_min_samples=1)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if arr.shape[1] != n_columns:
        raise InputError(f"expected {n_columns} columns (2 series x l releases), got {arr.shape[1]}")
    return arr


class NewsNoiseReconciler(TransformerMixin, BaseEstimator):
    """Bayesian news/noise reconciliation of two multi-release series."""

    def __init__(self, l: int = 2, p: int = 1, center: bool = False,
                 restrict_final_news: bool = True, iterations: int = 100_000,
                 burn_in: int = 90_000, thin: int = 10, chains: int = 1, seed: int = 0,
                 priors: PriorSpec | None = None, store_states: bool = True):
        self.l = l
        self.p = p
        self.center = center
        self.restrict_final_news = restrict_final_news
        self.iterations = iterations
        self.burn_in = burn_in
        self.thin = thin
        self.chains = chains
        self.seed = seed
        self.priors = priors
        self.store_states = store_states

    def _config(self) -> ReconConfig:
        return ReconConfig(l=self.l, p=self.p, center=self.center,
                           restrict_final_news=self.restrict_final_news)

    def fit(self, X, y=None):
        config = self._config()
        if isinstance(X, VintagePanel):
            X = to_observation_matrix(X, config)
        periods = getattr(X, "periods", None)
        grid = check_observation_grid(X, config.n_obs)
        settings = McmcSettings(self.iterations, self.burn_in, self.thin, self.chains,
                                self.seed, self.store_states)
        obs = ObservationMatrix.from_array(grid, periods) if periods is not None else grid
        self.draws_: PosteriorDraws = run_gibbs(config, obs, self.priors, settings)
        self.config_ = config
        self.params_ = self.draws_.posterior_mean_params()
        self.offset_ = self.draws_.offset
        self.summary_ = self.draws_.summaries()
        self.n_features_in_ = config.n_obs
        return self

    def _smooth(self, X):
        check_is_fitted(self, "draws_")
        grid = check_observation_grid(X, self.config_.n_obs)
        model = build_state_space(self.config_, self.params_)
        res = kalman_filter(model, grid - self.offset_, allow_singular=True)
        return model, res, kalman_smoother(model, res)

    def transform(self, X) -> np.ndarray:
        """Smoothed true series, shape ``(n_periods, 1)``, on the data's scale."""
        _, _, sm = self._smooth(X)
        return sm.mean[:, :1] + self.offset_

    def score(self, X, y=None) -> float:
        """Log-likelihood of ``X`` at the posterior-mean parameters."""
        _, res, _ = self._smooth(X)
        return res.loglik
