"""Kalman filtering and smoothing with missing data, plus steady-state tools."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import _kernels
from .exceptions import ConvergenceError, DegenerateModelError, InputError
from .ssm import StateSpaceModel
from .univariate import UnivariateTheta, system_moments
from .vintages import ObservationMatrix


def _as_grid(obs, n_obs: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(obs, ObservationMatrix):
        values, mask = obs.values, obs.missing_mask
    else:
        values = np.asarray(obs, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        mask = ~np.isfinite(values)
    if values.ndim != 2 or values.shape[1] != n_obs:
        raise InputError(f"observations must have {n_obs} columns, got shape {values.shape}")
    y = np.where(mask, 0.0, values)
    return np.ascontiguousarray(y), np.ascontiguousarray(mask)


_STATUS_MESSAGES = {
    _kernels.STATUS_SINGULAR: "innovation covariance is numerically singular",
    _kernels.STATUS_INCONSISTENT: "observation lies outside the support of the model",
    _kernels.STATUS_NONFINITE: "non-finite values in the filter recursion",
}


@dataclass(frozen=True)
class FilterResult:
    """Per-period output of :func:`kalman_filter`.

    ``predicted_mean[t]`` is ``E[alpha_t | Y_1..Y_{t-1}]`` (row ``T`` is the
    one-step-ahead forecast past the sample). ``gain[t]`` is the filtered-state
    gain ``P_t Z_t' F_t^{-1}``, padded with zero columns for missing entries.
    """

    model: StateSpaceModel
    loglik: float
    loglik_t: np.ndarray
    predicted_mean: np.ndarray
    predicted_cov: np.ndarray
    filtered_mean: np.ndarray
    filtered_cov: np.ndarray
    gain: np.ndarray
    mask: np.ndarray
    _v: np.ndarray
    _F: np.ndarray
    _Finv: np.ndarray

    @property
    def n_periods(self) -> int:
        return self.mask.shape[0]

    def innovations(self, t: int) -> np.ndarray:
        """One-step forecast errors of the entries observed in period ``t``."""
        return self._v[t, ~self.mask[t]]

    def innovation_cov(self, t: int) -> np.ndarray:
        keep = ~self.mask[t]
        return self._F[t][np.ix_(keep, keep)]

    def to_frame(self, index=None) -> pd.DataFrame:
        """Diagnostics table: log-likelihood contribution and truth moments per period."""
        return pd.DataFrame(
            {
                "n_observed": (~self.mask).sum(axis=1),
                "loglik": self.loglik_t,
                "predicted_truth": self.predicted_mean[:-1, 0],
                "predicted_truth_var": self.predicted_cov[:-1, 0, 0],
                "filtered_truth": self.filtered_mean[:, 0],
                "filtered_truth_var": self.filtered_cov[:, 0, 0],
            },
            index=index,
        )


def kalman_filter(model: StateSpaceModel, obs, *, allow_singular: bool = False) -> FilterResult:
    """Exact Kalman filter for ``Y_t = Z alpha_t`` with entries missing at random.

    Missing entries drop the matching rows of ``Z`` for that period; periods
    with nothing observed only predict. With ``allow_singular`` a rank-deficient
    innovation covariance is handled by a pseudo-inverse (the log-likelihood is
    then a density on the observed subspace); otherwise it raises
    :class:`DegenerateModelError`.
    """
    y, mask = _as_grid(obs, model.n_obs)
    out = _kernels.kalman_filter_kernel(
        y, mask, np.ascontiguousarray(model.Z), np.ascontiguousarray(model.T),
        model.c, np.ascontiguousarray(model.RRt), model.a1, model.P1, allow_singular,
    )
    a_pred, P_pred, a_filt, P_filt, v, Finv, F, gain, ll, _, status, fail_t = out
    if status != _kernels.STATUS_OK:
        raise DegenerateModelError(f"{_STATUS_MESSAGES[status]} (period index {fail_t})")
    return FilterResult(model, float(ll.sum()), ll, a_pred, P_pred, a_filt, P_filt,
                        gain, mask, v, F, Finv)


@dataclass(frozen=True)
class SmootherResult:
    mean: np.ndarray
    cov: np.ndarray


def kalman_smoother(model: StateSpaceModel, result: FilterResult) -> SmootherResult:
    """Fixed-interval smoothed means and covariances of every state."""
    if result.model is not model and not (
        np.array_equal(result.model.Z, model.Z)
        and np.array_equal(result.model.T, model.T)
        and np.array_equal(result.model.R, model.R)
    ):
        raise InputError("filter result was produced by a different model")
    mean, cov = _kernels.state_smoother_kernel(
        np.ascontiguousarray(model.Z), np.ascontiguousarray(model.T),
        result.predicted_mean, result.predicted_cov, result._v, result._Finv,
        result.gain, True,
    )
    return SmootherResult(mean, cov)


# --- steady state ----------------------------------------------------------

@dataclass(frozen=True)
class SteadyState:
    """Limit of the filter when every column is observed.

    ``P`` is the filtered state covariance, ``P_pred`` the predicted one,
    ``K`` the filtered-state gain and ``Sigma_a`` the innovation covariance.
    ``p`` is ``P[0, 0]``, the filtered variance of the truth.
    """

    P: np.ndarray
    P_pred: np.ndarray
    K: np.ndarray
    Sigma_a: np.ndarray
    iterations: int

    @property
    def p(self) -> float:
        return float(self.P[0, 0])


def _chol_inverse(F: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(F)
    except np.linalg.LinAlgError:
        raise DegenerateModelError("innovation covariance is not positive definite") from None
    # rcond guard: Cholesky of a nearly singular matrix can still succeed
    d = np.diag(L)
    if d.min() <= 1e-8 * max(d.max(), 1e-300):
        raise DegenerateModelError("innovation covariance is numerically singular")
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def steady_state(model: StateSpaceModel, observed=None, *, tol: float = 1e-12,
                 max_iter: int = 10_000) -> SteadyState:
    """Iterate the Riccati map from the unconditional covariance to its fixed point.

    ``observed`` optionally selects the columns that are ever observed; the
    others are dropped from the measurement equation.
    """
    keep = np.ones(model.n_obs, dtype=bool) if observed is None else np.asarray(observed, bool)
    if keep.shape != (model.n_obs,) or not keep.any():
        raise InputError("observed must flag at least one of the model's columns")
    Z = model.Z[keep]
    T = model.T
    Q = model.RRt
    P = model.P1.copy()
    for it in range(1, max_iter + 1):
        F = Z @ P @ Z.T
        Finv = _chol_inverse(F)
        Pf = P - P @ Z.T @ Finv @ Z @ P
        P_new = T @ Pf @ T.T + Q
        P_new = 0.5 * (P_new + P_new.T)
        delta = np.max(np.abs(P_new - P))
        P = P_new
        if delta < tol:
            break
    else:
        raise ConvergenceError(f"Riccati iteration did not converge in {max_iter} steps")
    F = Z @ P @ Z.T
    Finv = _chol_inverse(F)
    K = P @ Z.T @ Finv
    Pf = P - K @ Z @ P
    K_full = np.full((model.m, model.n_obs), np.nan)
    K_full[:, keep] = K
    return SteadyState(0.5 * (Pf + Pf.T), P, K_full, F, it)


def kalman_gain_weights(model: StateSpaceModel, observed=None) -> pd.Series:
    """Steady-state weight of each observed release in the truth update.

    Indexed by ``(series, release)``; columns excluded via ``observed`` get NaN.
    """
    ss = steady_state(model, observed)
    index = pd.MultiIndex.from_tuples(model.obs_keys, names=["series", "release"])
    return pd.Series(ss.K[0], index=index, name="weight")


# --- closed forms for the univariate two-release system ---------------------

def riccati_coefficients(theta: UnivariateTheta) -> tuple[float, float, float]:
    """Coefficients ``(a, b, c)`` of ``a p^2 + b p + c = 0`` for the filtered variance."""
    S_bb, S_bd, S_dd = system_moments(theta)
    try:
        np.linalg.cholesky(S_dd)
    except np.linalg.LinAlgError:
        raise DegenerateModelError("Sigma_DD is not positive definite") from None
    C = theta.C
    S_inv = np.linalg.inv(S_dd)
    q = float(C @ S_inv @ C)
    h = float(S_bd @ S_inv @ C)
    schur = S_bb - float(S_bd @ S_inv @ S_bd)
    a = -q
    b = (theta.rho - h) ** 2 + q * schur - 1.0
    return a, b, schur


def riccati_quadratic(theta: UnivariateTheta) -> float:
    """Positive root of the scalar Riccati equation.

    Uses ``p = 2c / (sqrt(b^2 - 4ac) - b)``, algebraically the root
    ``(-b - sqrt(b^2 - 4ac)) / 2a`` but finite when ``a = 0`` (rho = 0).
    """
    a, b, c = riccati_coefficients(theta)
    disc = b * b - 4.0 * a * c
    if not disc > 0:
        raise DegenerateModelError(f"non-positive discriminant {disc:.3g}")
    root = np.sqrt(disc)
    denom = root - b
    if denom == 0.0:
        raise DegenerateModelError("no positive root")
    p = 2.0 * c / denom
    if not p > 0:
        raise DegenerateModelError(f"Riccati root p={p:.3g} is not positive")
    return float(p)


def rank1_inverse_update(Ainv, B, *, tol: float = 1e-12) -> np.ndarray:
    """``(A + B)^{-1}`` from ``A^{-1}`` when ``B`` has rank one."""
    Ainv = np.asarray(Ainv, dtype=float)
    B = np.asarray(B, dtype=float)
    if Ainv.ndim != 2 or Ainv.shape[0] != Ainv.shape[1] or B.shape != Ainv.shape:
        raise InputError("Ainv and B must be square matrices of the same size")
    if not np.any(B):
        return Ainv.copy()
    sv = np.linalg.svd(B, compute_uv=False)
    if sv.size > 1 and sv[1] > 1e-10 * sv[0]:
        raise InputError("B must have rank one")
    denom = 1.0 + np.trace(B @ Ainv)
    if abs(denom) < tol:
        raise DegenerateModelError("1 + tr(B A^-1) is zero; A + B is singular")
    return Ainv - (Ainv @ B @ Ainv) / denom
