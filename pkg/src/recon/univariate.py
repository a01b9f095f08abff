"""The single-series, two-release news/noise system used for identification.

Parameters are variances: ``(rho, s2_truth, s2_news1, s2_news2, s2_noise1,
s2_noise2)``. Written with a scalar state ``x_t = y~_t``::

    x_{t+1} = rho x_t + B eps_{t+1}
    z_{t+1} = C x_t + D eps_{t+1},     C = [rho, rho]'

where ``eps`` stacks the transformed shocks. Only their second moments
``Sigma_BB``, ``Sigma_BD`` and ``Sigma_DD`` enter the filtering problem.
"""

from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np

from .exceptions import InputError
from .ssm import StateSpaceModel


@dataclass(frozen=True)
class UnivariateTheta:
    rho: float
    s2_truth: float
    s2_news1: float
    s2_news2: float
    s2_noise1: float
    s2_noise2: float

    def __post_init__(self):
        vals = np.array(astuple(self), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise InputError("parameters must be finite")
        if np.any(vals[1:] < 0):
            raise InputError("variances must be nonnegative")
        if not -1.0 < self.rho < 1.0:
            raise InputError(f"rho must lie in (-1, 1), got {self.rho}")

    @classmethod
    def from_array(cls, x) -> UnivariateTheta:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != 6:
            raise InputError(f"expected 6 entries, got {x.size}")
        return cls(*map(float, x))

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def scaled(self, factor: float) -> UnivariateTheta:
        """All variances multiplied by ``factor``; rho unchanged."""
        x = self.as_array()
        x[1:] *= factor
        return UnivariateTheta.from_array(x)

    @property
    def C(self) -> np.ndarray:
        return np.array([self.rho, self.rho])


def shock_covariance(theta: UnivariateTheta) -> np.ndarray:
    """Covariance of ``(omega_truth, omega_news1, omega_news2, omega_noise1, omega_noise2)``."""
    s_y, s_n1, s_n2, s_z1, s_z2 = theta.as_array()[1:]
    S = np.zeros((5, 5))
    S[0, 0] = s_y + s_n1 + s_n2
    S[0, 1] = S[1, 0] = -s_n1 - s_n2
    S[0, 2] = S[2, 0] = -s_n2
    S[1, 1] = s_n1 + s_n2
    S[1, 2] = S[2, 1] = s_n2
    S[2, 2] = s_n2
    S[3, 3] = s_z1
    S[4, 4] = s_z2
    return S


B_ROW = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
D_MAT = np.array([[1.0, 1.0, 0.0, 1.0, 0.0],
                  [1.0, 0.0, 1.0, 0.0, 1.0]])


def system_moments(theta: UnivariateTheta) -> tuple[float, np.ndarray, np.ndarray]:
    """``(Sigma_BB, Sigma_BD, Sigma_DD)`` from the transformed shock covariance."""
    S = shock_covariance(theta)
    return float(B_ROW @ S @ B_ROW), B_ROW @ S @ D_MAT.T, D_MAT @ S @ D_MAT.T


def univariate_state_space(theta: UnivariateTheta) -> StateSpaceModel:
    """Five-state form: ``[y~, news1, news2, noise1, noise2]`` with exact measurement."""
    s_y, s_n1, s_n2, s_z1, s_z2 = np.sqrt(theta.as_array()[1:])
    Z = np.array([[1.0, 1.0, 0.0, 1.0, 0.0],
                  [1.0, 0.0, 1.0, 0.0, 1.0]])
    T = np.zeros((5, 5))
    T[0, 0] = theta.rho
    R = np.array([
        [s_y, s_n1, s_n2, 0.0, 0.0],
        [0.0, -s_n1, -s_n2, 0.0, 0.0],
        [0.0, 0.0, -s_n2, 0.0, 0.0],
        [0.0, 0.0, 0.0, s_z1, 0.0],
        [0.0, 0.0, 0.0, 0.0, s_z2],
    ])
    layout = {"truth": slice(0, 1), "news_0": slice(1, 3), "noise_0": slice(3, 5)}
    return StateSpaceModel.from_matrices(Z, T, R, layout=layout, obs_keys=((0, 1), (0, 2)))
