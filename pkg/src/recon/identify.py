"""Identification analysis: moment counting and observational equivalence.

The moment count compares the number of sample moments a reconciliation
model can be matched to (contemporaneous cross moments of all releases of
both series plus selected autocorrelations) with its number of free
parameters. The univariate tools work on the two-release system of
:mod:`recon.univariate` through its innovation representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateModelError, InputError
from .filter import riccati_quadratic
from .ssm import CROSS_MODES, ReconConfig, theta_labels
from .univariate import UnivariateTheta, shock_covariance, system_moments


@dataclass(frozen=True)
class MomentCount:
    n_moments: int
    n_params: int
    moment_terms: dict[str, int]
    param_terms: dict[str, int]
    extension: bool = False

    @property
    def order_condition_met(self) -> bool:
        return self.n_moments >= self.n_params

    @property
    def breakdown(self) -> dict[str, dict[str, int]]:
        return {"moments": dict(self.moment_terms), "params": dict(self.param_terms)}

    def to_dict(self) -> dict:
        return {
            "n_moments": self.n_moments,
            "n_params": self.n_params,
            "order_condition_met": self.order_condition_met,
            "breakdown": self.breakdown,
            "unequal_release_counts_extension": self.extension,
        }

    def table(self) -> str:
        rows = [("moments", k, v) for k, v in self.moment_terms.items()]
        rows += [("params", k, v) for k, v in self.param_terms.items()]
        width = max(len(k) for _, k, _ in rows)
        lines = [f"{'kind':<8} {'term':<{width}} {'count':>6}"]
        lines += [f"{kind:<8} {k:<{width}} {v:>6}" for kind, k, v in rows]
        lines.append(f"{'total':<8} {'moments':<{width}} {self.n_moments:>6}")
        lines.append(f"{'total':<8} {'params':<{width}} {self.n_params:>6}")
        verdict = "met" if self.order_condition_met else "NOT met"
        lines.append(f"order condition {verdict}: {self.n_moments} moments vs {self.n_params} parameters")
        return "\n".join(lines)


def _check_flags(l, p, cross_news, cross_noise):
    if l < 1 or p < 1:
        raise InputError("l and p must be >= 1")
    for mode in (cross_news, cross_noise):
        if mode not in CROSS_MODES:
            raise InputError(f"cross mode must be one of {CROSS_MODES}, got {mode!r}")


def count_moments(l: int, p: int = 1, *, spillovers: bool = False, cross_news: str = "none",
                  cross_noise: str = "none", releases: tuple[int, int] | None = None) -> MomentCount:
    """Closed-form moment and parameter counts.

    ``releases`` allows different release counts per series (our extension;
    with equal counts it reduces to the symmetric formulas).
    """
    _check_flags(l, p, cross_news, cross_noise)
    l0, l1 = releases if releases is not None else (l, l)
    if min(l0, l1) < 1:
        raise InputError("each series needs at least one release")
    n = l0 + l1
    moments = {
        "cross_moments": n * (n + 1) // 2,
        "first_order_autocorrelations": n,
    }
    params = {
        "rho": 1,
        "truth_scale": 1,
        "news_scales": n,
        "noise_scales": n,
    }
    if p > 1:
        moments["higher_order_autocorrelations"] = 2 * (p - 1)
        params["extra_ar_coefficients"] = p - 1
    if spillovers:
        moments["revision_autocorrelations"] = (l0 - 1) + (l1 - 1)
        params["spillover_coefficients"] = 2 * n
    cross = {"none": 0, "contemporaneous": min(l0, l1), "unrestricted": l0 * l1}
    if cross_news != "none":
        params["cross_news"] = cross[cross_news]
    if cross_noise != "none":
        params["cross_noise"] = cross[cross_noise]
    return MomentCount(sum(moments.values()), sum(params.values()), moments, params,
                       extension=l0 != l1)


def moment_list(l: int, p: int = 1, *, spillovers: bool = False, cross_news: str = "none",
                cross_noise: str = "none") -> tuple[list[tuple], list[str]]:
    """Enumerate every moment and every free parameter explicitly (equal ``l``)."""
    _check_flags(l, p, cross_news, cross_noise)
    obs = [(s, i) for s in range(2) for i in range(1, l + 1)]
    moments: list[tuple] = []
    for a in range(len(obs)):
        for b in range(a, len(obs)):
            moments.append(("cov", obs[a], obs[b]))
    moments += [("acf", o, 1) for o in obs]
    moments += [("acf_series", s, k) for s in range(2) for k in range(2, p + 1)]
    if spillovers:
        moments += [("revision_acf", s, i) for s in range(2) for i in range(1, l)]
    cfg = ReconConfig(l=l, p=p, spillovers=spillovers, cross_news=cross_news,
                      cross_noise=cross_noise)
    return moments, theta_labels(cfg)


# --- innovation representation of the univariate system ---------------------

@dataclass(frozen=True)
class InnovationRep:
    """``x_{t+1|t+1} = A x_{t|t} + K a_{t+1}``, ``z_{t+1} = C x_{t|t} + a_{t+1}``."""

    A: float
    K: np.ndarray
    C: np.ndarray
    Sigma_a: np.ndarray
    p: float

    def allclose(self, other: InnovationRep, atol: float = 1e-8) -> bool:
        return (abs(self.A - other.A) <= atol
                and np.allclose(self.K, other.K, rtol=0, atol=atol)
                and np.allclose(self.C, other.C, rtol=0, atol=atol)
                and np.allclose(self.Sigma_a, other.Sigma_a, rtol=0, atol=atol))


def innovation_representation(theta: UnivariateTheta) -> InnovationRep:
    S_bb, S_bd, S_dd = system_moments(theta)
    p = riccati_quadratic(theta)
    C = theta.C
    Sigma_a = p * np.outer(C, C) + S_dd
    K = np.linalg.solve(Sigma_a, p * theta.rho * C + S_bd)
    return InnovationRep(theta.rho, K, C, Sigma_a, p)


def admissible_delta_interval(theta0: UnivariateTheta) -> tuple[float, float]:
    """Closed interval of shifts keeping every variance nonnegative and p > 0."""
    p0 = riccati_quadratic(theta0)
    lo = max(-theta0.s2_news2, -p0)
    hi = theta0.s2_truth / theta0.rho ** 2 if theta0.rho != 0 else np.inf
    return lo, hi


def equivalent_theta(theta0: UnivariateTheta, delta: float) -> UnivariateTheta:
    """Parameter point with the same innovation representation as ``theta0``.

    Shifts the truth variance by ``-delta rho^2`` and the final-release news
    variance by ``+delta``; the filtered variance moves by ``delta``.
    """
    lo, hi = admissible_delta_interval(theta0)
    if not lo <= delta <= hi or delta <= -riccati_quadratic(theta0):
        raise InputError(f"delta={delta} outside admissible interval [{lo}, {hi}]")
    x = theta0.as_array()
    x[1] -= delta * theta0.rho ** 2
    x[3] += delta
    # rounding at the interval ends
    x[[1, 3]] = np.where(np.abs(x[[1, 3]]) < 1e-14, 0.0, x[[1, 3]])
    return UnivariateTheta.from_array(x)


def sigma_shift_pattern(theta0: UnivariateTheta, delta: float) -> np.ndarray:
    """Expected ``Sigma_1 - Sigma_0`` along the equivalence family."""
    D = np.zeros((5, 5))
    D[0, 0] = delta * (1 - theta0.rho ** 2)
    D[0, 1] = D[1, 0] = D[0, 2] = D[2, 0] = -delta
    D[1, 1] = D[1, 2] = D[2, 1] = D[2, 2] = delta
    return D


def restricted_equivalents(theta0: UnivariateTheta, step: float = 1e-4,
                           span: float | None = None, atol: float = 1e-8) -> np.ndarray:
    """Grid shifts whose equivalent point also satisfies ``s2_news2 == 0``.

    Scans ``delta`` over the admissible interval (clipped to ``+-span``) at
    resolution ``step``; under the restriction only ``delta = 0`` survives.
    """
    lo, hi = admissible_delta_interval(theta0)
    if span is None:
        span = 1.0
    lo, hi = max(lo, -span), min(hi, span)
    n_lo, n_hi = int(np.ceil(lo / step)), int(np.floor(hi / step))
    ref = innovation_representation(theta0)
    found = []
    for k in range(n_lo, n_hi + 1):
        delta = k * step
        # the restriction is linear in delta; only solve the filter where it can hold
        if abs(theta0.s2_news2 + delta) > atol:
            continue
        try:
            th1 = equivalent_theta(theta0, delta)
            rep = innovation_representation(th1)
        except (InputError, DegenerateModelError):
            continue
        if abs(th1.s2_news2) <= atol and rep.allclose(ref, atol):
            found.append(delta)
    return np.array(found)


@dataclass(frozen=True)
class Minimality:
    controllable: bool
    observable: bool
    controllability_sv: np.ndarray = field(repr=False)
    observability_sv: np.ndarray = field(repr=False)
    rtol: float = 1e-10


def _numeric_rank(M: np.ndarray, rtol: float) -> tuple[int, np.ndarray]:
    sv = np.linalg.svd(np.atleast_2d(M), compute_uv=False)
    top = sv.max(initial=0.0)
    if top == 0.0:
        return 0, sv
    return int(np.sum(sv > rtol * top)), sv


def check_minimality(theta: UnivariateTheta, rtol: float = 1e-10) -> Minimality:
    """Controllability of ``[K, A K]`` and observability of ``[C; C A]`` (scalar state)."""
    rep = innovation_representation(theta)
    ctrl = np.hstack([rep.K, rep.A * rep.K])[None, :]
    obsv = np.concatenate([rep.C, rep.C * rep.A])[:, None]
    r_c, sv_c = _numeric_rank(ctrl, rtol)
    r_o, sv_o = _numeric_rank(obsv, rtol)
    return Minimality(r_c == 1, r_o == 1, sv_c, sv_o, rtol)


def reconstructed_sigma(theta: UnivariateTheta) -> np.ndarray:
    return shock_covariance(theta)
