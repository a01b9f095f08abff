"""Posterior summaries built from stored draws."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import InputError
from .sampler import PosteriorDraws
from .ssm import state_layout


def _require_states(draws: PosteriorDraws) -> np.ndarray:
    if draws.states is None:
        raise InputError("draws were run without storing states")
    return draws.states


def _index(draws: PosteriorDraws, n_t: int):
    if draws.periods is not None and len(draws.periods) == n_t:
        return pd.Index(draws.periods, name="period")
    return pd.RangeIndex(n_t, name="period")


def _release_pair(draws: PosteriorDraws, first_release, last_release) -> tuple[int, int]:
    l = draws.config.l
    first = 1 if first_release is None else int(first_release)
    last = l if last_release is None else int(last_release)
    if first == last:
        raise InputError("first and last release must differ")
    if not 1 <= first < last <= l:
        raise InputError(f"releases must satisfy 1 <= first < last <= {l}")
    return first, last


def decomposition_draws(draws: PosteriorDraws, first_release: int | None = None,
                        last_release: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw news and noise parts of the revision between two releases.

    Returns two arrays of shape ``(n_draws, T, 2)`` (last axis: series).
    Releases default to the first and the last configured one.
    """
    states = _require_states(draws)
    first, last = _release_pair(draws, first_release, last_release)
    st = state_layout(draws.config)
    news = np.empty(states.shape[:2] + (2,))
    noise = np.empty_like(news)
    for s in range(2):
        nu = states[:, :, st[f"news_{s}"]]
        ze = states[:, :, st[f"noise_{s}"]]
        news[..., s] = nu[..., last - 1] - nu[..., first - 1]
        noise[..., s] = ze[..., last - 1] - ze[..., first - 1]
    return news, noise


def historical_decomposition(draws: PosteriorDraws, series: int | None = None,
                             first_release: int | None = None,
                             last_release: int | None = None) -> pd.DataFrame:
    """Split each period's total revision into news and noise.

    One row per period (and series, when ``series`` is None). ``flag`` marks
    periods where either release is missing: ``total`` is NaN there and the
    components are the model-implied ones.
    """
    if series not in (None, 0, 1):
        raise InputError(f"series must be 0 or 1, got {series!r}")
    first, last = _release_pair(draws, first_release, last_release)
    news, noise = decomposition_draws(draws, first, last)
    l = draws.config.l
    idx = _index(draws, news.shape[1])
    frames = []
    for s in ((0, 1) if series is None else (series,)):
        total = draws.values[:, s * l + last - 1] - draws.values[:, s * l + first - 1]
        frames.append(pd.DataFrame({
            "period": idx.astype(str) if isinstance(idx, pd.PeriodIndex) else idx,
            "series": s,
            "total": total,
            "news": news[..., s].mean(axis=0),
            "noise": noise[..., s].mean(axis=0),
            "news_lo90": np.quantile(news[..., s], 0.05, axis=0),
            "news_hi90": np.quantile(news[..., s], 0.95, axis=0),
            "noise_lo90": np.quantile(noise[..., s], 0.05, axis=0),
            "noise_hi90": np.quantile(noise[..., s], 0.95, axis=0),
            "flag": ~np.isfinite(total),
        }))
    return pd.concat(frames, ignore_index=True)


def reconciled_series(draws: PosteriorDraws) -> pd.DataFrame:
    """Posterior mean and 90% band of the true series, on the data's scale."""
    truth = _require_states(draws)[:, :, 0] + draws.offset
    idx = _index(draws, truth.shape[1])
    return pd.DataFrame({
        "period": idx.astype(str) if isinstance(idx, pd.PeriodIndex) else idx,
        "mean": truth.mean(axis=0),
        "lo90": np.quantile(truth, 0.05, axis=0),
        "hi90": np.quantile(truth, 0.95, axis=0),
    })


@dataclass(frozen=True)
class DynamicsPairs:
    """``(rho, sigma2)`` per kept draw; ``sigma2 = sigma_e^2 + sum of news variances``.

    With ``p > 1`` the reported ``rho`` is the sum of the AR coefficients.
    """

    pairs: pd.DataFrame

    @property
    def mean(self) -> tuple[float, float]:
        return float(self.pairs["rho"].mean()), float(self.pairs["sigma2"].mean())

    def __len__(self) -> int:
        return len(self.pairs)


def dynamics_pairs(draws: PosteriorDraws) -> DynamicsPairs:
    cfg = draws.config
    lab = {name: j for j, name in enumerate(draws.labels)}
    rho = draws.theta[:, [lab[f"rho_{j}"] for j in range(1, cfg.p + 1)]].sum(axis=1)
    news_cols = [lab[f"sigma_news_{s}_{i}"] for s in range(2) for i in range(1, cfg.l + 1)]
    var = draws.theta[:, lab["sigma_e"]] ** 2 + (draws.theta[:, news_cols] ** 2).sum(axis=1)
    return DynamicsPairs(pd.DataFrame({"chain": draws.chain, "rho": rho, "sigma2": var}))


def summary_dict(draws: PosteriorDraws) -> dict:
    """JSON-ready bundle of summaries, recursive means and settings."""
    summ = draws.summaries()
    rec = draws.recursive_means()
    dyn = dynamics_pairs(draws)
    return {
        "config": draws.config.to_dict(),
        "settings": draws.settings.to_dict(),
        "priors": draws.priors.to_dict(),
        "offset": draws.offset,
        "n_draws": draws.n_draws,
        "rejected_sweeps": list(draws.rejected),
        "initial_values": draws.init,
        "summaries": {k: v for k, v in summ.to_dict(orient="index").items()},
        "recursive_means": {
            str(c): {lab: g[lab].tolist() for lab in draws.labels}
            for c, g in rec.groupby("chain")
        },
        "dynamics_pairs": {
            "rho": dyn.pairs["rho"].tolist(),
            "sigma2": dyn.pairs["sigma2"].tolist(),
            "posterior_mean": list(dyn.mean),
        },
    }
