"""State-space form of the two-series news/noise reconciliation model.

State layout (``m = p + 4l``)::

    [ y~_t .. y~_{t-p+1} | news series 0 (l) | news series 1 (l)
                         | noise series 0 (l) | noise series 1 (l) ]

Shock layout (``r = 1 + 4l``, unit variances)::

    [ e_t | news shocks series 0 (l) | news series 1 (l)
          | noise shocks series 0 (l) | noise series 1 (l) ]

Observations ``Y_t = Z alpha_t`` carry no measurement noise; all randomness
enters through ``alpha_{t+1} = c + T alpha_t + R eta_t``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml
from scipy import linalg

from . import _kernels
from .exceptions import InputError

CROSS_MODES = ("none", "contemporaneous", "unrestricted")


@dataclass(frozen=True)
class ReconConfig:
    """Shape of the reconciliation model.

    ``l`` releases are used for both series; a series with fewer published
    releases simply has fully masked columns.
    """

    l: int = 2
    p: int = 1
    center: bool = False
    spillovers: bool = False
    cross_news: str = "none"
    cross_noise: str = "none"
    restrict_final_news: bool = True
    release_labels: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        if int(self.l) != self.l or self.l < 1:
            raise InputError(f"l must be an integer >= 1, got {self.l!r}")
        if int(self.p) != self.p or self.p < 1:
            raise InputError(f"p must be an integer >= 1, got {self.p!r}")
        for name in ("cross_news", "cross_noise"):
            if getattr(self, name) not in CROSS_MODES:
                raise InputError(f"{name} must be one of {CROSS_MODES}, got {getattr(self, name)!r}")
        if self.release_labels is not None:
            labels = tuple(tuple(str(x) for x in s) for s in self.release_labels)
            if len(labels) != 2 or any(len(s) != self.l for s in labels):
                raise InputError("release_labels must hold l labels for each of the 2 series")
            object.__setattr__(self, "release_labels", labels)

    @property
    def n_obs(self) -> int:
        return 2 * self.l

    @property
    def m(self) -> int:
        return self.p + 4 * self.l

    @property
    def r(self) -> int:
        return 1 + 4 * self.l

    def cross_size(self, mode: str) -> int:
        return {"none": 0, "contemporaneous": self.l, "unrestricted": self.l ** 2}[mode]

    def labels(self) -> tuple[tuple[str, ...], tuple[str, ...]]:
        if self.release_labels is not None:
            return self.release_labels
        return tuple(tuple(f"release {i}" for i in range(1, self.l + 1)) for _ in range(2))

    def to_dict(self) -> dict[str, Any]:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        if out["release_labels"] is not None:
            out["release_labels"] = [list(s) for s in out["release_labels"]]
        return out

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> ReconConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if kwargs.get("release_labels") is not None:
            kwargs["release_labels"] = tuple(tuple(s) for s in kwargs["release_labels"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> ReconConfig:
        return cls.from_mapping(load_mapping(path))


def load_mapping(path: str | Path) -> dict[str, Any]:
    """Read a key/value file (YAML or JSON)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise InputError(f"cannot parse {path}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise InputError(f"{path} must contain a key/value mapping")
    return data


def companion(rho: np.ndarray) -> np.ndarray:
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    p = rho.size
    A = np.zeros((p, p))
    A[0] = rho
    A[1:, :-1] = np.eye(p - 1)
    return A


def is_stationary(rho) -> bool:
    return bool(np.max(np.abs(np.linalg.eigvals(companion(rho)))) < 1.0)


def upper_ones(l: int) -> np.ndarray:
    """``l x l`` matrix with zeros below the diagonal and ones elsewhere."""
    return np.triu(np.ones((l, l)))


@dataclass
class ParamVector:
    """Model parameters. Scales are standard deviations of unit shocks."""

    rho: np.ndarray
    sigma_e: float
    sigma_news: np.ndarray
    sigma_noise: np.ndarray
    mean: float | None = None
    ts_diag: np.ndarray | None = None
    psi: np.ndarray | None = None
    phi: np.ndarray | None = None

    def __post_init__(self):
        self.rho = np.atleast_1d(np.asarray(self.rho, dtype=float)).copy()
        self.sigma_e = float(self.sigma_e)
        self.sigma_news = np.atleast_2d(np.asarray(self.sigma_news, dtype=float)).copy()
        self.sigma_noise = np.atleast_2d(np.asarray(self.sigma_noise, dtype=float)).copy()
        if self.mean is not None:
            self.mean = float(self.mean)
        for name in ("ts_diag", "psi", "phi"):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, np.asarray(val, dtype=float).copy())

    def copy(self) -> ParamVector:
        return replace(self)

    def validate(self, config: ReconConfig) -> None:
        l, p = config.l, config.p
        if self.rho.shape != (p,):
            raise InputError(f"rho must have {p} entries, got {self.rho.size}")
        for name in ("sigma_news", "sigma_noise"):
            if getattr(self, name).shape != (2, l):
                raise InputError(f"{name} must be 2 x {l}, got {getattr(self, name).shape}")
        arrays = [self.rho, np.array([self.sigma_e]), self.sigma_news, self.sigma_noise]
        arrays += [x for x in (self.ts_diag, self.psi, self.phi) if x is not None]
        if self.mean is not None:
            arrays.append(np.array([self.mean]))
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise InputError("parameters must be finite")
        if self.sigma_e < 0 or np.any(self.sigma_news < 0) or np.any(self.sigma_noise < 0):
            raise InputError("scale parameters must be nonnegative")
        if not is_stationary(self.rho):
            raise InputError(f"rho={self.rho.tolist()} is not stationary")
        if config.center and self.mean is None:
            raise InputError("config.center requires a mean parameter")
        if config.spillovers:
            if self.ts_diag is None or self.ts_diag.shape != (4 * l,):
                raise InputError(f"spillovers require ts_diag with {4 * l} entries")
            if np.any(np.abs(self.ts_diag) >= 1):
                raise InputError("spillover coefficients must lie in (-1, 1)")
        for name, mode in (("psi", config.cross_news), ("phi", config.cross_noise)):
            val = getattr(self, name)
            if mode == "none":
                continue
            if val is None or val.shape != (l, l):
                raise InputError(f"{name} must be {l} x {l} when its cross mode is {mode!r}")
            if mode == "contemporaneous" and np.any(val[~np.eye(l, dtype=bool)] != 0):
                raise InputError(f"{name} must be diagonal in contemporaneous mode")

    def innovation_variance(self) -> float:
        """One-step variance of the truth: sigma_e^2 plus every news variance."""
        return self.sigma_e ** 2 + float(np.sum(self.sigma_news ** 2))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "rho": self.rho.tolist(),
            "sigma_e": self.sigma_e,
            "sigma_news": self.sigma_news.tolist(),
            "sigma_noise": self.sigma_noise.tolist(),
        }
        for name in ("mean", "ts_diag", "psi", "phi"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val if np.isscalar(val) else np.asarray(val).tolist()
        return out

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> ParamVector:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown parameter keys: {sorted(unknown)}")
        missing = {"rho", "sigma_e", "sigma_news", "sigma_noise"} - set(data)
        if missing:
            raise InputError(f"missing parameter keys: {sorted(missing)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> ParamVector:
        return cls.from_mapping(load_mapping(path))


@dataclass(frozen=True)
class StateSpaceModel:
    """``Y_t = Z alpha_t``, ``alpha_{t+1} = c + T alpha_t + R eta_t``, ``eta_t ~ N(0, I)``.

    ``a1``/``P1`` give the stationary law of ``alpha_1``.
    """

    Z: np.ndarray
    T: np.ndarray
    R: np.ndarray
    c: np.ndarray
    a1: np.ndarray
    P1: np.ndarray
    layout: Mapping[str, slice] = field(default_factory=dict)
    obs_keys: tuple[tuple[int, int], ...] = ()

    @classmethod
    def from_matrices(cls, Z, T, R, c=None, layout=None, obs_keys=()) -> StateSpaceModel:
        Z = np.asarray(Z, dtype=float)
        T = np.asarray(T, dtype=float)
        R = np.asarray(R, dtype=float)
        m = T.shape[0]
        if T.shape != (m, m) or Z.shape[1] != m or R.shape[0] != m:
            raise InputError(f"inconsistent shapes Z{Z.shape} T{T.shape} R{R.shape}")
        if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(T)) and np.all(np.isfinite(R))):
            raise InputError("system matrices must be finite")
        c = np.zeros(m) if c is None else np.asarray(c, dtype=float)
        if np.max(np.abs(np.linalg.eigvals(T)), initial=0.0) >= 1.0:
            raise InputError("transition matrix is not stable")
        a1 = np.linalg.solve(np.eye(m) - T, c)
        P1 = linalg.solve_discrete_lyapunov(T, R @ R.T)
        P1 = 0.5 * (P1 + P1.T)
        if not obs_keys:
            obs_keys = tuple((0, i + 1) for i in range(Z.shape[0]))
        for a in (Z, T, R, c, a1, P1):
            a.setflags(write=False)
        return cls(Z, T, R, c, a1, P1, dict(layout or {}), tuple(obs_keys))

    @property
    def m(self) -> int:
        return self.T.shape[0]

    @property
    def r(self) -> int:
        return self.R.shape[1]

    @property
    def n_obs(self) -> int:
        return self.Z.shape[0]

    @property
    def RRt(self) -> np.ndarray:
        return self.R @ self.R.T

    def initial_factor(self) -> np.ndarray:
        """Square-root factor S with S S' = P1 (eigen-based, PSD-safe)."""
        lam, U = np.linalg.eigh(self.P1)
        lam = np.where(lam > 1e-14 * max(lam.max(initial=0.0), 1e-300), lam, 0.0)
        return U * np.sqrt(lam)


def state_layout(config: ReconConfig) -> dict[str, slice]:
    p, l = config.p, config.l
    return {
        "truth": slice(0, p),
        "news_0": slice(p, p + l),
        "news_1": slice(p + l, p + 2 * l),
        "noise_0": slice(p + 2 * l, p + 3 * l),
        "noise_1": slice(p + 3 * l, p + 4 * l),
    }


def shock_layout(config: ReconConfig) -> dict[str, slice]:
    l = config.l
    return {
        "truth": slice(0, 1),
        "news_0": slice(1, 1 + l),
        "news_1": slice(1 + l, 1 + 2 * l),
        "noise_0": slice(1 + 2 * l, 1 + 3 * l),
        "noise_1": slice(1 + 3 * l, 1 + 4 * l),
    }


def obs_keys(config: ReconConfig) -> tuple[tuple[int, int], ...]:
    """``(series, release)`` for each observation column."""
    return tuple((s, i) for s in range(2) for i in range(1, config.l + 1))


def build_state_space(config: ReconConfig, params: ParamVector) -> StateSpaceModel:
    """Assemble ``(Z, T, R)`` for ``config`` at ``params``."""
    params.validate(config)
    p, l = config.p, config.l
    m, r = config.m, config.r
    st = state_layout(config)
    sh = shock_layout(config)

    Z = np.zeros((2 * l, m))
    Z[:, 0] = 1.0
    Z[:, st["news_0"].start:st["news_1"].stop] = np.eye(2 * l)
    Z[:, st["noise_0"].start:st["noise_1"].stop] = np.eye(2 * l)

    T = np.zeros((m, m))
    T[:p, :p] = companion(params.rho)
    if config.spillovers:
        T[p:, p:] = np.diag(params.ts_diag)

    U = upper_ones(l)
    R = np.zeros((m, r))
    R[0, 0] = params.sigma_e
    R[0, sh["news_0"]] = params.sigma_news[0]
    R[0, sh["news_1"]] = params.sigma_news[1]
    R[st["news_0"], sh["news_0"]] = -U * params.sigma_news[0]
    R[st["news_1"], sh["news_1"]] = -U * params.sigma_news[1]
    R[st["noise_0"], sh["noise_0"]] = np.diag(params.sigma_noise[0])
    R[st["noise_1"], sh["noise_1"]] = np.diag(params.sigma_noise[1])
    if config.cross_news != "none":
        R[st["news_0"], sh["news_1"]] = params.psi
    if config.cross_noise != "none":
        R[st["noise_0"], sh["noise_1"]] = params.phi

    c = np.zeros(m)
    if config.center:
        c[0] = params.mean * (1.0 - params.rho.sum())
    return StateSpaceModel.from_matrices(Z, T, R, c, st, obs_keys(config))


def simulate(model: StateSpaceModel, horizon: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``horizon`` periods of states and observations.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`
    (including a ``Generator``, which is then advanced).
    """
    if int(horizon) != horizon or horizon < 1:
        raise InputError(f"horizon must be an integer >= 1, got {horizon!r}")
    horizon = int(horizon)
    rng = np.random.default_rng(seed)
    z0 = rng.standard_normal(model.m)
    eta = rng.standard_normal((horizon - 1, model.r))
    states = _kernels.simulate_kernel(
        np.ascontiguousarray(model.T), model.c, np.ascontiguousarray(model.R),
        model.a1, model.initial_factor(), z0, eta,
    )
    return states, states @ model.Z.T


# --- flat parameter vector -------------------------------------------------

def theta_labels(config: ReconConfig) -> list[str]:
    """Names of the flat parameter entries, in packing order."""
    l = config.l
    out = [f"rho_{j}" for j in range(1, config.p + 1)]
    out.append("sigma_e")
    for kind in ("news", "noise"):
        for s in range(2):
            out += [f"sigma_{kind}_{s}_{i}" for i in range(1, l + 1)]
    if config.center:
        out.append("mean")
    if config.spillovers:
        out += [f"ts_{name}_{i}" for name in ("news_0", "news_1", "noise_0", "noise_1")
                for i in range(1, l + 1)]
    for name, mode in (("psi", config.cross_news), ("phi", config.cross_noise)):
        if mode == "contemporaneous":
            out += [f"{name}_{i}_{i}" for i in range(1, l + 1)]
        elif mode == "unrestricted":
            out += [f"{name}_{i}_{j}" for i in range(1, l + 1) for j in range(1, l + 1)]
    return out


def theta_size(config: ReconConfig) -> int:
    return len(theta_labels(config))


def theta_pack(params: ParamVector, config: ReconConfig) -> np.ndarray:
    """Flatten ``params`` (see ``docs/theta-layout.md`` for the ordering)."""
    parts = [params.rho, [params.sigma_e], params.sigma_news.ravel(), params.sigma_noise.ravel()]
    if config.center:
        if params.mean is None:
            raise InputError("config.center requires a mean parameter")
        parts.append([params.mean])
    if config.spillovers:
        if params.ts_diag is None:
            raise InputError("spillovers require ts_diag")
        parts.append(params.ts_diag)
    for val, mode in ((params.psi, config.cross_news), (params.phi, config.cross_noise)):
        if mode == "none":
            continue
        if val is None:
            raise InputError(f"cross mode {mode!r} requires a loading matrix")
        parts.append(np.diag(val) if mode == "contemporaneous" else np.ravel(val))
    flat = np.concatenate([np.asarray(x, dtype=float).ravel() for x in parts])
    if flat.size != theta_size(config):
        raise InputError(f"parameter dimensions do not match config (got {flat.size} entries)")
    return flat


def theta_unpack(flat, config: ReconConfig) -> ParamVector:
    flat = np.asarray(flat, dtype=float).ravel()
    if flat.size != theta_size(config):
        raise InputError(f"expected {theta_size(config)} entries, got {flat.size}")
    l, p = config.l, config.p
    pos = 0

    def take(n):
        nonlocal pos
        out = flat[pos:pos + n]
        pos += n
        return out.copy()

    rho = take(p)
    sigma_e = take(1)[0]
    sigma_news = take(2 * l).reshape(2, l)
    sigma_noise = take(2 * l).reshape(2, l)
    mean = take(1)[0] if config.center else None
    ts_diag = take(4 * l) if config.spillovers else None
    mats = []
    for mode in (config.cross_news, config.cross_noise):
        if mode == "none":
            mats.append(None)
        elif mode == "contemporaneous":
            mats.append(np.diag(take(l)))
        else:
            mats.append(take(l * l).reshape(l, l))
    return ParamVector(rho, sigma_e, sigma_news, sigma_noise, mean, ts_diag, mats[0], mats[1])


def default_params(config: ReconConfig) -> ParamVector:
    """A valid, moderately informative parameter point for ``config``."""
    l = config.l
    news = np.full((2, l), 0.5)
    if config.restrict_final_news:
        news[:, -1] = 0.0
    return ParamVector(
        rho=np.r_[0.5, np.zeros(config.p - 1)],
        sigma_e=1.0,
        sigma_news=news,
        sigma_noise=np.full((2, l), 0.5),
        mean=0.0 if config.center else None,
        ts_diag=np.zeros(4 * l) if config.spillovers else None,
        psi=np.zeros((l, l)) if config.cross_news != "none" else None,
        phi=np.zeros((l, l)) if config.cross_noise != "none" else None,
    )
