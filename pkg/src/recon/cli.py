"""``recon`` command line: simulate, estimate, identify, decompose, gains.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .analysis import historical_decomposition, reconciled_series, summary_dict
from .exceptions import ConvergenceError, DegenerateModelError, InputError, SamplerError
from .filter import kalman_filter, kalman_gain_weights
from .identify import count_moments
from .sampler import McmcSettings, PriorSpec, run_gibbs
from .ssm import CROSS_MODES, ParamVector, ReconConfig, build_state_space, simulate, state_layout
from .store import dumps_json, load_draws, save_draws, write_csv, write_text
from .vintages import (
    format_period,
    panel_from_matrix,
    parse_period,
    parse_vintage_csv,
    serialize_vintage_csv,
    to_observation_matrix,
)

log = logging.getLogger("recon")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _timestamp() -> str:
    """UTC time of the run; ``SOURCE_DATE_EPOCH`` pins it for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        try:
            when = dt.datetime.fromtimestamp(int(epoch), tz=dt.timezone.utc)
        except ValueError:
            raise InputError(f"SOURCE_DATE_EPOCH must be an integer, got {epoch!r}") from None
    else:
        when = dt.datetime.now(tz=dt.timezone.utc).replace(microsecond=0)
    return when.isoformat()


def write_manifest(out_dir: Path, command: str, inputs: dict[str, Path], outputs: list[Path],
                   **echo) -> Path:
    manifest = {
        "command": command,
        "tool": "recon",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created": _timestamp(),
        "inputs": {k: {"path": str(p), "sha256": sha256_file(p)} for k, p in sorted(inputs.items())},
        "outputs": {p.name: sha256_file(p) for p in outputs},
        **echo,
    }
    path = out_dir / "manifest.json"
    write_text(path, dumps_json(manifest))
    return path


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise InputError(f"output directory {out} is not writable")
    return out


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


# --- subcommands -----------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.horizon < 1:
        raise InputError("horizon must be >= 1")
    config = ReconConfig.load(args.config)
    params = ParamVector.load(args.params)
    model = build_state_space(config, params)
    states, obs = simulate(model, args.horizon, args.seed)
    out = _out_dir(args.out)
    start = parse_period(args.start)
    panel = panel_from_matrix(obs, start, config.l)
    periods = pd.period_range(start, periods=args.horizon, freq="Q")
    names = []
    for block, sl in state_layout(config).items():
        names += [f"{block}_{i}" for i in range(1, sl.stop - sl.start + 1)]
    truth = pd.DataFrame(states, columns=names)
    truth.insert(0, "period", [format_period(p) for p in periods])
    paths = [out / "vintages.csv", out / "states.csv"]
    write_text(paths[0], serialize_vintage_csv(panel))
    write_csv(truth, paths[1])
    write_manifest(out, "simulate", {"config": Path(args.config), "params": Path(args.params)},
                   paths, config=config.to_dict(), params=params.to_dict(),
                   seed=args.seed, horizon=args.horizon, start=args.start)
    print(f"wrote {args.horizon} periods to {out}")
    return EXIT_OK


def _settings(args) -> McmcSettings:
    return McmcSettings(iterations=args.iterations, burn_in=args.burn_in, thin=args.thin,
                        chains=args.chains, seed=args.seed, store_states=not args.no_states)


def cmd_estimate(args) -> int:
    config = ReconConfig.load(args.config)
    priors = PriorSpec.load(args.priors) if args.priors else PriorSpec()
    settings = _settings(args)
    panel = parse_vintage_csv(_read_text(args.data))
    obs = to_observation_matrix(panel, config)
    out = _out_dir(args.out)
    draws = run_gibbs(config, obs, priors, settings)
    paths = save_draws(draws, out)
    summary_path = out / "summary.json"
    write_text(summary_path, dumps_json(summary_dict(draws)))
    paths.append(summary_path)
    params = draws.posterior_mean_params()
    model = build_state_space(config, params)
    diag = kalman_filter(model, obs.values - draws.offset, allow_singular=True).to_frame()
    diag.insert(0, "period", [format_period(p) for p in obs.periods])
    paths.append(out / "filter_diagnostics.csv")
    write_csv(diag, paths[-1])
    if draws.states is not None:
        paths.append(out / "reconciled.csv")
        write_csv(reconciled_series(draws), paths[-1])
        paths.append(out / "decomposition.csv")
        write_csv(historical_decomposition(draws), paths[-1])
    inputs = {"config": Path(args.config), "data": Path(args.data)}
    if args.priors:
        inputs["priors"] = Path(args.priors)
    write_manifest(out, "estimate", inputs, paths, config=config.to_dict(),
                   priors=priors.to_dict(), settings=settings.to_dict(), seed=settings.seed)
    print(draws.summaries().to_string(float_format=lambda x: f"{x:.4f}"))
    print(f"{draws.n_draws} kept draws written to {out}")
    return EXIT_OK


def cmd_identify(args) -> int:
    releases = tuple(args.releases) if args.releases else None
    l = args.l if args.l is not None else (max(releases) if releases else None)
    if l is None:
        raise InputError("give --l or --releases")
    mc = count_moments(l, args.p, spillovers=args.spillovers, cross_news=args.cross_news,
                       cross_noise=args.cross_noise, releases=releases)
    print(mc.table())
    text = dumps_json(mc.to_dict())
    print(text, end="")
    if args.json:
        write_text(Path(args.json), text)
    return EXIT_OK


def cmd_decompose(args) -> int:
    draws = load_draws(args.draws)
    df = historical_decomposition(draws, args.series, args.first, args.last)
    cols = ["period", "series", "total", "news", "noise", "flag"]
    print(df[cols].to_string(index=False, float_format=lambda x: f"{x:.4f}"))
    if args.out:
        write_csv(df, Path(args.out))
    return EXIT_OK


def cmd_gains(args) -> int:
    config = ReconConfig.load(args.config)
    params = ParamVector.load(args.params)
    model = build_state_space(config, params)
    observed = None
    if args.drop:
        keys = list(model.obs_keys)
        observed = np.ones(len(keys), dtype=bool)
        for item in args.drop:
            s, i = (int(x) for x in item.split(":"))
            if (s, i) not in keys:
                raise InputError(f"no column for series {s} release {i}")
            observed[keys.index((s, i))] = False
    weights = kalman_gain_weights(model, observed)
    labels = config.labels()
    df = weights.reset_index()
    df.insert(2, "label", [labels[s][i - 1] for s, i in weights.index])
    print(df.to_string(index=False, float_format=lambda x: f"{x:.4f}"))
    if args.out:
        write_csv(df, Path(args.out))
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate vintages from a parameter file")
    p.add_argument("--config", required=True, help="model config (YAML or JSON)")
    p.add_argument("--params", required=True, help="parameter file (YAML or JSON)")
    p.add_argument("--horizon", type=int, required=True, help="number of periods")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", default="2000Q1", help="first period, YYYYQn")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="run the Gibbs sampler on a vintage CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--priors", help="prior file (YAML or JSON); defaults if omitted")
    p.add_argument("--data", required=True, help="vintage CSV: series,period,release,value")
    p.add_argument("--out", required=True, help="output directory")
    defaults = McmcSettings()
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--chains", type=int, default=defaults.chains)
    p.add_argument("--iterations", type=int, default=defaults.iterations)
    p.add_argument("--burn-in", type=int, default=defaults.burn_in)
    p.add_argument("--thin", type=int, default=defaults.thin)
    p.add_argument("--no-states", action="store_true", help="do not store state draws")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("identify", help="moment counting for a model shape")
    p.add_argument("--l", type=int, help="releases per series")
    p.add_argument("--p", type=int, default=1, help="AR order")
    p.add_argument("--spillovers", action="store_true")
    p.add_argument("--cross-news", choices=CROSS_MODES, default="none")
    p.add_argument("--cross-noise", choices=CROSS_MODES, default="none")
    p.add_argument("--releases", type=int, nargs=2, metavar=("L0", "L1"),
                   help="different release counts per series (extension)")
    p.add_argument("--json", help="also write the JSON breakdown here")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("decompose", help="news/noise split of total revisions")
    p.add_argument("--draws", required=True, help="output directory of `recon estimate`")
    p.add_argument("--series", type=int, choices=(0, 1))
    p.add_argument("--first", type=int, help="earlier release (default: first)")
    p.add_argument("--last", type=int, help="later release (default: last)")
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("gains", help="steady-state weight of each release on the truth")
    p.add_argument("--config", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--drop", nargs="*", metavar="S:I",
                   help="columns never observed, as series:release")
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=cmd_gains)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"recon: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"recon: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DegenerateModelError, ConvergenceError, SamplerError) as exc:
        print(f"recon: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
