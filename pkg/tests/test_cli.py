import hashlib
import json

import numpy as np
import pandas as pd
import pytest

from recon.cli import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, build_parser, main
from recon.sampler import McmcSettings

FAST = ["--iterations", "40", "--burn-in", "20", "--thin", "2"]


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def files(tmp_path, monkeypatch):
    # pins the manifest timestamp so whole output directories compare byte for byte
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    config = tmp_path / "config.yaml"
    config.write_text("l: 2\np: 1\nrelease_labels:\n  - [GDE advance, GDE third]\n"
                      "  - [GDI second, GDI third]\n")
    params = tmp_path / "params.json"
    params.write_text(json.dumps({"rho": [0.5], "sigma_e": 1.0,
                                  "sigma_news": [[0.6, 0.0], [0.4, 0.0]],
                                  "sigma_noise": [[0.5, 0.3], [0.7, 0.4]]}))
    return tmp_path, config, params


def _simulate(tmp, config, params, name="sim", horizon=40, seed=3):
    out = tmp / name
    code = main(["simulate", "--config", str(config), "--params", str(params),
                 "--horizon", str(horizon), "--seed", str(seed), "--out", str(out)])
    return code, out


def test_simulate_writes_outputs_deterministically(files):
    tmp, config, params = files
    code, a = _simulate(tmp, config, params, "a")
    assert code == EXIT_OK
    _, b = _simulate(tmp, config, params, "b")
    for name in ("vintages.csv", "states.csv", "manifest.json"):
        assert sha(a / name) == sha(b / name)
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["seed"] == 3
    assert manifest["created"] == "2023-11-14T22:13:20+00:00"
    assert set(manifest["outputs"]) == {"vintages.csv", "states.csv"}
    assert manifest["inputs"]["config"]["sha256"] == sha(config)
    states = pd.read_csv(a / "states.csv")
    assert len(states) == 40 and states.columns[0] == "period"


def test_simulate_horizon_zero(files, capsys):
    tmp, config, params = files
    code, _ = _simulate(tmp, config, params, horizon=0)
    assert code == EXIT_INPUT
    assert "horizon" in capsys.readouterr().err


def test_missing_and_invalid_inputs(files):
    tmp, config, params = files
    assert main(["simulate", "--config", str(tmp / "nope.yaml"), "--params", str(params),
                 "--horizon", "5", "--out", str(tmp / "x")]) == EXIT_INPUT
    bad = tmp / "bad.yaml"
    bad.write_text("l: 0\n")
    assert main(["simulate", "--config", str(bad), "--params", str(params),
                 "--horizon", "5", "--out", str(tmp / "x")]) == EXIT_INPUT


def test_estimate_pipeline_and_reproducibility(files):
    tmp, config, params = files
    _, sim = _simulate(tmp, config, params)
    data = sim / "vintages.csv"
    outs = []
    for name in ("e1", "e2"):
        out = tmp / name
        assert main(["estimate", "--config", str(config), "--data", str(data),
                     "--out", str(out), "--seed", "7", *FAST]) == EXIT_OK
        outs.append(out)
    files_1 = sorted(p.name for p in outs[0].iterdir())
    assert files_1 == sorted(["draws.csv", "posterior.json", "states.npz", "summary.json",
                              "filter_diagnostics.csv", "reconciled.csv", "decomposition.csv",
                              "manifest.json"])
    for name in files_1:
        assert sha(outs[0] / name) == sha(outs[1] / name), name
    draws = pd.read_csv(outs[0] / "draws.csv")
    assert len(draws) == 10
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert len(summary["dynamics_pairs"]["rho"]) == 10


def test_chains_multiply_kept_draws(files):
    tmp, config, params = files
    _, sim = _simulate(tmp, config, params)
    out = tmp / "chains"
    assert main(["estimate", "--config", str(config), "--data", str(sim / "vintages.csv"),
                 "--out", str(out), "--chains", "4", "--no-states", *FAST]) == EXIT_OK
    draws = pd.read_csv(out / "draws.csv")
    assert len(draws) == 40
    assert sorted(draws["chain"].unique()) == [0, 1, 2, 3]
    with np.load(out / "states.npz") as npz:
        assert "states" not in npz.files


def test_default_schedule_keeps_1000_draws():
    args = build_parser().parse_args(["estimate", "--config", "c", "--data", "d", "--out", "o"])
    s = McmcSettings(args.iterations, args.burn_in, args.thin, args.chains)
    assert (args.iterations, args.burn_in, args.thin) == (100_000, 90_000, 10)
    assert s.n_kept == 1000


def test_missing_first_release_column_accepted(files):
    tmp, config, params = files
    _, sim = _simulate(tmp, config, params)
    frame = pd.read_csv(sim / "vintages.csv")
    frame = frame[~((frame["series"] == 1) & (frame["release"] == 1))]
    data = tmp / "no_gdi_advance.csv"
    frame.to_csv(data, index=False)
    out = tmp / "est"
    assert main(["estimate", "--config", str(config), "--data", str(data),
                 "--out", str(out), *FAST]) == EXIT_OK
    dec = pd.read_csv(out / "decomposition.csv")
    assert dec.loc[dec["series"] == 1, "flag"].all()
    assert not dec.loc[dec["series"] == 0, "flag"].any()


def test_estimate_mismatched_data(files):
    tmp, config, params = files
    data = tmp / "wide.csv"
    data.write_text("series,period,release,value\n0,2000Q1,3,1.0\n")
    assert main(["estimate", "--config", str(config), "--data", str(data),
                 "--out", str(tmp / "o"), *FAST]) == EXIT_INPUT


def test_estimate_numerical_failure(files):
    tmp, config, _ = files
    # noise-free priors cannot explain releases that disagree
    priors = tmp / "priors.yaml"
    labels = [f"sigma_{k}_{s}_{i}" for k in ("news", "noise") for s in range(2) for i in (1, 2)]
    priors.write_text("restricted: [" + ", ".join(labels) + "]\n")
    rng = np.random.default_rng(0)
    rows = [f"{s},{2000 + t // 4}Q{t % 4 + 1},{i},{rng.normal():.6f}"
            for t in range(12) for s in range(2) for i in (1, 2)]
    data = tmp / "noisy.csv"
    data.write_text("series,period,release,value\n" + "\n".join(rows) + "\n")
    assert main(["estimate", "--config", str(config), "--priors", str(priors),
                 "--data", str(data), "--out", str(tmp / "o"), *FAST]) == EXIT_NUMERICAL


def test_identify(capsys, tmp_path):
    path = tmp_path / "mc.json"
    assert main(["identify", "--l", "4", "--json", str(path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "44 moments vs 18 parameters" in out
    assert json.loads(path.read_text())["n_params"] == 18
    assert main(["identify"]) == EXIT_INPUT


def test_decompose_pure_noise(files, tmp_path, capsys):
    tmp, config, _ = files
    params = tmp / "noise_only.json"
    params.write_text(json.dumps({"rho": [0.5], "sigma_e": 1.0, "sigma_news": [[0, 0], [0, 0]],
                                  "sigma_noise": [[0.5, 0.3], [0.7, 0.4]]}))
    _, sim = _simulate(tmp, config, params)
    priors = tmp / "priors.json"
    priors.write_text(json.dumps({"restricted": ["sigma_news_0_1", "sigma_news_1_1"]}))
    est = tmp / "est"
    assert main(["estimate", "--config", str(config), "--priors", str(priors),
                 "--data", str(sim / "vintages.csv"), "--out", str(est), *FAST]) == EXIT_OK
    out_csv = tmp / "dec.csv"
    assert main(["decompose", "--draws", str(est), "--series", "0", "--out", str(out_csv)]) == EXIT_OK
    dec = pd.read_csv(out_csv)
    assert np.abs(dec["news"]).max() < 1e-8
    assert (dec["series"] == 0).all()
    assert main(["decompose", "--draws", str(est), "--first", "2", "--last", "2"]) == EXIT_INPUT


def test_gains_news_only(tmp_path, capsys):
    config = tmp_path / "c.yaml"
    config.write_text("l: 3\n")
    params = tmp_path / "p.yaml"
    params.write_text("rho: [0.5]\nsigma_e: 1.0\nsigma_news: [[0.8, 0.5, 0.0], [0.9, 0.6, 0.0]]\n"
                      "sigma_noise: [[0.001, 0.001, 0.001], [0.001, 0.001, 0.001]]\n")
    out = tmp_path / "g.csv"
    assert main(["gains", "--config", str(config), "--params", str(params), "--out", str(out)]) == EXIT_OK
    df = pd.read_csv(out)
    top = df.loc[df["weight"].idxmax()]
    assert top["release"] == 3
    assert main(["gains", "--config", str(config), "--params", str(params),
                 "--drop", "1:1", "--out", str(out)]) == EXIT_OK
    assert pd.read_csv(out)["weight"].isna().sum() == 1
    assert main(["gains", "--config", str(config), "--params", str(params),
                 "--drop", "2:1"]) == EXIT_INPUT
