"""Reading and writing estimation results with byte-stable output."""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import InputError
from .sampler import McmcSettings, PosteriorDraws, PriorSpec
from .ssm import ReconConfig
from .vintages import format_period, parse_period

FLOAT_FORMAT = "%.17g"
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def dumps_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (frozenset, set, tuple)):
        return sorted(obj) if isinstance(obj, (set, frozenset)) else list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_csv(df: pd.DataFrame, path: Path, index: bool = False) -> None:
    write_text(path, df.to_csv(index=index, float_format=FLOAT_FORMAT, lineterminator="\n"))


def save_npz(path: Path, **arrays) -> None:
    """Like :func:`numpy.savez_compressed` but with fixed zip timestamps."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())


def save_draws(draws: PosteriorDraws, out_dir: str | Path) -> list[Path]:
    """Write ``draws.csv``, ``posterior.json`` and ``states.npz``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "draws.csv", out / "posterior.json", out / "states.npz"]
    write_csv(draws.frame(), paths[0])
    meta = {
        "config": draws.config.to_dict(),
        "settings": draws.settings.to_dict(),
        "priors": draws.priors.to_dict(),
        "labels": list(draws.labels),
        "offset": draws.offset,
        "periods": None if draws.periods is None else [format_period(p) for p in draws.periods],
        "initial_values": draws.init,
        "rejected_sweeps": list(draws.rejected),
    }
    write_text(paths[1], dumps_json(meta))
    arrays = {"values": draws.values, "chain": draws.chain}
    if draws.states is not None:
        arrays["states"] = draws.states
    save_npz(paths[2], **arrays)
    return paths


def load_draws(out_dir: str | Path) -> PosteriorDraws:
    out = Path(out_dir)
    try:
        meta = json.loads((out / "posterior.json").read_text(encoding="utf-8"))
        frame = pd.read_csv(out / "draws.csv")
        with np.load(out / "states.npz") as npz:
            values = npz["values"]
            chain = npz["chain"]
            states = npz["states"] if "states" in npz.files else None
    except (OSError, KeyError, ValueError) as exc:
        raise InputError(f"cannot read estimation output in {out}: {exc}") from None
    labels = meta["labels"]
    if list(frame.columns[2:]) != labels:
        raise InputError("draws.csv columns do not match posterior.json")
    periods = None
    if meta.get("periods") is not None:
        periods = pd.PeriodIndex([parse_period(p) for p in meta["periods"]], freq="Q")
    return PosteriorDraws(
        ReconConfig.from_mapping(meta["config"]),
        McmcSettings(**meta["settings"]),
        PriorSpec.from_mapping(meta["priors"]),
        labels,
        frame[labels].to_numpy(dtype=float),
        chain,
        states,
        values,
        float(meta["offset"]),
        periods,
        meta.get("initial_values", []),
        meta.get("rejected_sweeps", []),
    )
