"""Results directory layout and its delimited text files.

::

    <root>/<Env>/<Env>.svg
    <root>/<Env>/<label>/manifest.txt          env, label, seeds, epochs
    <root>/<Env>/<label>/summary.csv           epoch,median,q1,q3
    <root>/<Env>/<label>/seed_<k>/progress.csv epoch,success_rate
    <root>/<Env>/<label>/seed_<k>/config.txt   key=value echo of the run
"""

from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Mapping, Sequence

RESULTS_ENV_VAR = "GOALFORGE_RESULTS"
PROGRESS_HEADER = ("epoch", "success_rate")
SUMMARY_HEADER = ("epoch", "median", "q1", "q3")


class DataError(Exception):
    """Raised when stored results are missing or inconsistent."""


def results_root(explicit: str | Path | None = None) -> Path:
    if explicit is not None:
        return Path(explicit)
    return Path(os.environ.get(RESULTS_ENV_VAR, "results"))


def config_dir(root, env: str, label: str) -> Path:
    path = Path(root) / env / label
    path.mkdir(parents=True, exist_ok=True)
    return path


def seed_dir(cfg_dir, seed: int) -> Path:
    path = Path(cfg_dir) / f"seed_{seed}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def fmt(x: float) -> str:
    return f"{x:.6f}"


def write_key_values(path, values: Mapping) -> None:
    lines = []
    for k, v in values.items():
        if isinstance(v, (list, tuple)):
            v = ",".join(str(x) for x in v)
        lines.append(f"{k}={v}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_key_values(path) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{n}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


class ProgressWriter:
    """Appends one ``epoch,success_rate`` row per epoch, flushing each time."""

    def __init__(self, path):
        self.path = Path(path)
        with open(self.path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(PROGRESS_HEADER)

    def append(self, epoch: int, rate: float) -> None:
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow((epoch, fmt(rate)))


def read_progress(path, missing_ok: bool = False) -> list[float] | None:
    path = Path(path)
    if not path.exists():
        if missing_ok:
            return None
        raise DataError(f"missing progress file {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != PROGRESS_HEADER:
        raise DataError(f"{path}: bad header")
    rates = []
    for i, row in enumerate(rows[1:]):
        if len(row) != 2 or int(row[0]) != i:
            raise DataError(f"{path}: malformed row {i + 1}: {row}")
        rates.append(float(row[1]))
    return rates


def write_summary(path, summary) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for e in range(len(summary.median)):
            w.writerow((e, fmt(summary.median[e]), fmt(summary.q1[e]), fmt(summary.q3[e])))


def read_summary(path) -> dict[str, list[float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != SUMMARY_HEADER:
        raise DataError(f"{path}: bad header")
    cols = {k: [] for k in SUMMARY_HEADER}
    for row in rows[1:]:
        for k, v in zip(SUMMARY_HEADER, row):
            cols[k].append(float(v))
    return cols


def write_manifest(cfg_dir, env: str, label: str, seeds: Sequence[int], epochs: int) -> None:
    write_key_values(Path(cfg_dir) / "manifest.txt",
                     {"env": env, "label": label, "seeds": list(seeds), "epochs": epochs})


def read_manifest(cfg_dir) -> dict:
    kv = read_key_values(Path(cfg_dir) / "manifest.txt")
    try:
        return {
            "env": kv["env"],
            "label": kv["label"],
            "seeds": [int(s) for s in kv["seeds"].split(",") if s],
            "epochs": int(kv["epochs"]),
        }
    except (KeyError, ValueError) as exc:
        raise DataError(f"{cfg_dir}/manifest.txt: {exc}") from exc


def load_seed_curves(cfg_dir) -> tuple[dict, list[list[float]]]:
    """Read every seed listed in the manifest, naming any missing or ragged run."""
    manifest = read_manifest(cfg_dir)
    curves = []
    for seed in manifest["seeds"]:
        path = Path(cfg_dir) / f"seed_{seed}" / "progress.csv"
        if not path.exists():
            raise DataError(
                f"{manifest['env']} {manifest['label']}: missing results for seed {seed} ({path})")
        curve = read_progress(path)
        if len(curve) != manifest["epochs"]:
            raise DataError(
                f"{manifest['env']} {manifest['label']} seed {seed}: {len(curve)} epochs "
                f"recorded, expected {manifest['epochs']} ({path})")
        curves.append(curve)
    return manifest, curves
