"""Metric records, atomic CSV/JSON output and smoothed plot data."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from aerie.errors import DataError, UsageError

METRIC_FIELDS = ("epoch", "reward", "support_rate", "qos_total", "energy_remaining_mean", "epsilon", "wall_ms")
SERIES_FIELDS = ("reward", "support_rate", "qos_total")
TRAILING_FRACTION = 0.1


@dataclass(frozen=True)
class EpochMetrics:
    """One training epoch or inference episode.

    ``reward`` is the episode sum; ``support_rate`` and ``qos_total`` are
    per-step means; ``energy_remaining_mean`` is the mean final energy (J).
    """

    epoch: int
    reward: float
    support_rate: float
    qos_total: float
    energy_remaining_mean: float
    epsilon: float
    wall_ms: float

    def __post_init__(self):
        if not 0.0 <= self.support_rate <= 1.0:
            raise DataError(f"support rate {self.support_rate} outside [0, 1]")

    def is_finite(self) -> bool:
        return all(math.isfinite(float(getattr(self, name))) for name in METRIC_FIELDS)


def stamp_line(config_hash: str, seed: int) -> str:
    return f"# config_sha256={config_hash}; seed={seed}"


def parse_stamp(line: str) -> dict[str, str]:
    body = line.lstrip("#").strip()
    pairs = (part.strip().split("=", 1) for part in body.split(";") if "=" in part)
    return {key.strip(): value.strip() for key, value in pairs}


def atomic_write_text(path: Path, text: str) -> Path:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _cell(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def metrics_csv_text(metrics: Iterable[EpochMetrics], config_hash: str, seed: int) -> str:
    buffer = io.StringIO()
    buffer.write(stamp_line(config_hash, seed) + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(METRIC_FIELDS)
    for record in metrics:
        writer.writerow([_cell(getattr(record, name)) for name in METRIC_FIELDS])
    return buffer.getvalue()


def write_metrics_csv(path: Path, metrics: Iterable[EpochMetrics], config_hash: str, seed: int) -> Path:
    return atomic_write_text(path, metrics_csv_text(metrics, config_hash, seed))


def write_rows_csv(path: Path, rows: Sequence[dict[str, Any]], config_hash: str, seed: int) -> Path:
    """Stamped CSV of homogeneous dict rows, columns in first-row order."""
    if not rows:
        raise UsageError("no rows to write")
    buffer = io.StringIO()
    buffer.write(stamp_line(config_hash, seed) + "\n")
    writer = csv.DictWriter(buffer, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({key: _cell(value) for key, value in row.items()})
    return atomic_write_text(path, buffer.getvalue())


def read_metrics_csv(path: Path) -> tuple[dict[str, str], list[dict[str, float]]]:
    """Stamp and rows of a metrics CSV."""
    stamp: dict[str, str] = {}
    lines = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            stamp.update(parse_stamp(line))
        elif line.strip():
            lines.append(line)
    reader = csv.DictReader(lines)
    rows = [{key: float(value) for key, value in row.items()} for row in reader]
    return stamp, rows


def summarize(metrics: Sequence[EpochMetrics], fraction: float = TRAILING_FRACTION) -> dict[str, Any]:
    """Mean and standard deviation of each metric over the trailing ``fraction`` of records."""
    if not metrics:
        raise UsageError("cannot summarize an empty metric stream")
    count = max(1, int(round(len(metrics) * fraction)))
    tail = metrics[-count:]
    summary: dict[str, Any] = {"records": len(metrics), "window": count}
    for name in METRIC_FIELDS[1:]:
        values = np.array([getattr(m, name) for m in tail], dtype=float)
        summary[name] = {"mean": float(values.mean()), "std": float(values.std())}
    return summary


def distribution(metrics: Sequence[EpochMetrics], name: str) -> dict[str, float]:
    values = np.array([getattr(m, name) for m in metrics], dtype=float)
    return {
        "mean": float(values.mean()),
        "median": float(np.median(values)),
        "std": float(values.std()),
        "min": float(values.min()),
        "max": float(values.max()),
    }


def write_json(path: Path, document: dict[str, Any]) -> Path:
    return atomic_write_text(path, json.dumps(document, indent=2, sort_keys=True) + "\n")


def as_dicts(metrics: Iterable[EpochMetrics]) -> list[dict[str, Any]]:
    return [asdict(m) for m in metrics]


def from_dict(row: dict[str, Any]) -> EpochMetrics:
    names = {f.name for f in fields(EpochMetrics)}
    values = {key: row[key] for key in names}
    values["epoch"] = int(values["epoch"])
    return EpochMetrics(**values)


# -- plot data -------------------------------------------------------------------------


def trailing_mean(values: Sequence[float], window: int) -> np.ndarray:
    """Mean of the last ``window`` points at each index; shorter windows at the start."""
    if window < 1:
        raise UsageError(f"smoothing window must be at least 1, got {window}")
    data = np.asarray(values, dtype=float)
    if window == 1:
        return data.copy()
    cumulative = np.concatenate([[0.0], np.cumsum(data)])
    index = np.arange(1, data.size + 1)
    start = np.maximum(index - window, 0)
    return (cumulative[index] - cumulative[start]) / (index - start)


def export_plot_data(
    metric_files: Sequence[Path],
    window: int,
    out_path: Path,
    plot_path: Optional[Path] = None,
) -> Path:
    """Smoothed reward, support and QoS series of one or more metric files."""
    if not metric_files:
        raise UsageError("no metric files given")
    buffer = io.StringIO()
    buffer.write(f"# window={window}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("run", "epoch") + SERIES_FIELDS)
    curves = []
    for run, path in enumerate(metric_files):
        if not Path(path).is_file():
            raise UsageError(f"metric file {path} not found")
        _, rows = read_metrics_csv(path)
        if not rows:
            raise UsageError(f"{path} holds no metric rows")
        epochs = [int(row["epoch"]) for row in rows]
        smoothed = {name: trailing_mean([row[name] for row in rows], window) for name in SERIES_FIELDS}
        for i, epoch in enumerate(epochs):
            writer.writerow([run, epoch] + [repr(float(smoothed[name][i])) for name in SERIES_FIELDS])
        curves.append((Path(path).stem, epochs, smoothed))
    atomic_write_text(out_path, buffer.getvalue())
    if plot_path is not None:
        render_plot(curves, window, plot_path)
    return Path(out_path)


def render_plot(curves, window: int, plot_path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, len(SERIES_FIELDS), figsize=(4.5 * len(SERIES_FIELDS), 3.5))
    for label, epochs, smoothed in curves:
        for ax, name in zip(axes, SERIES_FIELDS):
            ax.plot(epochs, smoothed[name], label=label, linewidth=1.2)
    for ax, name in zip(axes, SERIES_FIELDS):
        ax.set_title(f"{name} (window {window})")
        ax.set_xlabel("epoch")
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize="small")
    fig.tight_layout()
    Path(plot_path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(plot_path, dpi=120)
    plt.close(fig)
    return Path(plot_path)
