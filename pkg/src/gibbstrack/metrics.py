"""Per-slot metric traces, CSV/JSON emission and summaries."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import GibbsTrackError

BASE_COLUMNS = ("t", "mse", "mse_avg", "active", "active_avg", "lambda")
INT_COLUMNS = {"t", "active", "extra_reads"}
FLOAT_FORMAT = "{:.12g}"


class IoError(GibbsTrackError):
    pass


class MetricsTrace:
    """Column store of slot records; running averages are maintained on append."""

    def __init__(self, theta_dim: int = 0, extra_columns: Iterable[str] = ()):
        self.theta_dim = theta_dim
        self.extra_columns = tuple(extra_columns)
        self.columns = (*BASE_COLUMNS, *(f"theta_{i}" for i in range(theta_dim)),
                        "extra_reads", *self.extra_columns)
        self.data: dict[str, list] = {c: [] for c in self.columns}
        self._mse_sum = 0.0
        self._active_sum = 0

    def __len__(self) -> int:
        return len(self.data["t"])

    def append(self, t: int, mse: float, active: int, lam: float, theta=(), extra_reads: int = 0,
               **extra) -> None:
        d = self.data
        self._mse_sum += mse
        self._active_sum += active
        count = len(d["t"]) + 1
        d["t"].append(t)
        d["mse"].append(mse)
        d["mse_avg"].append(self._mse_sum / count)
        d["active"].append(active)
        d["active_avg"].append(self._active_sum / count)
        d["lambda"].append(lam)
        for i in range(self.theta_dim):
            d[f"theta_{i}"].append(float(theta[i]))
        d["extra_reads"].append(extra_reads)
        for name in self.extra_columns:
            d[name].append(extra[name])

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.data[name])

    def rows(self):
        cols = [self.data[c] for c in self.columns]
        return zip(*cols)

    @classmethod
    def from_columns(cls, columns: list[str], data: dict[str, list]) -> "MetricsTrace":
        theta_dim = sum(1 for c in columns if c.startswith("theta_"))
        base = len(BASE_COLUMNS) + theta_dim + 1
        trace = cls(theta_dim, columns[base:])
        if tuple(columns) != trace.columns:
            raise IoError(f"unexpected column order {columns}")
        trace.data = {c: list(data[c]) for c in columns}
        return trace


def _fmt(name: str, value) -> str:
    if _is_int_column(name):
        return str(int(value))
    return FLOAT_FORMAT.format(float(value))


def summarize(trace: MetricsTrace, targets: dict | None = None) -> dict:
    """Final time-averages and convergence slots, computed from the trace alone."""
    n = len(trace)
    out: dict = {"slots": n}
    if n == 0:
        out.update(mse_avg=None, active_avg=None, final_lambda=None, total_extra_reads=0)
        return out
    mse = trace.column("mse")
    active = trace.column("active")
    out["mse_avg"] = float(mse.mean())
    out["active_avg"] = float(active.mean())
    out["final_lambda"] = float(trace.data["lambda"][-1])
    out["total_extra_reads"] = int(trace.column("extra_reads").sum())
    out["extra_reads_per_slot"] = out["total_extra_reads"] / n
    for i in range(trace.theta_dim):
        out[f"final_theta_{i}"] = float(trace.data[f"theta_{i}"][-1])
    targets = targets or {}
    if "n_bar" in targets:
        out["active_avg_convergence_slot"] = convergence_slot(
            trace.column("active_avg"), targets["n_bar"], 0.05 * max(targets["n_bar"], 1e-12))
    for i, target in enumerate(targets.get("theta0", []) or []):
        out[f"theta_{i}_convergence_slot"] = convergence_slot(
            trace.column(f"theta_{i}"), target, 0.05)
    return out


def convergence_slot(series: np.ndarray, target: float, tol: float):
    """First index after which ``|series - target| <= tol`` holds for good (None if never)."""
    bad = np.flatnonzero(np.abs(np.asarray(series, dtype=float) - target) > tol)
    if bad.size == 0:
        return 0
    last = int(bad[-1])
    return None if last == len(series) - 1 else last + 1


def write_metrics(trace: MetricsTrace, path, meta: dict | None = None) -> tuple[Path, Path]:
    """Write ``path`` (CSV) and ``path`` with suffix ``.json`` (summary sidecar)."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(trace.columns)
            names = trace.columns
            for row in trace.rows():
                writer.writerow([_fmt(c, v) for c, v in zip(names, row)])
        summary = summarize(read_metrics(path), (meta or {}).get("targets"))
        sidecar = path.with_suffix(".json")
        payload = {"summary": summary, **(meta or {})}
        sidecar.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return path, sidecar


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def read_metrics(path) -> MetricsTrace:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data: dict[str, list] = {c: [] for c in header}
            for row in reader:
                for c, v in zip(header, row):
                    data[c].append(int(v) if _is_int_column(c) else float(v))
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return MetricsTrace.from_columns(header, data)


def _is_int_column(name: str) -> bool:
    return name in INT_COLUMNS or name.startswith("cfg_")
