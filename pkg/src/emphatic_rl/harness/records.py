"""Curve records, trailing-window statistics and the CSV writer."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

CSV_HEADER = ("experiment", "algorithm", "features", "lr1", "lr2", "run", "step", "metric", "value")
TRAILING_WINDOW = 1000


class CurveRecord(NamedTuple):
    experiment: str
    algorithm: str
    features: str
    lr1: float | None
    lr2: float | None
    run: int | str
    step: int
    metric: str
    value: float


def format_value(value) -> str:
    """Shortest round-trip decimal for floats, plain text otherwise."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(records: Iterable[CurveRecord], stream) -> int:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    n = 0
    for rec in records:
        writer.writerow([format_value(v) for v in rec])
        n += 1
    return n


def records_to_csv_text(records: Iterable[CurveRecord]) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()


def trailing_mean(values: np.ndarray, window: int = TRAILING_WINDOW) -> np.ndarray:
    """Mean over the last ``window`` entries ending at each index (fewer at the start)."""
    values = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, values.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def default_log_steps(n_steps: int) -> np.ndarray:
    """Every step up to 1e5, every tenth step after that, always the last step."""
    head = np.arange(min(n_steps, 100_000))
    tail = np.arange(100_000, n_steps, 10)
    steps = np.concatenate([head, tail])
    if n_steps and steps[-1] != n_steps - 1:
        steps = np.append(steps, n_steps - 1)
    return steps


def log_steps(n_steps: int, every: int | None) -> np.ndarray:
    if every is None:
        return default_log_steps(n_steps)
    steps = np.arange(0, n_steps, every)
    if n_steps and steps[-1] != n_steps - 1:
        steps = np.append(steps, n_steps - 1)
    return steps


@dataclass
class RunSeries:
    """Logged values of one run for several metrics; ``diverged_at`` is the
    first divergent step or None."""

    run: int
    metrics: dict[str, np.ndarray]
    steps: np.ndarray
    raw_sum: float
    final: dict[str, float]
    diverged_at: int | None = None


@dataclass
class Curve:
    """All runs of one (algorithm, learning rates) setting."""

    algorithm: str
    lr1: float | None
    lr2: float | None
    runs: list[RunSeries] = field(default_factory=list)

    @property
    def ok_runs(self) -> list[RunSeries]:
        return [r for r in self.runs if r.diverged_at is None]

    @property
    def n_diverged(self) -> int:
        return len(self.runs) - len(self.ok_runs)

    @property
    def auc(self) -> float:
        """Step-sum of the across-run mean curve (infinite if every run diverged)."""
        ok = self.ok_runs
        if not ok:
            return float("inf")
        return float(np.mean([r.raw_sum for r in ok]))

    def final_stats(self, key: str) -> tuple[float, float]:
        """Across-run mean and population std of a per-run final statistic."""
        vals = np.array([r.final[key] for r in self.ok_runs])
        if vals.size == 0:
            return float("nan"), float("nan")
        return float(vals.mean()), float(vals.std())

    def aggregate(self, metric: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(steps, mean, std)`` over non-divergent runs at the logged steps."""
        ok = self.ok_runs
        if not ok:
            return np.zeros(0, int), np.zeros(0), np.zeros(0)
        stack = np.vstack([r.metrics[metric] for r in ok])
        return ok[0].steps, stack.mean(axis=0), stack.std(axis=0)

    def records(self, experiment: str, features: str):
        for r in self.runs:
            for metric, values in r.metrics.items():
                for step, value in zip(r.steps[:values.size], values):
                    yield CurveRecord(experiment, self.algorithm, features, self.lr1, self.lr2,
                                      r.run, int(step), metric, float(value))
            if r.diverged_at is not None:
                yield CurveRecord(experiment, self.algorithm, features, self.lr1, self.lr2, r.run,
                                  r.diverged_at, "diverged", 1.0)
        if not self.ok_runs:
            return
        for metric in self.ok_runs[0].metrics:
            steps, mean, std = self.aggregate(metric)
            for label, values in (("mean", mean), ("std", std)):
                for step, value in zip(steps, values):
                    yield CurveRecord(experiment, self.algorithm, features, self.lr1, self.lr2,
                                      label, int(step), metric, float(value))
        last = int(self.ok_runs[0].steps[-1]) if self.ok_runs[0].steps.size else 0
        for key in self.ok_runs[0].final:
            mean, std = self.final_stats(key)
            yield CurveRecord(experiment, self.algorithm, features, self.lr1, self.lr2, "mean",
                              last, key, mean)
            yield CurveRecord(experiment, self.algorithm, features, self.lr1, self.lr2, "std",
                              last, key, std)
        yield CurveRecord(experiment, self.algorithm, features, self.lr1, self.lr2, "mean", last,
                          "auc", self.auc)
        yield CurveRecord(experiment, self.algorithm, features, self.lr1, self.lr2, "mean", last,
                          "diverged_runs", float(self.n_diverged))


def summarize_run(run: int, raw: dict[str, np.ndarray], primary: str, steps: np.ndarray,
                  n_steps: int, diverged_at: int | None, extra_final: dict | None = None,
                  window: int = TRAILING_WINDOW) -> RunSeries:
    """Reduce per-step raw metric arrays to logged series.

    Each raw metric ``name`` yields ``name`` and ``name_trailing`` columns;
    ``primary`` feeds the AUC and the ``final_trailing`` statistic.
    """
    metrics = {}
    final = {}
    for name, values in raw.items():
        trail = trailing_mean(values, window)
        keep = steps[steps < values.size]
        metrics[name] = values[keep]
        metrics[f"{name}_trailing"] = trail[keep]
        if name == primary:
            final["final_trailing"] = float(trail[-1]) if trail.size else float("nan")
    if extra_final:
        final.update(extra_final)
    raw_sum = float(np.sum(raw[primary])) if diverged_at is None else float("inf")
    return RunSeries(run, metrics, steps, raw_sum, final, diverged_at)
