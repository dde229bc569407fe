"""Aggregate accuracy statistics, correlation coefficients, and histogram
binning over per-node results."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorrelationUndefinedError

# The six vector pairs of the standard correlation report.
CORRELATION_PAIRS = (
    ("dfl_accuracy", "local_accuracy"),
    ("dfl_accuracy", "train_size"),
    ("local_accuracy", "train_size"),
    ("dfl_accuracy", "avg_in_degree"),
    ("dfl_accuracy", "avg_component_size"),
    ("dfl_accuracy", "connected_ratio"),
)


@dataclass(frozen=True)
class Improvement:
    """Percent change of each accuracy metric against a baseline.

    For average/minimum/maximum this is (new - base) / base * 100; for the
    standard deviation it is the reduction (base - new) / base * 100, so a
    positive number is an improvement in every field.
    """

    average_pct: float
    minimum_pct: float
    maximum_pct: float
    std_dev_pct: float


@dataclass(frozen=True)
class AccuracyStats:
    average: float
    minimum: float
    maximum: float
    std_dev: float
    improvement: Improvement | None = None

    def to_json_dict(self) -> dict:
        out = {
            "average": self.average,
            "minimum": self.minimum,
            "maximum": self.maximum,
            "std_dev": self.std_dev,
        }
        if self.improvement is not None:
            out["improvement_pct"] = {
                "average": self.improvement.average_pct,
                "minimum": self.improvement.minimum_pct,
                "maximum": self.improvement.maximum_pct,
                "std_dev": self.improvement.std_dev_pct,
            }
        return out


def accuracy_stats(values, baseline: AccuracyStats | None = None) -> AccuracyStats:
    """Average, min, max and population standard deviation of accuracies.

    The node set is the whole population of the experiment, hence the
    population (not sample) standard deviation.
    """
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise ValueError("accuracy vector must be non-empty")
    stats = AccuracyStats(
        average=float(np.mean(v)),
        minimum=float(np.min(v)),
        maximum=float(np.max(v)),
        std_dev=float(np.std(v)),
    )
    if baseline is None:
        return stats

    def pct(new: float, base: float) -> float:
        if base == 0:
            raise ValueError("baseline metric is zero; improvement undefined")
        return (new - base) / base * 100.0

    improvement = Improvement(
        average_pct=pct(stats.average, baseline.average),
        minimum_pct=pct(stats.minimum, baseline.minimum),
        maximum_pct=pct(stats.maximum, baseline.maximum),
        std_dev_pct=-pct(stats.std_dev, baseline.std_dev),
    )
    return AccuracyStats(stats.average, stats.minimum, stats.maximum, stats.std_dev, improvement)


def _as_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    xv = np.asarray(list(x), dtype=np.float64)
    yv = np.asarray(list(y), dtype=np.float64)
    if xv.ndim != 1 or yv.ndim != 1 or xv.size != yv.size:
        raise ValueError("inputs must be 1-D vectors of equal length")
    if xv.size < 2:
        raise ValueError("need at least two observations")
    return xv, yv


def pearson(x, y) -> float:
    """Sample Pearson correlation; errors out on constant input vectors."""
    xv, yv = _as_pair(x, y)
    dx = xv - xv.mean()
    dy = yv - yv.mean()
    sx = float(np.sqrt(np.sum(dx * dx)))
    sy = float(np.sqrt(np.sum(dy * dy)))
    if sx == 0.0 or sy == 0.0:
        raise CorrelationUndefinedError("correlation of a constant vector is undefined")
    return float(np.sum(dx * dy) / (sx * sy))


def rank_with_ties(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    v = np.asarray(list(values), dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        mean_rank = (i + j) / 2.0 + 1.0
        ranks[order[i : j + 1]] = mean_rank
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation: Pearson on mean-tied ranks."""
    xv, yv = _as_pair(x, y)
    return pearson(rank_with_ties(xv), rank_with_ties(yv))


@dataclass(frozen=True)
class CorrelationRow:
    x_name: str
    y_name: str
    pearson: float
    spearman: float


@dataclass(frozen=True)
class CorrelationTable:
    rows: tuple[CorrelationRow, ...]

    def value(self, x_name: str, y_name: str, kind: str = "pearson") -> float:
        for row in self.rows:
            if {row.x_name, row.y_name} == {x_name, y_name}:
                return row.pearson if kind == "pearson" else row.spearman
        raise KeyError(f"no correlation row for ({x_name}, {y_name})")

    def to_json_dict(self) -> dict:
        return {
            f"{r.x_name}~{r.y_name}": {"pearson": r.pearson, "spearman": r.spearman}
            for r in self.rows
        }


def correlation_report(
    dfl_accuracy: dict,
    local_accuracy: dict,
    train_size: dict,
    avg_in_degree: dict,
    avg_component_size: dict,
    connected_ratio: dict,
) -> CorrelationTable:
    """Pearson and Spearman coefficients for the six standard vector pairs.

    All inputs are keyed by data-node id and must share the same index set.
    """
    vectors = {
        "dfl_accuracy": dfl_accuracy,
        "local_accuracy": local_accuracy,
        "train_size": train_size,
        "avg_in_degree": avg_in_degree,
        "avg_component_size": avg_component_size,
        "connected_ratio": connected_ratio,
    }
    index = sorted(dfl_accuracy)
    for name, vec in vectors.items():
        if sorted(vec) != index:
            raise ValueError(f"vector {name!r} is not indexed by the same node set")
    aligned = {name: [vec[i] for i in index] for name, vec in vectors.items()}
    rows = tuple(
        CorrelationRow(
            a,
            b,
            pearson(aligned[a], aligned[b]),
            spearman(aligned[a], aligned[b]),
        )
        for a, b in CORRELATION_PAIRS
    )
    return CorrelationTable(rows)


def histogram(values, bin_width: float) -> list[int]:
    """Counts over the [0, 1] partition into bins of the given width.

    Values equal to 1.0 land in the last bin; the count total equals the
    input length.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    v = np.asarray(list(values), dtype=np.float64)
    if v.size and (v.min() < 0.0 or v.max() > 1.0):
        raise ValueError("histogram values must lie in [0, 1]")
    n_bins = int(np.ceil(round(1.0 / bin_width, 12)))
    counts = [0] * n_bins
    for value in v:
        idx = min(int(value / bin_width), n_bins - 1)
        counts[idx] += 1
    return counts


def histogram_bin_lefts(bin_width: float) -> list[float]:
    n_bins = int(np.ceil(round(1.0 / bin_width, 12)))
    return [i * bin_width for i in range(n_bins)]
