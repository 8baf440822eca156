"""Prediction metrics, ride-quality classes and run-to-run repeatability."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass
from typing import IO, Sequence

import numpy as np

from .errors import LengthMismatch


@dataclass(frozen=True)
class MetricReport:
    rmse: float  # in/mi
    mape: float | None  # percent; None when some truth value is 0
    r2: float | None  # None when truth has zero variance
    n: int
    flags: tuple[str, ...] = ()

    def rows(self) -> list[tuple[str, float | int | None]]:
        return [("rmse", self.rmse), ("mape", self.mape), ("r2", self.r2), ("n", self.n)]


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if p.size != t.size:
        raise LengthMismatch(f"{p.size} predictions vs {t.size} truth values")
    if p.size == 0:
        raise LengthMismatch("need at least one value")
    return p, t


def metrics(pred, truth) -> MetricReport:
    """RMSE, MAPE (denominator = truth) and R^2 (truth variance)."""
    p, t = _pair(pred, truth)
    err = p - t
    sse = float(np.sum(err**2))
    rmse = math.sqrt(sse / p.size)
    flags = []
    if np.any(t == 0):
        mape = None
        flags.append("zero_truth")
    else:
        mape = 100.0 * float(np.mean(np.abs(err / t)))
    sst = float(np.sum((t - t.mean()) ** 2))
    if sst == 0:
        r2 = None
        flags.append("zero_variance")
    else:
        r2 = 1.0 - sse / sst
    return MetricReport(rmse, mape, r2, int(p.size), tuple(flags))


class RideClass(enum.Enum):
    GOOD = "Good"
    FAIR = "Fair"
    POOR = "Poor"


@dataclass(frozen=True)
class RideThresholds:
    good_max: float = 95.0  # in/mi
    fair_max: float = 170.0

    def __post_init__(self):
        if not 0 < self.good_max < self.fair_max:
            raise ValueError("need 0 < good_max < fair_max")


def classify(iri: float, thresholds: RideThresholds = RideThresholds()) -> RideClass:
    """Good below good_max, Poor above fair_max, Fair on [good_max, fair_max]."""
    if iri < thresholds.good_max:
        return RideClass.GOOD
    if iri <= thresholds.fair_max:
        return RideClass.FAIR
    return RideClass.POOR


def classification_accuracy(pred, truth, thresholds: RideThresholds = RideThresholds()) -> float:
    p, t = _pair(pred, truth)
    hits = sum(classify(a, thresholds) is classify(b, thresholds) for a, b in zip(p, t))
    return 100.0 * hits / p.size


def class_counts(values, thresholds: RideThresholds = RideThresholds()) -> dict[str, int]:
    counts = {c.value: 0 for c in RideClass}
    for v in np.asarray(values, dtype=float).ravel():
        counts[classify(v, thresholds).value] += 1
    return counts


@dataclass
class RepeatabilityReport:
    mean: np.ndarray
    sd: np.ndarray  # population SD across runs, in/mi
    cv: np.ndarray  # percent; NaN where the segment mean is 0
    mean_cv: float
    count_cv_over_20: int
    zero_mean_segments: tuple[int, ...] = ()

    def fraction_over_20(self) -> float:
        valid = int(np.sum(~np.isnan(self.cv)))
        return self.count_cv_over_20 / valid if valid else 0.0


def repeatability(runs: Sequence[Sequence[float]], cv_limit: float = 20.0) -> RepeatabilityReport:
    """Per-segment SD and CV across repeated runs aligned by segment index."""
    if len(runs) < 2:
        raise LengthMismatch("repeatability needs at least two runs")
    lengths = {len(r) for r in runs}
    if len(lengths) != 1:
        raise LengthMismatch(f"runs have different segment counts: {sorted(lengths)}")
    a = np.asarray(runs, dtype=float)
    mean = a.mean(axis=0)
    sd = (a - a[0]).std(axis=0)  # shifted so identical runs give exactly 0
    zero = mean == 0
    cv = np.full(mean.shape, np.nan)
    cv[~zero] = 100.0 * sd[~zero] / mean[~zero]
    valid = cv[~zero]
    return RepeatabilityReport(
        mean=mean,
        sd=sd,
        cv=cv,
        mean_cv=float(valid.mean()) if valid.size else float("nan"),
        count_cv_over_20=int(np.sum(valid > cv_limit)),
        zero_mean_segments=tuple(int(i) for i in np.flatnonzero(zero)),
    )


# report output ---------------------------------------------------------------


def write_metric_csv(rows: Sequence[tuple[str, object]], out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("metric", "value"))
    for k, v in rows:
        w.writerow((k, "" if v is None else v))


def metric_json(report: MetricReport, **extra) -> str:
    d = asdict(report)
    d["flags"] = list(report.flags)
    d.update(extra)
    return json.dumps(d, indent=2, sort_keys=True)


def write_repeatability_csv(rep: RepeatabilityReport, out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("index", "mean", "sd", "cv"))
    for i, (m, s, c) in enumerate(zip(rep.mean, rep.sd, rep.cv)):
        w.writerow((i, repr(float(m)), repr(float(s)), "" if np.isnan(c) else repr(float(c))))


def format_table(rows: Sequence[tuple[str, object]]) -> str:
    width = max(len(k) for k, _ in rows)
    lines = []
    for k, v in rows:
        if v is None:
            val = "n/a"
        elif isinstance(v, float):
            val = f"{v:.4f}"
        else:
            val = str(v)
        lines.append(f"{k.ljust(width)}  {val}")
    return "\n".join(lines)
