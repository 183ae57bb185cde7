"""Warm-up metrics, improvement factors, pair-table aggregation and the exponential trend fit."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class MetricsReport:
    warmup_duration: int
    warmup_variance: float
    mean_variance: float
    window: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PairImprovement:
    target: str
    transfer: str
    similarity: float
    duration_factor: float
    warmup_var_factor: float
    mean_var_factor: float


FACTOR_COLUMNS = ("duration_factor", "warmup_var_factor", "mean_var_factor")


def rolling_variance(series: Sequence[float], window: int) -> np.ndarray:
    """Population variance of each length-``window`` window, aligned at the window end."""
    x = np.asarray(series, dtype=float)
    if window < 2:
        raise InputError(f"rolling window must be >= 2, got {window}")
    if x.size < window:
        raise InputError(f"series of length {x.size} is shorter than window {window}")
    win = np.lib.stride_tricks.sliding_window_view(x, window)
    return win.var(axis=1)


def _rolling_mean(v: np.ndarray, window: int) -> np.ndarray:
    return np.lib.stride_tricks.sliding_window_view(v, window).mean(axis=1)


def warmup_metrics(predicted_rewards: Sequence[float], window: int = 24) -> MetricsReport:
    """Warm-up duration and variances of a predicted-reward trace.

    The rolling variance is smoothed by a rolling mean of the same window; the
    warm-up ends at the first smoothed value that is at or below the mean of the
    rolling variance. That value spans steps ``j .. j + 2W - 2`` and is placed at
    the span centre ``j + W - 1``. A trace that qualifies at the first smoothed
    value (``j == 0``) has no warm-up and reports duration 0.
    """
    r = np.asarray(predicted_rewards, dtype=float)
    if r.size < 2 * window:
        raise InputError(f"need at least {2 * window} rewards for window {window}, got {r.size}")
    v = rolling_variance(r, window)
    duration = warmup_from_variance(v, window, run_length=r.size)
    warm_var = float(np.var(r[:duration])) if duration > 0 else 0.0
    return MetricsReport(duration, warm_var, float(v.mean()), window)


def warmup_from_variance(v: Sequence[float], window: int, run_length: int | None = None) -> int:
    """Duration index given an already computed rolling-variance profile.

    If no smoothed value ever reaches the mean the warm-up never ends and the
    run length is returned.
    """
    v = np.asarray(v, dtype=float)
    smooth = _rolling_mean(v, window)
    hits = np.flatnonzero(smooth <= v.mean())
    if not hits.size:
        return run_length if run_length is not None else len(v) + window - 1
    j = int(hits[0])
    return 0 if j == 0 else j + window - 1


def improvement_factor(without_tl: float, with_tl: float) -> float:
    """Times-improvement ``without / with``; values above 1 mean transfer helped.

    A zero with-transfer metric gives ``inf`` (or 1.0 when both are zero).
    """
    if without_tl < 0 or with_tl < 0 or math.isnan(without_tl) or math.isnan(with_tl):
        raise InputError(f"metrics must be non-negative, got {without_tl}, {with_tl}")
    if with_tl == 0:
        return 1.0 if without_tl == 0 else math.inf
    return without_tl / with_tl


def pair_improvement(target: str, transfer: str, similarity: float,
                     without: MetricsReport, with_: MetricsReport) -> PairImprovement:
    return PairImprovement(
        target, transfer, similarity,
        improvement_factor(without.warmup_duration, with_.warmup_duration),
        improvement_factor(without.warmup_variance, with_.warmup_variance),
        improvement_factor(without.mean_variance, with_.mean_variance),
    )


@dataclass
class Summary:
    rows: list[PairImprovement]
    average: dict[str, float]

    def to_csv(self, decimals: int = 2) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["target", "transfer", "similarity", *FACTOR_COLUMNS])
        fmt = lambda x: "inf" if math.isinf(x) else f"{x:.{decimals}f}"
        for p in self.rows:
            w.writerow([p.target, p.transfer, fmt(p.similarity), *(fmt(getattr(p, c)) for c in FACTOR_COLUMNS)])
        w.writerow(["Average", "", "", *(fmt(self.average[c]) for c in FACTOR_COLUMNS)])
        return buf.getvalue()

    def to_json(self) -> str:
        def clean(x):
            return "inf" if isinstance(x, float) and math.isinf(x) else x
        return json.dumps({
            "rows": [{k: clean(v) for k, v in asdict(p).items()} for p in self.rows],
            "average": {k: clean(v) for k, v in self.average.items()},
        }, indent=2)


def aggregate_pairs(pairs: Sequence[PairImprovement]) -> Summary:
    if not pairs:
        raise InputError("aggregate_pairs needs at least one pair")
    avg = {c: float(np.mean([getattr(p, c) for p in pairs])) for c in FACTOR_COLUMNS}
    return Summary(list(pairs), avg)


@dataclass(frozen=True)
class ExpFit:
    a: float
    b: float
    r_squared: float

    def predict(self, s):
        return self.a * np.exp(self.b * np.asarray(s, dtype=float))


def fit_exponential(points: Sequence[tuple[float, float]]) -> ExpFit:
    """Least-squares fit of ``ln y = ln a + b s``; R^2 is computed in log space."""
    if len(points) < 2:
        raise InputError(f"exponential fit needs >= 2 points, got {len(points)}")
    s = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if np.any(~(y > 0)) or np.any(~np.isfinite(y)):
        raise InputError("exponential fit needs finite, positive factors")
    if np.ptp(s) == 0:
        raise InputError("degenerate fit: all similarity values identical")
    ly = np.log(y)
    sc = s - s.mean()
    b = float(sc @ (ly - ly.mean()) / (sc @ sc))
    ln_a = float(ly.mean() - b * s.mean())
    resid = ly - (ln_a + b * s)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return ExpFit(math.exp(ln_a), b, r2)
