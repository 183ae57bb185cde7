"""Moment-based building similarity used to pick a donor building."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .data import BuildingTimeSeries, FeatureStats, compute_feature_stats
from .errors import InputError


@dataclass(frozen=True)
class SimilarityReport:
    score: float
    matched_pairs: list[tuple[str, str]] = field(default_factory=list)
    zeta: int = 0
    penalty: float = 0.0
    n: int = 0
    m: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["matched_pairs"] = [list(p) for p in self.matched_pairs]
        return d


def _same_sign(a: float, b: float) -> bool:
    # an exact zero is compatible with either sign
    return a == 0.0 or b == 0.0 or (a > 0) == (b > 0)


def features_similar(a: FeatureStats, b: FeatureStats) -> bool:
    return (_same_sign(a.kurtosis, b.kurtosis)
            and _same_sign(a.skew, b.skew)
            and abs(a.mean - b.mean) < a.std + b.std)


def similarity_from_stats(transfer: Sequence[tuple[str, FeatureStats]],
                          target: Sequence[tuple[str, FeatureStats]]) -> SimilarityReport:
    """Greedy first-match similarity over named feature statistics.

    Each transfer feature claims at most one not-yet-claimed target feature,
    scanning the target features in the order given.
    """
    n, m = len(transfer), len(target)
    if n == 0 or m == 0:
        raise InputError(f"similarity needs non-empty feature sets, got n={n}, m={m}")
    claimed = [False] * m
    pairs = []
    for name_s, st in transfer:
        for j, (name_t, tt) in enumerate(target):
            if not claimed[j] and features_similar(st, tt):
                claimed[j] = True
                pairs.append((name_s, name_t))
                break
    zeta = len(pairs)
    penalty = 1.0 - m / n if n > m else 0.0
    score = float(np.clip(zeta / n - penalty, 0.0, 1.0))
    return SimilarityReport(score, pairs, zeta, penalty, n, m)


def building_similarity(transfer: BuildingTimeSeries, target: BuildingTimeSeries,
                        transfer_features: Sequence[str] | None = None,
                        target_features: Sequence[str] | None = None) -> SimilarityReport:
    fs = transfer_features or transfer.feature_order
    ft = target_features or target.feature_order
    return similarity_from_stats([(c, compute_feature_stats(transfer, c)) for c in fs],
                                 [(c, compute_feature_stats(target, c)) for c in ft])


def format_table(report: SimilarityReport) -> str:
    lines = [f"similarity {report.score:.4f}  (zeta={report.zeta}, n={report.n}, m={report.m}, "
             f"penalty={report.penalty:.4f})"]
    if report.matched_pairs:
        w = max(len(s) for s, _ in report.matched_pairs)
        lines.append(f"{'transfer':<{w}}  target")
        lines += [f"{s:<{w}}  {t}" for s, t in report.matched_pairs]
    else:
        lines.append("no matched features")
    return "\n".join(lines)
