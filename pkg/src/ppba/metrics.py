"""Campaign metrics: ASR, average queries, AUC, step-effective rate.

AUC convention: unit-step summation of SR(q) for q in [1, max_queries],
where SR(q) is the fraction of records that succeeded using at most q
queries. Units are "queries"; the convention is stamped into every
summary so reports are never silently mismatched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .attack import AttackRecord

__all__ = [
    "MetricsSummary",
    "compute_metrics",
    "success_rate_curve",
    "step_effective_rate",
]

AUC_CONVENTION = "unit-step sum of SR(q) over q in [1, max_queries]"


@dataclass
class MetricsSummary:
    asr: float
    avg_queries_success: Optional[float]  # absent when no sample succeeded
    avg_queries_all: float
    auc: float
    n_samples: int

    def to_dict(self) -> dict:
        d = {
            "asr": self.asr,
            "avg_queries_all": self.avg_queries_all,
            "auc": self.auc,
            "n_samples": self.n_samples,
            "auc_convention": AUC_CONVENTION,
        }
        if self.avg_queries_success is not None:
            d["avg_queries_success"] = self.avg_queries_success
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsSummary":
        return cls(
            asr=float(d["asr"]),
            avg_queries_success=(
                float(d["avg_queries_success"]) if "avg_queries_success" in d else None
            ),
            avg_queries_all=float(d["avg_queries_all"]),
            auc=float(d["auc"]),
            n_samples=int(d["n_samples"]),
        )


def success_rate_curve(records: Sequence[AttackRecord], max_queries: int) -> np.ndarray:
    """SR(q) for q = 1..max_queries; non-decreasing by construction."""
    n = len(records)
    counts = np.zeros(max_queries + 1)
    for r in records:
        if r.success and r.queries_used <= max_queries:
            counts[r.queries_used] += 1
    return np.cumsum(counts)[1:] / n


def compute_metrics(records: Sequence[AttackRecord], max_queries: int) -> MetricsSummary:
    if not records:
        raise ValueError("cannot compute metrics on an empty record list")
    n = len(records)
    succ_q = [r.queries_used for r in records if r.success]
    asr = len(succ_q) / n
    # Failed samples are charged the full budget.
    all_q = [r.queries_used if r.success else max_queries for r in records]
    auc = float(success_rate_curve(records, max_queries).sum())
    return MetricsSummary(
        asr=asr,
        avg_queries_success=(sum(succ_q) / len(succ_q)) if succ_q else None,
        avg_queries_all=sum(all_q) / n,
        auc=auc,
        n_samples=n,
    )


def step_effective_rate(records: Sequence[AttackRecord], window: int) -> List[Tuple[int, float]]:
    """Accepted fraction within a trailing window, over still-running attacks.

    At query index q (1-based), the rate pools queries max(1, q-window+1)..q
    from every record whose trace extends to q.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if not records:
        return []
    max_len = max(r.queries_used for r in records)
    curve = []
    for q in range(1, max_len + 1):
        lo = max(0, q - window)
        hits = 0
        total = 0
        for r in records:
            if r.queries_used >= q:
                flags = r.per_query_accepted[lo:q]
                hits += sum(flags)
                total += len(flags)
        curve.append((q, hits / total if total else 0.0))
    return curve
