"""Episode metrics computed from per-step trace records.

A trace is a list of dicts as produced by ``StepOutcome.record``; every
function here is pure post-processing over it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np


def _heads(rec: dict) -> range:
    return range(len(rec["active"]))


def posted_requests(trace: Iterable[dict]) -> int:
    return sum(sum(rec["active"]) for rec in trace)


def executed_requests(trace: Iterable[dict]) -> int:
    return sum(sum(rec["executed"]) for rec in trace)


def fulfilled_requests(trace: Iterable[dict]) -> int:
    return sum(sum(rec["z"]) for rec in trace)


def completion_pct(trace: Sequence[dict]) -> float:
    posted = posted_requests(trace)
    if posted == 0:
        return 0.0
    return 100.0 * executed_requests(trace) / posted


def fulfillment_pct(trace: Sequence[dict]) -> float:
    """Share of executed requests whose immersion met the threshold."""
    done = executed_requests(trace)
    if done == 0:
        return 0.0
    return 100.0 * fulfilled_requests(trace) / done


def msp_fulfillment_pct(trace: Sequence[dict]) -> float:
    """Share of (MSP, step) pairs with pending requests where every Head was satisfied."""
    pending = 0
    hits = 0
    for rec in trace:
        msps = sorted(set(rec["head_msp"]))
        for m in msps:
            if any(rec["active"][h] for h in _heads(rec) if rec["head_msp"][h] == m):
                pending += 1
        hits += sum(rec["L"])
    return 100.0 * hits / pending if pending else 0.0


def served_clients(trace: Iterable[dict]) -> int:
    return sum(rec["clients"][h] for rec in trace for h in _heads(rec) if rec["executed"][h])


def total_cost(trace: Iterable[dict]) -> float:
    return float(sum(sum(rec["cost"]) for rec in trace))


def mean_immersion(trace: Sequence[dict]) -> float:
    vals = [rec["immersion"][h] for rec in trace for h in _heads(rec) if rec["executed"][h]]
    return float(np.mean(vals)) if vals else 0.0


def per_msp_completed(trace: Sequence[dict]) -> list[int]:
    if not trace:
        return []
    counts = [0] * (max(trace[0]["head_msp"]) + 1)
    for rec in trace:
        for h in _heads(rec):
            if rec["executed"][h]:
                counts[rec["head_msp"][h]] += 1
    return counts


def range_metric(counts: Sequence[float]) -> float:
    if len(counts) == 0:
        raise ValueError("range of an empty vector")
    return max(counts) - min(counts)


def gini(counts: Sequence[float]) -> float:
    """Mean absolute difference over twice the mean; 0 for an all-zero vector."""
    x = np.sort(np.asarray(counts, dtype=np.float64))
    n = x.size
    if n == 0:
        raise ValueError("gini of an empty vector")
    if np.any(x < 0):
        raise ValueError("gini needs non-negative values")
    total = float(x.sum())
    if total == 0:
        return 0.0
    # sum_i sum_j |x_i - x_j| = 2 * sum_k (2k - n - 1) x_(k) for ascending x
    ranks = 2 * np.arange(1, n + 1) - n - 1
    pair_sum = 2.0 * float(np.dot(ranks, x))
    return pair_sum / (2.0 * n * n * (total / n))


@dataclass
class EpisodeReport:
    completion: float
    fulfillment: float
    msp_fulfillment: float
    served_clients: int
    total_cost: float
    mean_immersion: float
    posted: int
    executed: int
    fulfilled: int
    per_msp_completed: list[int]
    range: float
    gini: float
    steps: int

    def row(self) -> dict:
        out = asdict(self)
        out["per_msp_completed"] = " ".join(str(c) for c in self.per_msp_completed)
        return out


def summarize(trace: Sequence[dict]) -> EpisodeReport:
    counts = per_msp_completed(trace)
    return EpisodeReport(
        completion=completion_pct(trace),
        fulfillment=fulfillment_pct(trace),
        msp_fulfillment=msp_fulfillment_pct(trace),
        served_clients=served_clients(trace),
        total_cost=total_cost(trace),
        mean_immersion=mean_immersion(trace),
        posted=posted_requests(trace),
        executed=executed_requests(trace),
        fulfilled=fulfilled_requests(trace),
        per_msp_completed=counts,
        range=range_metric(counts) if counts else 0,
        gini=gini(counts) if counts else 0.0,
        steps=len(trace),
    )
