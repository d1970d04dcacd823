"""Per-cell uplink RB allocation: minimum demands first, then proportional fair."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .scenario import DemandProfile

MIN_SINR_DB = -7.0
SE_CAP = 6.0  # bit/s/Hz, 64-QAM ceiling


def per_rb_rate(sinr_db, rb_bandwidth: float, min_sinr: float = MIN_SINR_DB, se_cap: float = SE_CAP):
    """Throughput of one RB at the given SINR; scalar or array."""
    if rb_bandwidth <= 0:
        raise ValueError("rb_bandwidth must be positive")
    sinr_db = np.asarray(sinr_db, dtype=float)
    se = np.minimum(np.log2(1.0 + 10.0 ** (sinr_db / 10.0)), se_cap)
    r = np.where(sinr_db < min_sinr, 0.0, rb_bandwidth * se)
    return float(r) if r.ndim == 0 else r


@dataclass
class CellAllocation:
    rb_count: dict[int, int] = field(default_factory=dict)
    throughput: dict[int, float] = field(default_factory=dict)
    outage: set[int] = field(default_factory=set)

    @property
    def used_rbs(self) -> int:
        return sum(self.rb_count.values())


def _marginal(n: int, rate: float, r_max: float) -> float:
    """Increase of log(min(n*rate, r_max)) from one more RB."""
    if n * rate >= r_max:
        return 0.0
    if (n + 1) * rate <= r_max:
        # independent of rate, so equal-n UEs tie exactly
        return math.log1p(1.0 / n)
    return math.log(r_max / (n * rate))


def schedule_cell(
    ues: Sequence[tuple[int, float]], n_rb: int, demand: DemandProfile
) -> CellAllocation:
    """Allocate ``n_rb`` RBs among ``ues`` given as (ue_id, per_rb_rate) pairs.

    Admission takes UEs in ascending order of the RBs they need to reach
    r_min (ties by id) while the budget lasts. Remaining RBs then go one at
    a time to the UE with the largest gain in log-throughput, where
    throughput is capped at r_max. Every UE in the result is either served
    (r_min <= throughput <= r_max) or in outage with no RBs.
    """
    if n_rb < 1:
        raise ValueError("n_rb must be >= 1")
    alloc = CellAllocation()
    rates = {}
    needs = []
    for uid, rate in ues:
        uid = int(uid)
        if rate <= 0:
            alloc.outage.add(uid)
            continue
        rates[uid] = rate
        # guard against r_min/rate landing a hair above an integer
        need = max(1, math.ceil(demand.r_min / rate - 1e-9))
        needs.append((need, uid))

    budget = n_rb
    for need, uid in sorted(needs):
        if need <= budget:
            alloc.rb_count[uid] = need
            budget -= need
        else:
            alloc.outage.add(uid)

    # max-heap on marginal gain, ties to the lowest id
    heap = []
    for uid, n in alloc.rb_count.items():
        gain = _marginal(n, rates[uid], demand.r_max)
        if gain > 0:
            heap.append((-gain, uid))
    heapq.heapify(heap)
    while budget > 0 and heap:
        _, uid = heapq.heappop(heap)
        n = alloc.rb_count[uid] + 1
        alloc.rb_count[uid] = n
        budget -= 1
        gain = _marginal(n, rates[uid], demand.r_max)
        if gain > 0:
            heapq.heappush(heap, (-gain, uid))

    for uid, n in alloc.rb_count.items():
        alloc.throughput[uid] = min(n * rates[uid], demand.r_max)
    for uid in alloc.outage:
        alloc.throughput[uid] = 0.0
    return alloc
