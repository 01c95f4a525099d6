"""Adaptive multi-level sample sort with overpartitioning.

Each level draws a seeded sample of about a*b*r elements, rank-sorts it
with the grid algorithm, and broadcasts b*r-1 equidistant splitters.
Every PE partitions its data into b*r buckets, the bucket sizes are
summed globally, and whole buckets are packed into r consecutive groups
under the smallest feasible load bound (binary search over the greedy
scanning algorithm, which is provably optimal for consecutive ranges).
The bucket groups become the delivery pieces; groups recurse until
single PEs sort locally.  Overpartitioning (b > 1) is what lets the
packing smooth out sampling noise with whole buckets, so the required
sample size per unit of imbalance drops roughly from 1/eps^2 to 1/eps.

The final load is at most (1+eps) * n/p whenever every level's packing
achieved its per-level budget (1+eps')*n_level/r with
eps' = (1+eps)^(1/k) - 1; levels that miss the budget are flagged in the
level reports rather than resampled.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import Element, SeedSpec
from .delivery import deliver
from .fastsort import extract_by_ranks, fast_rank_sort
from .simnet import ExchStats, Network, PeGroup, _log2_ceil, _members


@dataclass(frozen=True)
class AmsParams:
    """Tuning knobs: per-level group counts (their product must equal p),
    oversampling factor a, overpartitioning factor b, and the acceptable
    total output imbalance eps."""

    group_counts: tuple[int, ...]
    oversampling: float | None = None  # default: 1.6 * log10(n) at run time
    overpartition: int = 16
    imbalance: float = 0.2

    def __post_init__(self):
        if not self.group_counts or any(r < 1 for r in self.group_counts):
            raise ValueError("group counts must be positive")
        if self.overpartition < 1:
            raise ValueError("overpartitioning factor must be at least 1")
        if self.oversampling is not None and self.oversampling <= 0:
            raise ValueError("oversampling factor must be positive")
        if self.imbalance <= 0:
            raise ValueError("imbalance budget must be positive")

    @property
    def levels(self) -> int:
        return len(self.group_counts)

    def per_level_imbalance(self) -> float:
        return (1.0 + self.imbalance) ** (1.0 / self.levels) - 1.0

    def validate_for(self, p: int) -> None:
        prod = math.prod(self.group_counts)
        if prod != p:
            raise ValueError(
                f"group counts {self.group_counts} do not telescope {p} PEs")


@dataclass(frozen=True)
class GroupPlan:
    """Assignment of consecutive bucket ranges to groups: group g owns
    buckets boundaries[g]..boundaries[g+1]-1 with load loads[g] <= max_load."""

    boundaries: tuple[int, ...]
    loads: tuple[int, ...]
    max_load: int


def _scan(sizes: Sequence[int], r: int, limit: int):
    """Greedy left-to-right packing under ``limit``; returns
    (plan or None, smallest overflow value seen).

    The overflow value - the load that just failed to fit plus the bucket
    that broke it - is the next limit worth trying after a failure, since
    anything below it reproduces the same packing.
    """
    overflow = None
    boundaries = [0]
    loads = []
    cur = 0
    for i, size in enumerate(sizes):
        if size > limit:
            return None, overflow
        if cur + size > limit:
            if overflow is None or cur + size < overflow:
                overflow = cur + size
            boundaries.append(i)
            loads.append(cur)
            cur = size
        else:
            cur += size
    boundaries.append(len(sizes))
    loads.append(cur)
    if len(loads) > r:
        return None, overflow
    while len(loads) < r:
        boundaries.append(len(sizes))
        loads.append(0)
    plan = GroupPlan(tuple(boundaries), tuple(loads), max(loads))
    return plan, overflow


def scan_groups(sizes: Sequence[int], r: int, limit: int) -> GroupPlan | None:
    """Pack consecutive buckets into at most r groups of load <= limit;
    None when the limit is infeasible."""
    plan, _ = _scan(sizes, r, limit)
    return plan


def optimal_group_plan(sizes: Sequence[int], r: int) -> GroupPlan:
    """Minimal feasible load bound, found by binary search over the greedy
    scan (success is monotone in the bound, and the optimum is always the
    load of some consecutive bucket range).

    The search window starts at the balanced band
    [max(max_bucket, ceil(n/r)), (1+4/b)*n/r]; when even the top of that
    band fails, it falls back to the full range up to n.
    """
    if r < 1:
        raise ValueError("need at least one group")
    sizes = list(sizes)
    if not sizes:
        raise ValueError("histogram has no buckets")
    total = sum(sizes)
    lo = max(max(sizes), -(-total // r))
    b_est = max(1, len(sizes) // r)
    hi = max(lo, math.ceil(total / r * (1.0 + 4.0 / b_est)))
    plan, overflow = _scan(sizes, r, hi)
    if plan is None:
        # No consecutive-range candidate in the balanced band: widen.
        lo = max(lo, overflow if overflow is not None else hi + 1)
        hi = total
        plan, _ = _scan(sizes, r, hi)
        assert plan is not None  # one group of everything always fits
    hi = plan.max_load
    best = plan
    while lo < hi:
        mid = (lo + hi) // 2
        plan, overflow = _scan(sizes, r, mid)
        if plan is not None:
            hi = plan.max_load
            best = plan
        else:
            lo = overflow if overflow is not None else mid + 1
    return best


def draw_sample(members: Sequence[int],
                local_data: Mapping[int, Sequence[Element]],
                count_total: int, seed: SeedSpec) -> dict[int, list[Element]]:
    """Seeded uniform sample: every PE contributes a random subset, with
    per-PE counts within one of count_total / #members (smaller only when
    a PE runs out of local data)."""
    n = sum(len(local_data[pe]) for pe in members)
    if count_total > n:
        raise ValueError(f"sample of {count_total} exceeds data size {n}")
    base, extra = divmod(count_total, len(members))
    out = {}
    for i, pe in enumerate(members):
        quota = base + (1 if i < extra else 0)
        data = local_data[pe]
        take = min(quota, len(data))
        rng = seed.derive(f"pe{pe}").rng()
        picked = sorted(rng.sample(range(len(data)), take))
        out[pe] = [data[i] for i in picked]
    return out


def select_splitters(net: Network, group,
                     sample: Mapping[int, Sequence[Element]],
                     buckets: int) -> list[Element]:
    """buckets-1 splitters of equidistant sample rank, known to all
    members.  Uses the grid ranking sort when the group size is a power
    of two, otherwise a gather-sort-broadcast with the same contract."""
    members = list(_members(group))
    size = sum(len(sample[pe]) for pe in members)
    if size < buckets - 1:
        raise ValueError(f"sample of {size} too small for {buckets} buckets")
    if buckets <= 1:
        return []
    wanted = sorted({(i * size) // buckets for i in range(1, buckets)})
    p = len(members)
    if p & (p - 1) == 0:
        ranked = fast_rank_sort(net, group, sample)
        return extract_by_ranks(net, group, ranked, wanted)
    merged = sorted(e for pe in members for e in sample[pe])
    cost = 2 * (size * net.params.beta + _log2_ceil(p) * net.params.alpha)
    net.ledger.charge_collective(members, size, cost)
    return [merged[rank] for rank in wanted]


def partition_buckets(local_data: Sequence[Element],
                      splitters: Sequence[Element],
                      ) -> tuple[list[list[Element]], list[int]]:
    """Stable partition: element e lands in bucket = number of splitters
    strictly below e.  Returns the buckets and the local histogram."""
    if any(not splitters[i] < splitters[i + 1] for i in range(len(splitters) - 1)):
        raise ValueError("splitters must be strictly ascending")
    buckets: list[list[Element]] = [[] for _ in range(len(splitters) + 1)]
    for e in local_data:
        buckets[bisect_left(splitters, e)].append(e)
    return buckets, [len(b) for b in buckets]


def ams_level(net: Network, group: PeGroup,
              local: dict[int, list[Element]], r: int, params: AmsParams,
              a: float, scheme: str, seed: SeedSpec) -> dict:
    """One sampling/partitioning/delivery round on ``group``; mutates
    ``local`` to the delivered data and reports the level's shape."""
    members = list(group.members)
    n_g = sum(len(local[pe]) for pe in members)
    ledger = net.ledger

    with ledger.phase("splitter_selection"):
        br = min(params.overpartition * r, n_g + 1)
        target = min(n_g, max(br - 1, math.ceil(a * br)))
        sample = draw_sample(members, local, target, seed.derive("sample"))
        drawn = sum(len(v) for v in sample.values())
        br = min(br, drawn + 1)
        splitters = select_splitters(net, group, sample, br)

    with ledger.phase("bucket_processing"):
        buckets = {}
        hists = {}
        for pe in members:
            buckets[pe], hists[pe] = partition_buckets(local[pe], splitters)
        global_hist = net.allreduce_vec(
            members, lambda x, y: x + y, hists)
        plan = optimal_group_plan(global_hist, r)

    pieces = {}
    for pe in members:
        rows = []
        for g in range(r):
            merged: list[Element] = []
            for b in range(plan.boundaries[g], plan.boundaries[g + 1]):
                merged.extend(buckets[pe][b])
            rows.append(merged)
        pieces[pe] = rows

    with ledger.phase("data_delivery"):
        result = deliver(net, group, pieces, scheme, seed.derive("deliver"))
    for pe in members:
        merged = []
        for run in result.received[pe]:
            merged.extend(run)
        local[pe] = merged

    budget = math.ceil((1.0 + params.per_level_imbalance()) * n_g / r)
    return {
        "group_size": group.size,
        "r": r,
        "bucket_count": br,
        "sample_size": drawn,
        "plan_load": plan.max_load,
        "load_budget": budget,
        "over_budget": plan.max_load > budget,
        "data_stats": result.data_stats,
    }


def ams_sort(net: Network, data: Mapping[int, Sequence[Element]],
             params: AmsParams, scheme: str, seed: SeedSpec,
             ) -> tuple[dict[int, list[Element]], list[dict]]:
    """Full sort; returns per-PE sorted output plus one report per level
    (aggregated over that level's groups)."""
    params.validate_for(net.p)
    n = sum(len(v) for v in data.values())
    a = params.oversampling
    if a is None:
        a = 1.6 * math.log10(max(n, 10))

    local = {pe: list(data[pe]) for pe in range(net.p)}
    groups = [net.all_pes]
    level_reports = []
    for lv, r in enumerate(params.group_counts):
        group_reports = []
        next_groups = []
        for group in groups:
            rep = ams_level(net, group, local, r, params, a, scheme,
                            seed.derive(f"L{lv}-g{group.lo}"))
            group_reports.append(rep)
            next_groups.extend(group.split(r))
        groups = next_groups
        loads = [len(local[pe]) for pe in range(net.p)]
        stats = ExchStats.combine(rep["data_stats"] for rep in group_reports)
        level_reports.append({
            "level": lv + 1,
            "r": r,
            "max_load": max(loads),
            "min_load": min(loads),
            "sample_size": max(rep["sample_size"] for rep in group_reports),
            "plan_load": max(rep["plan_load"] for rep in group_reports),
            "over_budget": sum(rep["over_budget"] for rep in group_reports),
            "max_words": stats.max_words,
            "max_msgs": stats.max_msgs,
            "max_sent_msgs": stats.max_sent_msgs,
            "max_recv_msgs": stats.max_recv_msgs,
        })

    with net.ledger.phase("local_sorting"):
        for pe in range(net.p):
            local[pe] = sorted(local[pe])
    return local, level_reports
