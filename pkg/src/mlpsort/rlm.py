"""Recurse-last multiway mergesort.

Sorts locally once, then repeatedly partitions the PEs' sorted sequences
into r parts of exactly equal size (via simultaneous multisequence
selections), ships each part to its PE group, merges the received runs
locally, and recurses within the groups.  Because part boundaries are
exact global ranks, every PE finishes with floor(n/p) or ceil(n/p)
elements, and the data moves only once per level.
"""

from __future__ import annotations

from dataclasses import dataclass
from heapq import merge as _heap_merge
from typing import Iterable, Mapping, Sequence

from .core import Element, SeedSpec
from .delivery import deliver
from .simnet import ExchStats, Network


@dataclass(frozen=True)
class LevelPlan:
    """Group counts per recursion level; their product must telescope the
    whole machine down to single PEs."""

    p: int
    group_counts: tuple[int, ...]

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("need at least one PE")
        remaining = self.p
        for r in self.group_counts:
            if r < 1 or remaining % r != 0:
                raise ValueError(
                    f"group counts {self.group_counts} do not divide {self.p}")
            remaining //= r
        if remaining != 1:
            raise ValueError(
                f"group counts {self.group_counts} do not telescope {self.p} to 1")

    @property
    def levels(self) -> int:
        return len(self.group_counts)


def merge_runs(runs: Iterable[Sequence[Element]]) -> list[Element]:
    """Merge sorted runs into one sorted sequence (tournament-style)."""
    return list(_heap_merge(*runs))


def _cut_points(net, group, local, r, seed):
    """Exact split positions so that part g receives elements of global
    ranks (target[g-1], target[g]]; ties in targets (empty parts) and the
    extremes are resolved without extra selections."""
    from .multiselect import multiselect_many

    members = list(group.members)
    n_g = sum(len(local[pe]) for pe in members)
    part, rem = divmod(n_g, r)
    targets = []
    acc = 0
    for g in range(r - 1):
        acc += part + (1 if g < rem else 0)
        targets.append(acc)
    queries = sorted({t for t in targets if 0 < t < n_g})
    found = {}
    if queries:
        results = multiselect_many(net, group, local, queries, seed)
        found = {res.rank: res.splits for res in results}
    cuts = {pe: [0] for pe in members}
    for t in targets:
        for pe in members:
            if t == 0:
                cuts[pe].append(0)
            elif t == n_g:
                cuts[pe].append(len(local[pe]))
            else:
                cuts[pe].append(found[t][pe])
    for pe in members:
        cuts[pe].append(len(local[pe]))
    return cuts


def rlm_sort(net: Network, data: Mapping[int, Sequence[Element]],
             plan: LevelPlan, scheme: str, seed: SeedSpec,
             ) -> tuple[dict[int, list[Element]], list[dict]]:
    """Run the full sort; returns the per-PE sorted output and one stats
    record per level (loads after the level plus the bottleneck shape of
    its data exchange)."""
    if plan.p != net.p:
        raise ValueError("plan does not match the machine size")
    ledger = net.ledger
    with ledger.phase("local_sorting"):
        local = {pe: sorted(data[pe]) for pe in range(net.p)}

    level_reports = []
    groups = [net.all_pes]
    for lv, r in enumerate(plan.group_counts):
        data_stats = []
        next_groups = []
        for group in groups:
            gseed = seed.derive(f"L{lv}-g{group.lo}")
            with ledger.phase("splitter_selection"):
                cuts = _cut_points(net, group, local, r, gseed.derive("select"))
            pieces = {
                pe: [local[pe][a:b] for a, b in zip(cuts[pe], cuts[pe][1:])]
                for pe in group.members
            }
            with ledger.phase("data_delivery"):
                result = deliver(net, group, pieces, scheme,
                                 gseed.derive("deliver"))
            data_stats.append(result.data_stats)
            with ledger.phase("bucket_processing"):
                for pe in group.members:
                    local[pe] = merge_runs(result.received[pe])
            next_groups.extend(group.split(r))
        groups = next_groups
        loads = [len(local[pe]) for pe in range(net.p)]
        stats = ExchStats.combine(data_stats)
        level_reports.append({
            "level": lv + 1,
            "r": r,
            "max_load": max(loads),
            "min_load": min(loads),
            "max_words": stats.max_words,
            "max_msgs": stats.max_msgs,
            "max_sent_msgs": stats.max_sent_msgs,
            "max_recv_msgs": stats.max_recv_msgs,
        })
    return local, level_reports
