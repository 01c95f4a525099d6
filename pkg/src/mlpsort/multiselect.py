"""Selection of elements with prescribed global ranks across per-PE
sorted sequences, quickselect-style.

Each round all PEs draw the same random position from a shared stream,
locate the pivot through a prefix sum over the surviving window sizes,
narrow their windows with binary searches, and decide the recursion side
with a reduction.  Several selections run in lockstep so each round costs
one vector-valued collective per step regardless of how many ranks are
requested.  Because element identities are unique, the element of rank k
always exists and the returned split positions cut exactly k elements to
its left (inclusive).
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import Element, SeedSpec
from .simnet import Network, _members


@dataclass(frozen=True)
class SelectionResult:
    """The element of global rank ``rank`` plus per-PE cut positions.

    ``splits[pe]`` counts that PE's elements that are <= the splitter,
    so the split positions sum to ``rank`` exactly and taking the first
    ``splits[pe]`` elements everywhere yields precisely the ``rank``
    globally smallest elements.
    """

    rank: int
    splitter: Element
    splits: dict[int, int]


def multiselect(net: Network, group, local_sorted: Mapping[int, Sequence[Element]],
                k: int, seed: SeedSpec) -> SelectionResult:
    """Select the element of global rank k (1-based) from sorted sequences."""
    return multiselect_many(net, group, local_sorted, [k], seed)[0]


def multiselect_many(net: Network, group,
                     local_sorted: Mapping[int, Sequence[Element]],
                     ranks: Sequence[int], seed: SeedSpec,
                     ) -> list[SelectionResult]:
    members = list(_members(group))
    for pe in members:
        d = local_sorted[pe]
        if any(d[i + 1] < d[i] for i in range(len(d) - 1)):
            raise ValueError(f"local sequence of PE {pe} is not sorted")
    total = sum(len(local_sorted[pe]) for pe in members)
    if list(ranks) != sorted(set(ranks)):
        raise ValueError("ranks must be strictly ascending")
    for k in ranks:
        if not 1 <= k <= total:
            raise ValueError(f"rank {k} outside 1..{total}")
    n_sel = len(ranks)
    if n_sel == 0:
        return []

    rng = seed.rng()
    # Per-selection state: window [lo, hi) per PE and the residual target
    # rank within the surviving union.
    lo = {pe: [0] * n_sel for pe in members}
    hi = {pe: [len(local_sorted[pe])] * n_sel for pe in members}
    target = list(ranks)
    splitter: list[Element | None] = [None] * n_sel

    max_rounds = 8 * (max(1, total).bit_length())
    rounds = 0
    while any(s is None for s in splitter):
        rounds += 1
        if rounds > max_rounds:
            raise RuntimeError("selection exceeded its round budget")

        sizes = {pe: [hi[pe][s] - lo[pe][s] if splitter[s] is None else 0
                      for s in range(n_sel)]
                 for pe in members}
        prefixes, totals = net.prefix_sum_vec(members, sizes)

        # Shared pivot draws, one per still-active selection.
        draws = [rng.randint(1, totals[s]) if splitter[s] is None else 0
                 for s in range(n_sel)]

        # The PE owning the drawn position announces the pivot element;
        # modeled as a vector-valued reduction keeping the non-empty slot.
        pivot_vecs: dict[int, list[Element | None]] = {}
        for pe in members:
            vec: list[Element | None] = [None] * n_sel
            for s in range(n_sel):
                if splitter[s] is None:
                    before = prefixes[pe][s]
                    if before < draws[s] <= before + sizes[pe][s]:
                        vec[s] = local_sorted[pe][lo[pe][s] + (draws[s] - before - 1)]
            pivot_vecs[pe] = vec
        pivots = net.allreduce_vec(members, lambda a, b: b if b is not None else a,
                                   pivot_vecs)

        # Window counts below / at-or-below each pivot, then one summed
        # reduction over the concatenated count vectors.
        counts = {}
        for pe in members:
            d = local_sorted[pe]
            c_lt = [0] * n_sel
            c_le = [0] * n_sel
            for s in range(n_sel):
                if splitter[s] is None:
                    c_lt[s] = bisect_left(d, pivots[s], lo[pe][s], hi[pe][s]) - lo[pe][s]
                    c_le[s] = bisect_right(d, pivots[s], lo[pe][s], hi[pe][s]) - lo[pe][s]
            counts[pe] = c_lt + c_le
        summed = net.allreduce_vec(members, lambda a, b: a + b, counts)

        for s in range(n_sel):
            if splitter[s] is not None:
                continue
            below = summed[s]
            if target[s] <= below:
                for pe in members:
                    hi[pe][s] = lo[pe][s] + counts[pe][s]
            elif target[s] == below + 1:
                splitter[s] = pivots[s]
            else:
                for pe in members:
                    lo[pe][s] += counts[pe][s + n_sel]
                target[s] -= below + 1

    results = []
    for s, k in enumerate(ranks):
        found = splitter[s]
        splits = {pe: bisect_right(local_sorted[pe], found) for pe in members}
        if sum(splits.values()) != k:
            raise RuntimeError("split positions do not sum to the target rank")
        results.append(SelectionResult(rank=k, splitter=found, splits=splits))
    return results
