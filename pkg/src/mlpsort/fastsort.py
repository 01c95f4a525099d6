"""Fast, work-inefficient ranking sort on a rows x cols PE grid.

Meant for small inputs (e.g. splitter samples) where latency matters more
than total work.  Every PE gossips its locally sorted data along its grid
row and its grid column; ranking the column union against the row union
and summing those partial ranks across the column's PEs yields each
element's global rank.  The data itself is never routed to sorted output
positions; callers extract the elements whose ranks they need.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

from .core import Element
from .simnet import Network, _members


@dataclass(frozen=True)
class GridShape:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid dimensions must be positive")


class RankedElement(NamedTuple):
    element: Element
    global_rank: int


def grid_shape(p: int) -> GridShape:
    """Near-square grid for a power-of-two PE count: 2^ceil(P/2) rows by
    2^floor(P/2) columns."""
    if p < 1 or p & (p - 1):
        raise ValueError(f"grid layout requires a power-of-two PE count, got {p}")
    exp = p.bit_length() - 1
    return GridShape(rows=1 << ((exp + 1) // 2), cols=1 << (exp // 2))


def _count_below(row_data: Sequence[Element], col_data: Sequence[Element],
                 ) -> list[int]:
    # Linear merge of two sorted sequences: for each column element, how
    # many row elements precede it.
    ranks = []
    i = 0
    for e in col_data:
        while i < len(row_data) and row_data[i] < e:
            i += 1
        ranks.append(i)
    return ranks


def fast_rank_sort(net: Network, group,
                   local_elements: Mapping[int, Sequence[Element]],
                   shape: GridShape | None = None,
                   max_per_pe: int | None = None,
                   ) -> dict[int, list[RankedElement]]:
    """Annotate every input element with its global rank.

    The group is laid out row-major on the grid.  Without an explicit
    ``shape`` the group size must be a power of two; irregular grids are
    supported for testing via ``shape``.
    """
    members = list(_members(group))
    p = len(members)
    if shape is None:
        shape = grid_shape(p)
    if shape.rows * shape.cols != p:
        raise ValueError(f"{shape} does not cover {p} PEs")
    if max_per_pe is not None:
        for pe in members:
            if len(local_elements[pe]) > max_per_pe:
                raise ValueError(f"PE {pe} exceeds {max_per_pe} elements")

    local_sorted = {pe: sorted(local_elements[pe]) for pe in members}

    rows = [members[i * shape.cols:(i + 1) * shape.cols] for i in range(shape.rows)]
    cols = [members[j::shape.cols] for j in range(shape.cols)]

    row_data = {}
    for row in rows:
        merged = net.gossip_merge(row, local_sorted)
        for pe in row:
            row_data[pe] = merged
    col_data = {}
    for col in cols:
        merged = net.gossip_merge(col, local_sorted)
        for pe in col:
            col_data[pe] = merged

    # Partial ranks of the column union against each row, summed down the
    # column so every member learns the global ranks of its column's data.
    rank_of: dict[int, dict[Element, int]] = {}
    for col in cols:
        partial = {pe: _count_below(row_data[pe], col_data[pe]) for pe in col}
        summed = net.allreduce_vec(col, lambda a, b: a + b, partial)
        ranks = dict(zip(col_data[col[0]], summed))
        for pe in col:
            rank_of[pe] = ranks

    return {
        pe: [RankedElement(e, rank_of[pe][e]) for e in local_elements[pe]]
        for pe in members
    }


def extract_by_ranks(net: Network, group,
                     ranked: Mapping[int, Sequence[RankedElement]],
                     wanted: Sequence[int]) -> list[Element]:
    """Replicate the elements holding the requested global ranks to every
    member, in rank order."""
    members = list(_members(group))
    total = sum(len(ranked[pe]) for pe in members)
    if list(wanted) != sorted(set(wanted)):
        raise ValueError("wanted ranks must be strictly ascending")
    if wanted and (wanted[0] < 0 or wanted[-1] >= total):
        raise ValueError(f"wanted ranks outside 0..{total - 1}")
    wanted_set = set(wanted)
    contributions = {
        pe: sorted(e for e, r in ranked[pe] if r in wanted_set)
        for pe in members
    }
    picked = net.gossip_merge(members, contributions)
    if len(picked) != len(wanted):
        raise RuntimeError("rank annotations are inconsistent")
    return picked
