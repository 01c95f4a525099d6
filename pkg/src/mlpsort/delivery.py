"""Routing of per-PE data pieces to PE groups with balanced receive loads
and bounded per-PE message counts.

Every participating PE holds one piece (a possibly empty element run) per
destination group.  All schemes place the elements of group g into the
same balanced slots: group member t (0-based of p') receives the elements
numbered [m*t/p', m*(t+1)/p') of the group's enumeration, so nobody gets
more than ceil(m_g/p') elements.  The schemes differ only in how pieces
are enumerated, which is what controls message counts:

* ``simple``     - prefix sum in plain PE order.  Senders need at most
                   2r messages, but a receiver can be hit by Omega(p)
                   tiny consecutive pieces.
* ``permuted``   - same, but each group enumerates senders in a
                   pseudorandom order, which defuses adversarial piece
                   layouts statistically.
* ``deterministic`` - pieces at most half an average receiver load are
                   placed whole, round-robin; larger pieces are assigned
                   by merging the prefix sums of residual receiver
                   capacities and of large-piece sizes, guaranteeing
                   O(r) messages per PE in both directions.
* ``randomized`` - oversized pieces are chopped into bounded chunks whose
                   placement descriptors are delegated to random PEs, so
                   receive counts stay near 2r with high probability.

The main element exchange of each call is reported separately
(``data_stats``) from the descriptor/reply exchanges (``control_stats``):
the per-PE message bounds above are statements about the data exchange.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

from .core import Element, SeedSpec, feistel_new
from .simnet import ExchStats, Network, PeGroup, _log2_ceil


class PieceSlice(NamedTuple):
    dest_pe: int
    offset: int
    length: int


@dataclass
class DeliveryPlan:
    """Where each (origin, group) piece was cut and sent.

    Slice offsets partition each piece exactly; ``group_totals[g]`` is the
    number of elements bound for group g.
    """

    group_totals: list[int]
    slices: dict[tuple[int, int], list[PieceSlice]]


@dataclass
class DeliveryResult:
    plan: DeliveryPlan
    received: dict[int, list[list[Element]]]
    data_stats: ExchStats
    control_stats: list[ExchStats] = field(default_factory=list)


def _piece_sizes(members, pieces, r):
    sizes = {}
    for pe in members:
        row = pieces[pe]
        if len(row) != r:
            raise ValueError(f"PE {pe} supplied {len(row)} pieces, expected {r}")
        sizes[pe] = [len(chunk) for chunk in row]
    return sizes


def _quota_slots(m: int, p_prime: int, t: int) -> tuple[int, int]:
    # Element numbers (0-based) owned by group member t.
    return (m * t) // p_prime, (m * (t + 1)) // p_prime


def _slice_range(sub_members, m: int, start: int, size: int,
                 ) -> list[tuple[int, int, int]]:
    """Cut element numbers [start, start+size) along member quota slots.

    Returns (dest_pe, within_range_offset, length) triples with ascending
    offsets and ascending destinations.
    """
    if size == 0 or m == 0:
        return []
    p_prime = len(sub_members)
    # First owner of element number `start`: 1-based ceil((start+1)*p'/m).
    t = ((start + 1) * p_prime + m - 1) // m - 1
    out = []
    covered = 0
    while covered < size and t < p_prime:
        slot_lo, slot_hi = _quota_slots(m, p_prime, t)
        take = min(start + size, slot_hi) - (start + covered)
        if take > 0:
            out.append((sub_members[t], covered, take))
            covered += take
        t += 1
    if covered != size:
        raise RuntimeError("quota mapping failed to cover a piece")
    return out


def _execute(net, group, members, r, plan_slices, pieces, group_totals,
             control_stats) -> DeliveryResult:
    outboxes = {pe: [] for pe in members}
    for pe in members:
        for g in range(r):
            for dest, offset, length in plan_slices.get((pe, g), ()):
                payload = pieces[pe][g][offset:offset + length]
                outboxes[pe].append((dest, payload))
    inboxes, stats = net.exchange(group, outboxes)
    received = {pe: [payload for _, payload in inboxes[pe]] for pe in members}
    plan = DeliveryPlan(group_totals=group_totals, slices=plan_slices)
    return DeliveryResult(plan, received, stats, control_stats)


def _enum_orders(members, r, permute: bool, seed: SeedSpec | None):
    """Per-group enumeration order of the sending PEs (indices into
    ``members``)."""
    p = len(members)
    if not permute:
        return [list(range(p)) for _ in range(r)]
    if seed is None:
        raise ValueError("permuted enumeration requires a seed")
    orders = []
    for g in range(r):
        perm = feistel_new(p, seed.derive(f"order-g{g}"))
        orders.append(sorted(range(p), key=perm.apply))
    return orders


def _prefix_starts(members, sizes, orders, r):
    starts = {pe: [0] * r for pe in members}
    totals = [0] * r
    for g, order in enumerate(orders):
        running = 0
        for idx in order:
            pe = members[idx]
            starts[pe][g] = running
            running += sizes[pe][g]
        totals[g] = running
    return starts, totals


def deliver_simple(net: Network, group: PeGroup,
                   pieces: Mapping[int, Sequence[Sequence[Element]]],
                   seed: SeedSpec | None = None, *,
                   permute: bool = False) -> DeliveryResult:
    """Prefix-sum delivery; each piece goes to the members owning its
    position range, in one contiguous slice per member."""
    members = list(group.members)
    r = len(pieces[members[0]])
    if group.size % r != 0:
        raise ValueError(f"{group.size} PEs cannot form {r} groups")
    sizes = _piece_sizes(members, pieces, r)
    subgroups = group.split(r)

    orders = _enum_orders(members, r, permute, seed)
    starts, totals = _prefix_starts(members, sizes, orders, r)
    net.charge_vector_collective(members, r)

    plan_slices = {}
    for pe in members:
        for g in range(r):
            size = sizes[pe][g]
            if size == 0:
                continue
            sub = list(subgroups[g].members)
            plan_slices[(pe, g)] = [
                PieceSlice(dest, off, length)
                for dest, off, length in _slice_range(sub, totals[g],
                                                      starts[pe][g], size)
            ]
    return _execute(net, group, members, r, plan_slices, pieces, totals, [])


def deliver_simple_permuted(net: Network, group: PeGroup, pieces,
                            seed: SeedSpec) -> DeliveryResult:
    return deliver_simple(net, group, pieces, seed, permute=True)


def deliver_deterministic(net: Network, group: PeGroup,
                          pieces: Mapping[int, Sequence[Sequence[Element]]],
                          seed: SeedSpec | None = None) -> DeliveryResult:
    """Two-phase delivery: small pieces round-robin, large pieces by
    capacity filling.

    Small means at most n/(2*p*r) elements: a receiver collects at most r
    of them (piece i of a group goes to member i//r), i.e. at most half
    its average final load.  Each group then assigns its large pieces by
    merging two prefix sums - residual member capacities against large
    piece sizes - so a large piece lands on one member and wraps over to
    at most two more.  Descriptor routing and the assignment replies are
    executed as real (control) exchanges; the group-local merge itself is
    charged its parallel-merge startup cost.
    """
    members = list(group.members)
    p = len(members)
    r = len(pieces[members[0]])
    if p % r != 0:
        raise ValueError(f"{p} PEs cannot form {r} groups")
    sizes = _piece_sizes(members, pieces, r)
    subgroups = group.split(r)
    n = sum(sum(row) for row in sizes.values())
    cap = -(-n // p)  # ceil(n/p); the analysis neglects rounding
    for pe in members:
        for g in range(r):
            if sizes[pe][g] > cap:
                raise ValueError(
                    f"piece ({pe},{g}) larger than ceil(n/p): "
                    f"{sizes[pe][g]} > {cap}")

    def is_small(size: int) -> bool:
        return size * 2 * p * r <= n

    # Enumeration prefix sums over small/large piece sizes (one combined
    # vector collective), then descriptor routing for the large pieces.
    net.charge_vector_collective(members, 2 * r)

    descriptor_out = {pe: [] for pe in members}
    larges: list[list[tuple[int, int]]] = [[] for _ in range(r)]  # (idx, size)
    for g in range(r):
        sub = list(subgroups[g].members)
        for idx, pe in enumerate(members):
            size = sizes[pe][g]
            if size > 0 and not is_small(size):
                larges[g].append((idx, size))
                coord = sub[idx // r]
                descriptor_out[pe].append((coord, [(g, idx, size)]))
    # Bundle descriptors sharing an (origin, coordinator) edge.
    for pe in members:
        bundled: dict[int, list] = {}
        for coord, payload in descriptor_out[pe]:
            bundled.setdefault(coord, []).extend(payload)
        descriptor_out[pe] = [(coord, bundled[coord]) for coord in sorted(bundled)]
    _, desc_stats = net.exchange(group, descriptor_out)

    plan_slices: dict[tuple[int, int], list[PieceSlice]] = {}
    totals = [0] * r
    reply_out = {pe: [] for pe in members}
    for g in range(r):
        sub = list(subgroups[g].members)
        p_prime = len(sub)
        m_g = sum(sizes[pe][g] for pe in members)
        totals[g] = m_g
        caps = [_quota_slots(m_g, p_prime, t)[1] - _quota_slots(m_g, p_prime, t)[0]
                for t in range(p_prime)]

        small_load = [0] * p_prime
        small_index = 0
        for idx, pe in enumerate(members):
            size = sizes[pe][g]
            if size == 0 or not is_small(size):
                continue
            t = small_index // r
            small_index += 1
            small_load[t] += size
            plan_slices[(pe, g)] = [PieceSlice(sub[t], 0, size)]

        # Residual capacity prefix (X) merged against large-size prefix (Y):
        # large piece j covers numbers (B[j], B[j+1]] and goes to the
        # members whose residual intervals it intersects.
        residual = [max(0, caps[t] - small_load[t]) for t in range(p_prime)]
        bounds = [0]
        for res in residual:
            bounds.append(bounds[-1] + res)
        pos = 0
        for idx, size in larges[g]:
            pe = members[idx]
            # First member whose residual interval contains number `pos`.
            t = bisect_right(bounds, pos) - 1
            covered = 0
            cuts = []
            while covered < size:
                if t >= p_prime:
                    raise RuntimeError("residual capacities cannot hold the "
                                       "large pieces")
                take = min(pos + size, bounds[t + 1]) - (pos + covered)
                if take > 0:
                    cuts.append(PieceSlice(sub[t], covered, take))
                    covered += take
                t += 1
            plan_slices[(pe, g)] = cuts
            pos += size
            coord = sub[idx // r]
            reply_out[coord].append((pe, [(g,) + tuple(c) for c in cuts]))

    # Parallel two-sequence merge cost inside each group.
    if p // r > 1:
        net.ledger.charge_collective(members, 0,
                                     net.params.alpha * _log2_ceil(p // r))
    for pe in members:
        bundled: dict[int, list] = {}
        for origin, payload in reply_out[pe]:
            bundled.setdefault(origin, []).extend(payload)
        reply_out[pe] = [(origin, bundled[origin]) for origin in sorted(bundled)]
    _, reply_stats = net.exchange(group, reply_out)

    return _execute(net, group, members, r, plan_slices, pieces, totals,
                    [desc_stats, reply_stats])


def default_delegation_factor(p: int, r: int) -> int:
    """Largest integer split factor the receive-bound analysis supports,
    floored at 1: a <= ((1 + r/ln(r*p/2))**0.5 - 1) / 2."""
    if r * p <= 2:
        return 1
    a = 0.5 * (math.sqrt(1.0 + r / math.log(r * p / 2.0)) - 1.0)
    return max(1, math.floor(a))


def deliver_randomized(net: Network, group: PeGroup,
                       pieces: Mapping[int, Sequence[Sequence[Element]]],
                       seed: SeedSpec,
                       delegation_factor: float | None = None) -> DeliveryResult:
    """Randomized delivery with splitting and delegation.

    Pieces larger than s = a*n/(r*p) are chopped into floor(x/s) chunks of
    exactly s elements plus a remainder.  Full-size chunks are delegated:
    their descriptors travel to pseudorandomly chosen PEs so that no
    single PE enumerates too many of them.  Each group then numbers its
    chunks - holders in pseudorandom order, each holder's chunks
    shuffled - and the assigned ranges travel back to the chunk origins,
    which send the data as in the simple scheme.
    """
    members = list(group.members)
    p = len(members)
    r = len(pieces[members[0]])
    if p % r != 0:
        raise ValueError(f"{p} PEs cannot form {r} groups")
    sizes = _piece_sizes(members, pieces, r)
    subgroups = group.split(r)
    n = sum(sum(row) for row in sizes.values())
    a = delegation_factor if delegation_factor is not None \
        else default_delegation_factor(p, r)
    if a <= 0:
        raise ValueError("delegation factor must be positive")
    s = max(1, math.ceil(a * n / (r * p)))

    # Chunking: (origin idx, group, offset, length, large?) in a fixed
    # global order; large chunks get global ids for delegation.
    chunks = []
    for idx, pe in enumerate(members):
        for g in range(r):
            size = sizes[pe][g]
            if size == 0:
                continue
            if size > s:
                whole, rem = divmod(size, s)
                for c in range(whole):
                    chunks.append((idx, g, c * s, s, True))
                if rem:
                    chunks.append((idx, g, whole * s, rem, False))
            else:
                chunks.append((idx, g, 0, size, False))

    large_ids = [i for i, ch in enumerate(chunks) if ch[4]]
    holder_of: dict[int, int] = {}
    delegate_out = {pe: [] for pe in members}
    if large_ids:
        perm = feistel_new(len(large_ids), seed.derive("delegate"))
        for rank, chunk_id in enumerate(large_ids):
            holder = perm.apply(rank) % p
            holder_of[chunk_id] = holder
            idx, g, offset, length, _ = chunks[chunk_id]
            delegate_out[members[idx]].append(
                (members[holder], [(g, idx, offset, length)]))
    control_stats = []
    for pe in members:
        bundled: dict[int, list] = {}
        for dest, payload in delegate_out[pe]:
            bundled.setdefault(dest, []).extend(payload)
        delegate_out[pe] = [(dest, bundled[dest]) for dest in sorted(bundled)]
    _, delegate_stats = net.exchange(group, delegate_out)
    control_stats.append(delegate_stats)

    # Per group: holders in permuted order, each holder's held chunks in a
    # seeded shuffle, then a prefix sum numbers the elements.
    held: dict[tuple[int, int], list[int]] = {}
    for chunk_id, (idx, g, offset, length, large) in enumerate(chunks):
        holder = holder_of.get(chunk_id, idx)
        held.setdefault((g, holder), []).append(chunk_id)

    start_of: dict[int, int] = {}
    totals = [0] * r
    for g in range(r):
        perm = feistel_new(p, seed.derive(f"order-g{g}"))
        holder_order = sorted(range(p), key=perm.apply)
        running = 0
        for holder in holder_order:
            mine = held.get((g, holder), [])
            if not mine:
                continue
            rng = seed.derive(f"reorder-g{g}-h{holder}").rng()
            rng.shuffle(mine)
            for chunk_id in mine:
                start_of[chunk_id] = running
                running += chunks[chunk_id][3]
        totals[g] = running
    net.charge_vector_collective(members, r)

    # Assigned ranges travel back to the PEs holding the data.
    reply_out = {pe: [] for pe in members}
    for chunk_id in large_ids:
        idx, g, offset, length, _ = chunks[chunk_id]
        holder = holder_of[chunk_id]
        if holder != idx:
            reply_out[members[holder]].append(
                (members[idx], [(g, offset, start_of[chunk_id])]))
    for pe in members:
        bundled: dict[int, list] = {}
        for dest, payload in reply_out[pe]:
            bundled.setdefault(dest, []).extend(payload)
        reply_out[pe] = [(dest, bundled[dest]) for dest in sorted(bundled)]
    _, reply_stats = net.exchange(group, reply_out)
    control_stats.append(reply_stats)

    plan_slices: dict[tuple[int, int], list[PieceSlice]] = {}
    for chunk_id, (idx, g, offset, length, large) in enumerate(chunks):
        pe = members[idx]
        sub = list(subgroups[g].members)
        for dest, off, ln in _slice_range(sub, totals[g], start_of[chunk_id],
                                          length):
            plan_slices.setdefault((pe, g), []).append(
                PieceSlice(dest, offset + off, ln))
    for key in plan_slices:
        plan_slices[key].sort(key=lambda sl: sl.offset)

    return _execute(net, group, members, r, plan_slices, pieces, totals,
                    control_stats)


SCHEMES = {
    "simple": deliver_simple,
    "permuted": deliver_simple_permuted,
    "deterministic": deliver_deterministic,
    "randomized": deliver_randomized,
}


def deliver(net: Network, group: PeGroup, pieces, scheme: str,
            seed: SeedSpec, **kwargs) -> DeliveryResult:
    try:
        fn = SCHEMES[scheme]
    except KeyError:
        raise ValueError(f"unknown delivery scheme {scheme!r}") from None
    if scheme == "simple":
        return fn(net, group, pieces)
    return fn(net, group, pieces, seed, **kwargs)
