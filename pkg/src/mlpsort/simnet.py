"""Deterministic simulated message-passing machine.

``Network`` models p virtual PEs that advance in bulk-synchronous steps.
Point-to-point traffic goes through :meth:`Network.exchange`, which
delivers every message before any PE takes its next step and records the
real per-PE word/message counts in a :class:`CostLedger`.  Collective
operations (broadcast, reductions, prefix sums, gossip) are treated as
black boxes: they return their results directly and charge the standard
closed-form costs (``beta*volume + alpha*ceil(log2 P)``) to the modeled
time instead of being decomposed into message rounds.  The counters the
algorithm-level bounds talk about therefore always come from actual
simulated exchanges.

Conventions:

* PEs are indexed 0..p-1; a message to itself is delivered but moves no
  modeled words and counts zero messages (the model prices network
  traffic, not local copies).
* An exchange is priced at the direct-delivery lower bound
  ``h*beta + r*alpha`` where h is the max per-PE word count and r the
  max per-PE message count.
* Collective charges (including the ``alpha*log P`` startup terms) are
  applied per call; logically concurrent calls on disjoint groups are
  summed, not maximised.
* Per-receiver delivery order is (sender index, send order): fixed so
  that runs are bit-for-bit reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from heapq import merge as _heap_merge
from typing import Callable, Iterable, Mapping, Sequence

from .core import Element


class AddressingError(ValueError):
    """A message was sent to a PE outside the participating group."""


@dataclass(frozen=True)
class CostParams:
    """Message startup cost (alpha) and per-word cost (beta)."""

    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("cost parameters must be non-negative")


@dataclass(frozen=True)
class PeGroup:
    """A contiguous range of PE indices, lo..hi inclusive."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo < 0 or self.hi < self.lo:
            raise ValueError(f"bad PE range {self.lo}..{self.hi}")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    @property
    def members(self) -> range:
        return range(self.lo, self.hi + 1)

    def split(self, r: int) -> list["PeGroup"]:
        """Partition into r equal contiguous subgroups."""
        if r < 1 or self.size % r != 0:
            raise ValueError(f"cannot split {self.size} PEs into {r} equal groups")
        step = self.size // r
        return [
            PeGroup(self.lo + i * step, self.lo + (i + 1) * step - 1)
            for i in range(r)
        ]


def _members(group) -> Sequence[int]:
    if isinstance(group, PeGroup):
        return group.members
    return list(group)


@dataclass(frozen=True)
class ExchStats:
    """Shape of one data exchange among ``participants`` PEs.

    ``max_words``/``max_msgs`` are the bottleneck values (max over PEs of
    the larger of the send and receive side); the per-side maxima are
    kept as well because send and receive bounds differ for the delivery
    schemes.
    """

    participants: int
    max_words: int
    max_msgs: int
    max_sent_words: int
    max_recv_words: int
    max_sent_msgs: int
    max_recv_msgs: int
    modeled_cost: float

    @staticmethod
    def combine(stats: Iterable["ExchStats"]) -> "ExchStats":
        """Bottleneck union of exchanges on disjoint PE sets."""
        out = ExchStats(0, 0, 0, 0, 0, 0, 0, 0.0)
        for s in stats:
            out = ExchStats(
                participants=max(out.participants, s.participants),
                max_words=max(out.max_words, s.max_words),
                max_msgs=max(out.max_msgs, s.max_msgs),
                max_sent_words=max(out.max_sent_words, s.max_sent_words),
                max_recv_words=max(out.max_recv_words, s.max_recv_words),
                max_sent_msgs=max(out.max_sent_msgs, s.max_sent_msgs),
                max_recv_msgs=max(out.max_recv_msgs, s.max_recv_msgs),
                modeled_cost=max(out.modeled_cost, s.modeled_cost),
            )
        return out


class _PhaseTally:
    __slots__ = ("modeled_time", "sent_words", "recv_words", "sent_msgs",
                 "recv_msgs", "coll_words")

    def __init__(self, p: int):
        self.modeled_time = 0.0
        self.sent_words = [0] * p
        self.recv_words = [0] * p
        self.sent_msgs = [0] * p
        self.recv_msgs = [0] * p
        self.coll_words = [0] * p


class CostLedger:
    """Cumulative communication accounting for one simulated machine.

    Exchange traffic is tracked per PE (words and messages, send and
    receive separately); collective volume is tracked per PE under
    ``coll_words``.  All counters are additionally broken down by the
    current *phase* label so a driver can attribute costs to algorithm
    stages.
    """

    def __init__(self, p: int, params: CostParams):
        self.p = p
        self.params = params
        self.modeled_time = 0.0
        self.sent_words = [0] * p
        self.recv_words = [0] * p
        self.sent_msgs = [0] * p
        self.recv_msgs = [0] * p
        self.coll_words = [0] * p
        self._phase = "setup"
        self.phases: dict[str, _PhaseTally] = {}

    # -- phases ---------------------------------------------------------

    class _PhaseScope:
        def __init__(self, ledger, name):
            self.ledger, self.name = ledger, name

        def __enter__(self):
            self.prev = self.ledger._phase
            self.ledger._phase = self.name
            return self.ledger

        def __exit__(self, *exc):
            self.ledger._phase = self.prev
            return False

    def phase(self, name: str) -> "_PhaseScope":
        return CostLedger._PhaseScope(self, name)

    def _tally(self) -> _PhaseTally:
        t = self.phases.get(self._phase)
        if t is None:
            t = _PhaseTally(self.p)
            self.phases[self._phase] = t
        return t

    # -- recording ------------------------------------------------------

    def record_exchange(self, sw, rw, sm, rm, cost: float) -> None:
        if sum(sw) != sum(rw) or sum(sm) != sum(rm):
            raise RuntimeError("exchange lost or duplicated traffic")
        tally = self._tally()
        for pe in range(self.p):
            if sw[pe] or rw[pe] or sm[pe] or rm[pe]:
                self.sent_words[pe] += sw[pe]
                self.recv_words[pe] += rw[pe]
                self.sent_msgs[pe] += sm[pe]
                self.recv_msgs[pe] += rm[pe]
                tally.sent_words[pe] += sw[pe]
                tally.recv_words[pe] += rw[pe]
                tally.sent_msgs[pe] += sm[pe]
                tally.recv_msgs[pe] += rm[pe]
        self.modeled_time += cost
        tally.modeled_time += cost

    def charge_collective(self, members: Sequence[int], words_per_member,
                          time: float) -> None:
        tally = self._tally()
        if isinstance(words_per_member, int):
            per = {pe: words_per_member for pe in members}
        else:
            per = words_per_member
        for pe, w in per.items():
            self.coll_words[pe] += w
            tally.coll_words[pe] += w
        self.modeled_time += time
        tally.modeled_time += time

    # -- snapshots ------------------------------------------------------

    def mark(self) -> tuple:
        return (
            list(self.sent_words), list(self.recv_words),
            list(self.sent_msgs), list(self.recv_msgs),
            list(self.coll_words), self.modeled_time,
        )

    def delta_since(self, mark: tuple) -> dict:
        sw, rw, sm, rm, cw, t = mark
        return {
            "sent_words": [a - b for a, b in zip(self.sent_words, sw)],
            "recv_words": [a - b for a, b in zip(self.recv_words, rw)],
            "sent_msgs": [a - b for a, b in zip(self.sent_msgs, sm)],
            "recv_msgs": [a - b for a, b in zip(self.recv_msgs, rm)],
            "coll_words": [a - b for a, b in zip(self.coll_words, cw)],
            "modeled_time": self.modeled_time - t,
        }

    def phase_summary(self) -> dict:
        out = {}
        for name, t in self.phases.items():
            max_words = max(
                (max(t.sent_words[pe], t.recv_words[pe]) + t.coll_words[pe]
                 for pe in range(self.p)),
                default=0,
            )
            max_msgs = max(
                (max(t.sent_msgs[pe], t.recv_msgs[pe]) for pe in range(self.p)),
                default=0,
            )
            out[name] = {
                "modeled_time": t.modeled_time,
                "max_words": max_words,
                "max_msgs": max_msgs,
            }
        return out


def _log2_ceil(n: int) -> int:
    return (n - 1).bit_length() if n > 1 else 0


def payload_words(payload) -> int:
    """Machine words moved by one message payload.

    Elements and bare ints count one word; descriptor tuples count one
    word per field.
    """
    words = 0
    for item in payload:
        if isinstance(item, (Element, int)):
            words += 1
        else:
            words += len(item)
    return words


class Network:
    """p virtual PEs plus the ledger they are accounted on."""

    def __init__(self, p: int, params: CostParams | None = None):
        if p < 1:
            raise ValueError("need at least one PE")
        self.p = p
        self.params = params or CostParams()
        self.ledger = CostLedger(p, self.params)

    @property
    def all_pes(self) -> PeGroup:
        return PeGroup(0, self.p - 1)

    # -- point-to-point ---------------------------------------------------

    def exchange(self, group, outboxes: Mapping[int, Sequence[tuple]],
                 ) -> tuple[dict[int, list[tuple]], ExchStats]:
        """Deliver per-PE outboxes of (dest, payload) messages.

        Returns per-PE inboxes of (source, payload), ordered by source
        then send order, plus the exchange shape.  Self-messages are
        delivered but not counted.  Empty payloads generate no traffic.
        """
        members = _members(group)
        member_set = set(members)
        inboxes: dict[int, list[tuple]] = {pe: [] for pe in members}
        p = self.p
        sw = [0] * p
        rw = [0] * p
        sm = [0] * p
        rm = [0] * p
        for src in members:
            for dest, payload in outboxes.get(src, ()):
                if dest not in member_set:
                    raise AddressingError(
                        f"PE {src} addressed PE {dest} outside the group")
                if len(payload) == 0:
                    continue
                inboxes[dest].append((src, payload))
                if dest != src:
                    words = payload_words(payload)
                    sw[src] += words
                    rw[dest] += words
                    sm[src] += 1
                    rm[dest] += 1
        for pe in members:
            inboxes[pe].sort(key=lambda m: m[0])
        h_sent = max((sw[pe] for pe in members), default=0)
        h_recv = max((rw[pe] for pe in members), default=0)
        r_sent = max((sm[pe] for pe in members), default=0)
        r_recv = max((rm[pe] for pe in members), default=0)
        h = max(h_sent, h_recv)
        r = max(r_sent, r_recv)
        cost = h * self.params.beta + r * self.params.alpha
        stats = ExchStats(len(members), h, r, h_sent, h_recv, r_sent, r_recv, cost)
        self.ledger.record_exchange(sw, rw, sm, rm, cost)
        return inboxes, stats

    def run_superstep(self, program: Callable[[int], Sequence[tuple]],
                      ) -> tuple[dict[int, list[tuple]], ExchStats]:
        """One machine-wide step: run ``program(pe)`` on every PE to
        produce its outbox, then deliver everything at the barrier."""
        outboxes = {pe: list(program(pe)) for pe in range(self.p)}
        return self.exchange(self.all_pes, outboxes)

    # -- collectives ------------------------------------------------------

    def broadcast(self, group, root: int, payload: Sequence) -> Sequence:
        members = _members(group)
        if root not in members:
            raise AddressingError(f"broadcast root {root} not in group")
        n = len(members)
        if n > 1:
            length = payload_words(payload)
            time = length * self.params.beta + _log2_ceil(n) * self.params.alpha
            self.ledger.charge_collective(members, length, time)
        return payload

    def allreduce_vec(self, group, combine: Callable, vecs: Mapping[int, Sequence],
                      ) -> list:
        """Elementwise reduction of equal-length per-PE vectors; the
        combined vector is available to every member."""
        members = _members(group)
        first = vecs[members[0]]
        length = len(first)
        out = list(first)
        for pe in members[1:]:
            v = vecs[pe]
            if len(v) != length:
                raise ValueError("allreduce vectors must have equal length")
            for i in range(length):
                out[i] = combine(out[i], v[i])
        self.charge_vector_collective(members, length)
        return out

    def prefix_sum_vec(self, group, vecs: Mapping[int, Sequence[int]],
                       ) -> tuple[dict[int, list[int]], list[int]]:
        """Exclusive per-PE prefix sums plus the group total.

        The prefix at member i combines the vectors of members earlier in
        the given group order, so the caller controls the enumeration
        order by passing an ordered member sequence.
        """
        members = _members(group)
        length = len(vecs[members[0]])
        running = [0] * length
        prefixes: dict[int, list[int]] = {}
        for pe in members:
            v = vecs[pe]
            if len(v) != length:
                raise ValueError("prefix-sum vectors must have equal length")
            prefixes[pe] = list(running)
            for i in range(length):
                running[i] += v[i]
        self.charge_vector_collective(members, length)
        return prefixes, running

    def charge_vector_collective(self, members: Sequence[int], length: int):
        n = len(members)
        if n > 1:
            time = length * self.params.beta + _log2_ceil(n) * self.params.alpha
            self.ledger.charge_collective(members, length, time)

    def gossip_merge(self, group, locals_: Mapping[int, Sequence[Element]],
                     ) -> list[Element]:
        """All-gather of sorted sequences, merged rather than concatenated;
        every member ends up with the identical sorted union.

        Charged as a hypercube-style all-gather: each member receives the
        union minus its own contribution, plus ceil(log2 P) startups.
        """
        members = _members(group)
        for pe in members:
            seq = locals_[pe]
            if any(seq[i + 1] < seq[i] for i in range(len(seq) - 1)):
                raise ValueError(f"gossip input of PE {pe} is not sorted")
        merged = list(_heap_merge(*(locals_[pe] for pe in members)))
        n = len(members)
        if n > 1:
            total = len(merged)
            per = {pe: total - len(locals_[pe]) for pe in members}
            time = (max(per.values()) * self.params.beta
                    + _log2_ceil(n) * self.params.alpha)
            self.ledger.charge_collective(members, per, time)
        return merged
