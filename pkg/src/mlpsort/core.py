"""Shared primitives: sort records, seeded random streams, and small-domain
pseudorandom permutations.

Every record carries an implicit identity tag (origin PE and input position)
so that keys compare as a strict total order even when the user-visible
64-bit keys collide.  All randomness in the simulator is drawn from named
streams derived from one master seed, which makes entire runs replayable.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from typing import NamedTuple


class Element(NamedTuple):
    """One sortable record: a 64-bit key plus its origin tag.

    Elements compare lexicographically as (key, origin_pe, origin_pos),
    so two distinct records never compare equal as long as the
    (origin_pe, origin_pos) pairs are unique across the input.
    """

    key: int
    origin_pe: int
    origin_pos: int


def compare_tiebreak(x: Element, y: Element) -> int:
    """Strict total order on elements; returns -1 (less) or +1 (greater).

    Identical (key, origin_pe, origin_pos) triples mean the input violated
    the unique-identity requirement, which is reported as an error rather
    than an "equal" result.
    """
    if x < y:
        return -1
    if y < x:
        return 1
    raise ValueError(f"duplicate element identity: {x!r}")


@dataclass(frozen=True)
class SeedSpec:
    """A named, replayable random stream: (master_seed, stream_id).

    Distinct stream ids under one master seed give independent streams;
    the same pair always reproduces the identical stream, independent of
    platform and process count.
    """

    master_seed: int
    stream_id: str = "root"

    def derive(self, label: str) -> "SeedSpec":
        """Child stream; labels compose into a path-like id."""
        return SeedSpec(self.master_seed, f"{self.stream_id}/{label}")

    def _digest(self, extra: str = "") -> bytes:
        text = f"{self.master_seed}\x1f{self.stream_id}\x1f{extra}"
        return hashlib.blake2b(text.encode(), digest_size=16).digest()

    def rng(self) -> random.Random:
        return random.Random(int.from_bytes(self._digest(), "big"))

    def key64(self, index: int) -> int:
        """A stable 64-bit value, e.g. a permutation round key."""
        return int.from_bytes(self._digest(f"k{index}")[:8], "big")


def _mix64(x: int) -> int:
    # splitmix64 finalizer: full-avalanche 64-bit mix.
    x &= 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def _feistel_rounds(i: int, side: int, round_tables: list) -> int:
    """Apply the 4-round digit-pair network on 0..side**2-1.

    A value is split as i = lo + hi*side; each round maps
    (lo, hi) -> (hi, (lo + f(hi)) mod side).  With all-zero round
    functions a round is a plain digit swap, so four rounds compose to
    the identity.
    """
    lo, hi = i % side, i // side
    for table in round_tables:
        lo, hi = hi, (lo + table[hi]) % side
    return lo + hi * side


@dataclass(frozen=True)
class PseudorandomPermutation:
    """Bijection on 0..domain_size-1 from four keyed digit-pair rounds.

    The permutation is defined over the padded square domain
    0..side**2-1 with side = ceil(sqrt(n)); values landing outside the
    real domain are walked through the permutation again until they fall
    below n (guaranteed to terminate because the padded map is a
    bijection).  The replicable state is just the four round keys.
    """

    domain_size: int
    side: int
    round_keys: tuple[int, int, int, int]

    def _tables(self) -> list:
        # Memoized per-round lookup tables (side entries each); derived
        # from the round keys, not part of the replicable state.
        cached = _TABLE_CACHE.get((self.round_keys, self.side))
        if cached is None:
            cached = [
                [_mix64(b ^ key) % self.side for b in range(self.side)]
                for key in self.round_keys
            ]
            _TABLE_CACHE[(self.round_keys, self.side)] = cached
        return cached

    def apply(self, i: int) -> int:
        if not 0 <= i < self.domain_size:
            raise ValueError(f"index {i} outside domain 0..{self.domain_size - 1}")
        # Unrolled _feistel_rounds; this is the innermost loop of every
        # permuted delivery.
        t0, t1, t2, t3 = self._tables()
        side = self.side
        n = self.domain_size
        x = i
        for _ in range(side * side):
            hi, lo = divmod(x, side)
            lo, hi = hi, (lo + t0[hi]) % side
            lo, hi = hi, (lo + t1[hi]) % side
            lo, hi = hi, (lo + t2[hi]) % side
            lo, hi = hi, (lo + t3[hi]) % side
            x = lo + hi * side
            if x < n:
                return x
        raise RuntimeError("cycle walk failed to terminate; broken bijection")


_TABLE_CACHE: dict = {}


def feistel_new(n: int, seed: SeedSpec) -> PseudorandomPermutation:
    """Build a seeded pseudorandom permutation of 0..n-1."""
    if n < 1:
        raise ValueError("permutation domain must have at least one value")
    side = math.isqrt(n)
    if side * side < n:
        side += 1
    keys = tuple(seed.key64(i) for i in range(4))
    return PseudorandomPermutation(domain_size=n, side=side, round_keys=keys)


def feistel_apply(perm: PseudorandomPermutation, i: int) -> int:
    return perm.apply(i)
