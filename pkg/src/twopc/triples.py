"""Multiplication triples from an in-process dealer.

The dealer draws (a, b, c = a*b) in the target domain, splits each
component into two shares, and hands one pool to each party.  Both
parties can rebuild identical pools from a shared seed, which is how the
two-process mode stays consistent without a third machine.  This is the
textbook trusted-dealer shortcut: it is insecure on purpose, because the
offline phase is not what this package measures.

Pools are consumed front to back; both parties must take triples in the
same order, which the runtime guarantees by consuming in (layer, gate id)
order.  Running out raises :class:`TripleExhausted`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, count_interactive
from .sharing import RingSpec, SeededRng, unpack_bits

_MAGIC = "TRIP"
_VERSION = "v1"


class TripleExhausted(RuntimeError):
    """A pool was asked for more triples than it holds."""


@dataclass(frozen=True)
class ArithTriple:
    a: int
    b: int
    c: int
    ring: RingSpec


@dataclass(frozen=True)
class BoolTriple:
    a: int
    b: int
    c: int


class ArithTriplePool:
    """One party's share of a batch of ring triples."""

    def __init__(self, a: np.ndarray, b: np.ndarray, c: np.ndarray, ring: RingSpec):
        if not (len(a) == len(b) == len(c)):
            raise ValueError("triple component arrays must have equal length")
        self.a = np.ascontiguousarray(a, dtype=np.uint64)
        self.b = np.ascontiguousarray(b, dtype=np.uint64)
        self.c = np.ascontiguousarray(c, dtype=np.uint64)
        self.ring = ring
        self.cursor = 0

    @property
    def size(self) -> int:
        return len(self.a)

    @property
    def remaining(self) -> int:
        return self.size - self.cursor

    def take(self, count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if count > self.remaining:
            raise TripleExhausted(
                f"need {count} arithmetic triples, {self.remaining} of {self.size} left"
            )
        lo, hi = self.cursor, self.cursor + count
        self.cursor = hi
        return self.a[lo:hi], self.b[lo:hi], self.c[lo:hi]

    def take_one(self) -> ArithTriple:
        a, b, c = self.take(1)
        return ArithTriple(int(a[0]), int(b[0]), int(c[0]), self.ring)

    def reset(self) -> None:
        self.cursor = 0


class BoolTriplePool:
    """One party's share of a batch of bit triples, stored packed."""

    def __init__(self, a: np.ndarray, b: np.ndarray, c: np.ndarray, n_bits: int):
        self.packed_a = np.ascontiguousarray(a, dtype=np.uint8)
        self.packed_b = np.ascontiguousarray(b, dtype=np.uint8)
        self.packed_c = np.ascontiguousarray(c, dtype=np.uint8)
        self.n_bits = n_bits
        expect = (n_bits + 7) // 8
        for arr in (self.packed_a, self.packed_b, self.packed_c):
            if arr.size != expect:
                raise ValueError(f"expected {expect} packed bytes for {n_bits} bits")
        self.cursor = 0
        self._bits = None  # unpacked lazily, words stay the canonical form

    @property
    def size(self) -> int:
        return self.n_bits

    @property
    def remaining(self) -> int:
        return self.n_bits - self.cursor

    def _unpacked(self):
        if self._bits is None:
            self._bits = (
                unpack_bits(self.packed_a, self.n_bits),
                unpack_bits(self.packed_b, self.n_bits),
                unpack_bits(self.packed_c, self.n_bits),
            )
        return self._bits

    def take(self, count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if count > self.remaining:
            raise TripleExhausted(
                f"need {count} Boolean triples, {self.remaining} of {self.size} left"
            )
        a, b, c = self._unpacked()
        lo, hi = self.cursor, self.cursor + count
        self.cursor = hi
        return a[lo:hi], b[lo:hi], c[lo:hi]

    def take_one(self) -> BoolTriple:
        a, b, c = self.take(1)
        return BoolTriple(int(a[0]), int(b[0]), int(c[0]))

    def reset(self) -> None:
        self.cursor = 0


def deal_arith_triples(
    count: int, spec: RingSpec, seed: int
) -> tuple[ArithTriplePool, ArithTriplePool]:
    """Deal `count` ring triples, returning (party0 pool, party1 pool)."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = SeededRng(seed).derive("triples.arith")
    mask = np.uint64(spec.mask)
    a = rng.ring_elements(count, spec)
    b = rng.ring_elements(count, spec)
    c = (a * b) & mask
    a0 = rng.ring_elements(count, spec)
    b0 = rng.ring_elements(count, spec)
    c0 = rng.ring_elements(count, spec)
    a1 = (a - a0) & mask
    b1 = (b - b0) & mask
    c1 = (c - c0) & mask
    return ArithTriplePool(a0, b0, c0, spec), ArithTriplePool(a1, b1, c1, spec)


def deal_bool_triples(count: int, seed: int) -> tuple[BoolTriplePool, BoolTriplePool]:
    """Deal `count` bit triples with c = a AND b."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = SeededRng(seed).derive("triples.bool")
    a = rng.bits(count)
    b = rng.bits(count)
    c = a & b
    a0 = rng.bits(count)
    b0 = rng.bits(count)
    c0 = rng.bits(count)
    return (
        BoolTriplePool(a0, b0, c0, count),
        BoolTriplePool(a ^ a0, b ^ b0, c ^ c0, count),
    )


def budget_for(c: Circuit) -> tuple[int, int]:
    """(arithmetic triples, Boolean triples) one execution will consume."""
    n_mul, n_and, _ = count_interactive(c)
    return n_mul, n_and


def save_pool(pool, path: str) -> None:
    """Write a pool to a file: ASCII header, then fixed-width LE records.

    Header: `TRIP v1 <A|B> <l> <count>`.  Arithmetic records are the a, b, c
    shares at the ring's byte width; Boolean records use l=1, one byte per
    bit component.
    """
    if isinstance(pool, ArithTriplePool):
        w = pool.ring.byte_width
        header = f"{_MAGIC} {_VERSION} A {pool.ring.bit_length} {pool.size}\n"
        rec = np.zeros((pool.size, 3 * w), dtype=np.uint8)
        for i, comp in enumerate((pool.a, pool.b, pool.c)):
            rec[:, i * w : (i + 1) * w] = comp.view(np.uint8).reshape(-1, 8)[:, :w]
        body = rec.tobytes()
    elif isinstance(pool, BoolTriplePool):
        header = f"{_MAGIC} {_VERSION} B 1 {pool.n_bits}\n"
        bits = [unpack_bits(p, pool.n_bits) for p in (pool.packed_a, pool.packed_b, pool.packed_c)]
        body = np.stack(bits, axis=1).astype(np.uint8).tobytes() if pool.n_bits else b""
    else:
        raise TypeError(f"not a triple pool: {type(pool).__name__}")
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(body)


def load_pool(path: str):
    """Read a pool written by save_pool."""
    with open(path, "rb") as f:
        header = f.readline().decode("ascii", errors="replace").strip()
        body = f.read()
    parts = header.split()
    if len(parts) != 5 or parts[0] != _MAGIC or parts[1] != _VERSION:
        raise ValueError(f"{path}: not a {_MAGIC} {_VERSION} pool file (header {header!r})")
    world, l, count = parts[2], int(parts[3]), int(parts[4])
    if world == "A":
        spec = RingSpec(l)
        w = spec.byte_width
        if len(body) != count * 3 * w:
            raise ValueError(f"{path}: expected {count * 3 * w} record bytes, got {len(body)}")
        rec = np.frombuffer(body, dtype=np.uint8).reshape(count, 3, w)
        full = np.zeros((count, 3, 8), dtype=np.uint8)
        full[:, :, :w] = rec
        vals = full.reshape(count * 3, 8).view(np.uint64).reshape(count, 3)
        if count and int(vals.max()) > spec.mask:
            raise ValueError(f"{path}: triple component out of ring range")
        return ArithTriplePool(vals[:, 0].copy(), vals[:, 1].copy(), vals[:, 2].copy(), spec)
    if world == "B":
        if l != 1:
            raise ValueError(f"{path}: Boolean pools must have l=1, got {l}")
        if len(body) != count * 3:
            raise ValueError(f"{path}: expected {count * 3} record bytes, got {len(body)}")
        rec = np.frombuffer(body, dtype=np.uint8).reshape(count, 3)
        if count and rec.max() > 1:
            raise ValueError(f"{path}: Boolean triple bytes must be 0 or 1")
        packed = [np.packbits(rec[:, i], bitorder="little") for i in range(3)]
        if count == 0:
            packed = [np.zeros(0, dtype=np.uint8)] * 3
        return BoolTriplePool(packed[0], packed[1], packed[2], count)
    raise ValueError(f"{path}: unknown world {world!r}")
