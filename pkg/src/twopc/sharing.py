"""Secret sharing primitives for the two-party runtime.

Two sharing schemes over two value domains:

* Arithmetic: values live in Z_{2**l} for a ring width l between 1 and 64.
  A value x splits into additive shares (x - r, r) mod 2**l; the holder of
  the plain value keeps x - r and hands r to the peer.  Addition of shares
  is a local operation.

* Boolean: values are bit vectors, packed LSB-first within each byte.  A
  vector v splits into XOR shares (v ^ r, r).  XOR of shares is local.

All randomness comes from :class:`SeededRng`, a counter-based splitmix64
stream.  It is deliberately deterministic so that runs replay bit for bit.
It is NOT a cryptographic generator, and nothing in this package is secure
against a real adversary; shares produced here protect nothing.  This code
exists to measure protocol behavior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1

# splitmix64 constants (Steele, Lea, Flood 2014).
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4B9D9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    """splitmix64 finalizer: a fixed bijection on 64-bit words."""
    z &= MASK64
    z ^= z >> 30
    z = (z * _MIX1) & MASK64
    z ^= z >> 27
    z = (z * _MIX2) & MASK64
    return z ^ (z >> 31)


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    # uint64 array ops wrap mod 2**64, matching the scalar form.
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_MIX1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & MASK64
    return h


def subseed(root_seed: int, label: str, party: int = 0) -> int:
    """Derive an independent stream seed from a root seed and a label.

    Fixed construction: mix64(root ^ fnv1a64(label) ^ (party+1)*GOLDEN).
    Used everywhere one logical experiment needs several unrelated streams
    (per-party inputs, per-repetition triples) from a single --seed.
    """
    z = (root_seed & MASK64) ^ _fnv1a64(label.encode())
    z ^= ((party + 1) * _GOLDEN) & MASK64
    return mix64(z)


@dataclass
class SeededRng:
    """Counter-based deterministic word stream.

    word(i) = mix64(seed + (i+1) * GOLDEN), i starting at the current
    position.  Same seed, same stream, on every platform and forever;
    position advances by the number of words drawn.
    """

    seed: int
    pos: int = 0

    def __post_init__(self) -> None:
        self.seed &= MASK64

    def words(self, count: int) -> np.ndarray:
        """Next `count` raw 64-bit words as a uint64 array."""
        if count < 0:
            raise ValueError("word count must be nonnegative")
        idx = np.arange(self.pos + 1, self.pos + count + 1, dtype=np.uint64)
        self.pos += count
        return _mix64_vec(np.uint64(self.seed) + idx * np.uint64(_GOLDEN))

    def word(self) -> int:
        self.pos += 1
        return mix64((self.seed + self.pos * _GOLDEN) & MASK64)

    def ring_elements(self, count: int, spec: "RingSpec") -> np.ndarray:
        """Uniform elements of Z_{2**l}; 2**l divides 2**64 so masking is exact."""
        return self.words(count) & np.uint64(spec.mask)

    def ring_element(self, spec: "RingSpec") -> int:
        return self.word() & spec.mask

    def bits(self, n_bits: int) -> np.ndarray:
        """Uniform packed bit vector of length n_bits, pad bits zero."""
        if n_bits < 0:
            raise ValueError("bit count must be nonnegative")
        n_bytes = (n_bits + 7) // 8
        n_words = (n_bytes + 7) // 8
        raw = self.words(n_words).view(np.uint8)[:n_bytes].copy()
        if n_bits % 8:
            raw[-1] &= (1 << (n_bits % 8)) - 1
        return raw

    def derive(self, label: str, party: int = 0) -> "SeededRng":
        return SeededRng(subseed(self.seed, label, party))


def peer(party: int) -> int:
    """The other party's index."""
    if party not in (0, 1):
        raise ValueError(f"party must be 0 or 1, got {party!r}")
    return 1 - party


@dataclass(frozen=True)
class RingSpec:
    """The ring Z_{2**bit_length}, bit_length between 1 and 64."""

    bit_length: int

    def __post_init__(self) -> None:
        if not isinstance(self.bit_length, int) or not 1 <= self.bit_length <= 64:
            raise ValueError(f"ring width must be an int in 1..64, got {self.bit_length!r}")

    @property
    def modulus(self) -> int:
        return 1 << self.bit_length

    @property
    def mask(self) -> int:
        return (1 << self.bit_length) - 1

    @property
    def byte_width(self) -> int:
        """Serialized width: bit_length rounded up to whole bytes."""
        return (self.bit_length + 7) // 8


def _check_element(x: int, spec: RingSpec) -> None:
    if not isinstance(x, (int, np.integer)) or not 0 <= x <= spec.mask:
        raise ValueError(f"{x!r} is not an element of Z_2^{spec.bit_length}")


def ring_add(a: int, b: int, spec: RingSpec) -> int:
    _check_element(a, spec)
    _check_element(b, spec)
    return (a + b) & spec.mask


def ring_sub(a: int, b: int, spec: RingSpec) -> int:
    _check_element(a, spec)
    _check_element(b, spec)
    return (a - b) & spec.mask


def ring_mul(a: int, b: int, spec: RingSpec) -> int:
    _check_element(a, spec)
    _check_element(b, spec)
    return (a * b) & spec.mask


def ring_neg(a: int, spec: RingSpec) -> int:
    _check_element(a, spec)
    return (-a) & spec.mask


@dataclass(frozen=True)
class ArithShare:
    """One party's additive share of a ring element."""

    value: int
    ring: RingSpec

    def __post_init__(self) -> None:
        _check_element(self.value, self.ring)


def arith_share(x: int, spec: RingSpec, rng: SeededRng) -> tuple[ArithShare, ArithShare]:
    """Split x into (own, peer) shares: own = x - r, peer = r."""
    _check_element(x, spec)
    r = rng.ring_element(spec)
    return ArithShare((x - r) & spec.mask, spec), ArithShare(r, spec)


def arith_reconstruct(s0: ArithShare, s1: ArithShare) -> int:
    if s0.ring != s1.ring:
        raise ValueError("shares come from different rings")
    return (s0.value + s1.value) & s0.ring.mask


def pack_bits(bits) -> np.ndarray:
    """Pack an iterable of 0/1 into bytes, LSB-first within each byte."""
    arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits, dtype=np.uint8)
    if arr.size and arr.max() > 1:
        raise ValueError("bits must be 0 or 1")
    return np.packbits(arr, bitorder="little")


def unpack_bits(packed: np.ndarray, n_bits: int) -> np.ndarray:
    return np.unpackbits(np.asarray(packed, dtype=np.uint8), count=n_bits, bitorder="little")


def int_to_bits(x: int, n_bits: int) -> np.ndarray:
    """Packed bit vector of x, bit i of the value at position i (LSB first)."""
    if x < 0 or x >> n_bits:
        raise ValueError(f"{x} does not fit in {n_bits} bits")
    data = x.to_bytes((n_bits + 7) // 8, "little")
    out = np.frombuffer(data, dtype=np.uint8).copy()
    if n_bits % 8:
        out[-1] &= (1 << (n_bits % 8)) - 1
    return out


def bits_to_int(packed: np.ndarray, n_bits: int) -> int:
    _check_packed(packed, n_bits)
    return int.from_bytes(np.asarray(packed, dtype=np.uint8).tobytes(), "little")


def _check_packed(packed: np.ndarray, n_bits: int) -> None:
    packed = np.asarray(packed)
    if packed.dtype != np.uint8 or packed.ndim != 1:
        raise ValueError("packed bit vector must be a 1-d uint8 array")
    if packed.size != (n_bits + 7) // 8:
        raise ValueError(f"expected {(n_bits + 7) // 8} bytes for {n_bits} bits, got {packed.size}")
    if n_bits % 8 and packed.size and packed[-1] >> (n_bits % 8):
        raise ValueError("pad bits past n_bits must be zero")


@dataclass(frozen=True, eq=False)
class BoolShare:
    """One party's XOR share of a packed bit vector."""

    bits: np.ndarray
    n_bits: int

    def __post_init__(self) -> None:
        _check_packed(self.bits, self.n_bits)


def bool_share(value: np.ndarray, n_bits: int, rng: SeededRng) -> tuple[BoolShare, BoolShare]:
    """Split a packed bit vector into (own, peer) XOR shares."""
    _check_packed(value, n_bits)
    r = rng.bits(n_bits)
    return BoolShare(np.bitwise_xor(value, r), n_bits), BoolShare(r, n_bits)


def bool_reconstruct(s0: BoolShare, s1: BoolShare) -> np.ndarray:
    if s0.n_bits != s1.n_bits:
        raise ValueError("shares have different bit lengths")
    return np.bitwise_xor(s0.bits, s1.bits)


def ring_to_bytes(values, spec: RingSpec) -> bytes:
    """Serialize ring elements to byte_width-byte little-endian records."""
    arr = np.ascontiguousarray(values, dtype=np.uint64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.size and int(arr.max()) > spec.mask:
        raise ValueError("value out of ring range")
    w = spec.byte_width
    return arr.view(np.uint8).reshape(-1, 8)[:, :w].tobytes()


def ring_from_bytes(data: bytes, spec: RingSpec) -> np.ndarray:
    """Inverse of ring_to_bytes; validates length and range."""
    w = spec.byte_width
    if len(data) % w:
        raise ValueError(f"byte length {len(data)} is not a multiple of {w}")
    n = len(data) // w
    full = np.zeros((n, 8), dtype=np.uint8)
    full[:, :w] = np.frombuffer(data, dtype=np.uint8).reshape(n, w)
    vals = full.view(np.uint64).ravel()
    if vals.size and int(vals.max()) > spec.mask:
        raise ValueError("serialized value out of ring range")
    return vals


def bits_to_bytes(packed: np.ndarray, n_bits: int) -> bytes:
    _check_packed(packed, n_bits)
    return np.asarray(packed, dtype=np.uint8).tobytes()


def bits_from_bytes(data: bytes, n_bits: int) -> np.ndarray:
    if len(data) != (n_bits + 7) // 8:
        raise ValueError(f"expected {(n_bits + 7) // 8} bytes for {n_bits} bits, got {len(data)}")
    out = np.frombuffer(data, dtype=np.uint8).copy()
    _check_packed(out, n_bits)
    return out
