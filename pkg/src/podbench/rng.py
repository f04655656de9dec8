"""Deterministic 64-bit random streams for reproducible dataset generation.

The draw algorithm is part of the dataset reproducibility contract and is
fixed so any implementation, in any language, can regenerate identical data:

* Stream state advances as SplitMix64: ``state += 0x9E3779B97F4A7C15`` (mod
  2^64), and each output is the finalizer
  ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
  z *= 0x94D049BB133111EB; z ^= z >> 31`` applied to the new state.
* Floats take the top 53 bits of an output: ``(u64 >> 11) * 2**-53``,
  uniform on [0, 1).
* ``next_below(n)`` is ``min(floor(next_float() * n), n - 1)``.
* ``shuffle`` is a Fisher-Yates pass from the last index down to 1, swapping
  with ``next_below(i + 1)``.
* Record streams are seeded with ``derive_stream_seed(master_seed, index)``:
  one SplitMix64 output drawn from state ``master_seed XOR index``.
"""

from __future__ import annotations

__all__ = ["SplitMix64", "derive_stream_seed", "MASK64"]

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

_TWO_NEG_53 = 2.0**-53


def _finalize(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX_A) & MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """SplitMix64 stream with 53-bit float and bounded-integer draws."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = int(seed) & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        return _finalize(self._state)

    def next_float(self) -> float:
        """Uniform on [0, 1) with a 53-bit mantissa."""
        return (self.next_u64() >> 11) * _TWO_NEG_53

    def uniform_open(self, lo: float, hi: float) -> float:
        """Uniform on the open interval (lo, hi); a zero draw is redrawn."""
        u = self.next_float()
        while u == 0.0:
            u = self.next_float()
        return lo + (hi - lo) * u

    def next_below(self, n: int) -> int:
        """Integer uniform on [0, n)."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        return min(int(self.next_float() * n), n - 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]


def derive_stream_seed(master_seed: int, record_index: int) -> int:
    """Seed for an independent per-record stream; order-independent by design."""
    return SplitMix64((int(master_seed) ^ int(record_index)) & MASK64).next_u64()
