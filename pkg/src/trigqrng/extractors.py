"""Post-processing transforms on bit streams: XOR combiners and Von Neumann.

All extractors are pure functions of their input buffers. Pair-based
extractors use non-overlapping pairs aligned to even indices; a trailing odd
bit is dropped.
"""

from __future__ import annotations

from .core import BitBuffer


def xor_streams(a: BitBuffer, b: BitBuffer) -> BitBuffer:
    """Bitwise XOR of two equal-length streams; length (and bit rate) preserved."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} != {len(b)}")
    return BitBuffer(a.bits ^ b.bits)


def xor_pairs(a: BitBuffer) -> BitBuffer:
    """XOR of non-overlapping adjacent pairs: out[j] = a[2j] ^ a[2j+1].

    Output length is floor(len/2), halving the effective bit rate.
    """
    if len(a) < 2:
        raise ValueError("need at least 2 bits")
    m = len(a) // 2
    x = a.bits
    return BitBuffer(x[0 : 2 * m : 2] ^ x[1 : 2 * m : 2])


def von_neumann(a: BitBuffer) -> BitBuffer:
    """Von Neumann debiasing: (0,1) emits 0, (1,0) emits 1, equal pairs emit nothing.

    For i.i.d. input of any fixed bias the output is exactly unbiased; the
    expected yield on unbiased input is one output bit per four input bits.
    The pair convention (0,1)->0, (1,0)->1 keeps the first bit of each
    unequal pair.
    """
    m = len(a) // 2
    x = a.bits
    first = x[0 : 2 * m : 2]
    second = x[1 : 2 * m : 2]
    return BitBuffer(first[first != second])
