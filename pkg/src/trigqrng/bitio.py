"""Bit-exact persistence: packed binary, ASCII and raw byte formats, sweep CSV.

Formats
-------
packed   16-byte header (magic, bit order, exact bit count) + packed payload;
         round-trips any length exactly.
ascii    one '0'/'1' character per bit, no separators.
sts_raw  headerless packed bytes, MSB first, for direct consumption by an
         external statistical test suite in binary mode. The bit count must
         be a multiple of 8: padding is refused because padding bits would
         inject detectable bias into the very data being tested.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import BitBuffer

MAGIC = b"QRB1"
_HEADER = struct.Struct("<4sB3xQ")  # magic, bit_order, reserved, bit_count

FORMATS = ("packed", "ascii", "sts_raw")
_BIT_ORDERS = {"msb_first": 0, "lsb_first": 1}
_BIT_ORDER_NAMES = {v: k for k, v in _BIT_ORDERS.items()}
_NP_ORDER = {"msb_first": "big", "lsb_first": "little"}


class BitFileError(ValueError):
    """Malformed or inconsistent bit-file content."""


@dataclass(frozen=True)
class BitFileHeader:
    """Header of the packed format: 4-byte magic, exact bit count, packing order."""

    magic: bytes
    bit_count: int
    bit_order: str

    def packed_size(self) -> int:
        return (self.bit_count + 7) // 8


def read_header(data: bytes) -> BitFileHeader:
    if len(data) < _HEADER.size:
        raise BitFileError("truncated header")
    magic, order_code, bit_count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BitFileError(f"bad magic {magic!r}")
    if order_code not in _BIT_ORDER_NAMES:
        raise BitFileError(f"unknown bit order code {order_code}")
    return BitFileHeader(magic=magic, bit_count=bit_count, bit_order=_BIT_ORDER_NAMES[order_code])


def write_bits(bits: BitBuffer, fmt: str = "packed", bit_order: str = "msb_first") -> bytes:
    """Serialize a BitBuffer to bytes in the requested format."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    if bit_order not in _BIT_ORDERS:
        raise ValueError(f"bit_order must be one of {tuple(_BIT_ORDERS)}")
    if fmt == "ascii":
        return bits.to01().encode("ascii")
    if fmt == "sts_raw":
        if len(bits) % 8 != 0:
            raise BitFileError(
                f"sts_raw needs a multiple of 8 bits, got {len(bits)}; refusing to pad"
            )
        return np.packbits(bits.bits, bitorder="big").tobytes()
    header = _HEADER.pack(MAGIC, _BIT_ORDERS[bit_order], len(bits))
    payload = np.packbits(bits.bits, bitorder=_NP_ORDER[bit_order]).tobytes()
    return header + payload


_ASCII_WHITESPACE = frozenset(b" \t\r\n\x0b\x0c")


def read_bits(data: bytes, fmt: str = "packed", lenient: bool = False) -> BitBuffer:
    """Exact inverse of write_bits. `lenient` lets the ascii reader skip whitespace."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    if fmt == "ascii":
        if lenient:
            data = bytes(c for c in data if c not in _ASCII_WHITESPACE)
        arr = np.frombuffer(data, dtype=np.uint8)
        bad = (arr != ord("0")) & (arr != ord("1"))
        if bad.any():
            pos = int(np.flatnonzero(bad)[0])
            raise BitFileError(f"non-'0'/'1' character {chr(arr[pos])!r} at offset {pos}")
        return BitBuffer(arr - ord("0"))
    if fmt == "sts_raw":
        arr = np.frombuffer(data, dtype=np.uint8)
        return BitBuffer(np.unpackbits(arr, bitorder="big"))
    header = read_header(data)
    payload = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if payload.size != header.packed_size():
        raise BitFileError(
            f"payload holds {payload.size} bytes, header needs exactly {header.packed_size()}"
        )
    unpacked = np.unpackbits(payload, bitorder=_NP_ORDER[header.bit_order], count=header.bit_count)
    return BitBuffer(unpacked)


def write_bit_file(path, bits: BitBuffer, fmt: str = "packed", bit_order: str = "msb_first"):
    with open(path, "wb") as fh:
        fh.write(write_bits(bits, fmt, bit_order))


def read_bit_file(path, fmt: str = "packed", lenient: bool = False) -> BitBuffer:
    with open(path, "rb") as fh:
        return read_bits(fh.read(), fmt, lenient)


# --- sweep tables -----------------------------------------------------------

SWEEP_COLUMNS = (
    "axis_value",
    "n",
    "p1_hat",
    "bias",
    "a1_hat",
    "a1_err",
    "a1_pred",
    "truncated_flag",
    "note",
)


def _render_float(x: float) -> str:
    return repr(float(x))  # shortest digits that round-trip exactly


def write_sweep_csv(points) -> str:
    """Header plus one row per grid point; floats round-trip exactly."""
    lines = [",".join(SWEEP_COLUMNS)]
    for p in points:
        lines.append(
            ",".join(
                (
                    _render_float(p.axis_value),
                    str(p.n),
                    _render_float(p.p1_hat),
                    _render_float(p.bias),
                    _render_float(p.a1_hat),
                    _render_float(p.a1_err),
                    _render_float(p.a1_pred),
                    "1" if p.truncated else "0",
                    p.note.replace(",", ";"),
                )
            )
        )
    return "\n".join(lines) + "\n"


def parse_sweep_csv(text: str):
    """Rows of write_sweep_csv back as SweepPoint objects."""
    from .simulator import SweepPoint

    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != ",".join(SWEEP_COLUMNS):
        raise ValueError("not a sweep CSV (bad header row)")
    points = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(SWEEP_COLUMNS):
            raise ValueError(f"bad sweep row: {ln!r}")
        points.append(
            SweepPoint(
                axis_value=float(parts[0]),
                n=int(parts[1]),
                p1_hat=float(parts[2]),
                bias=float(parts[3]),
                a1_hat=float(parts[4]),
                a1_err=float(parts[5]),
                a1_pred=float(parts[6]),
                truncated=parts[7] == "1",
                note=parts[8],
            )
        )
    return points
