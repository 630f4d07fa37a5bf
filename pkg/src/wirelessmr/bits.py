"""MSB-first bit strings carried in zero-padded byte buffers."""

from __future__ import annotations


def nbytes(nbits: int) -> int:
    return (nbits + 7) // 8


def to_int(data: bytes, nbits: int) -> int:
    return int.from_bytes(data, "big") >> (8 * len(data) - nbits) if nbits else 0


def from_int(value: int, nbits: int) -> bytes:
    if nbits == 0:
        return b""
    if value >> nbits:
        raise ValueError(f"value does not fit in {nbits} bits")
    pad = 8 * nbytes(nbits) - nbits
    return (value << pad).to_bytes(nbytes(nbits), "big")


def slice_bits(data: bytes, nbits: int, start: int, length: int) -> bytes:
    if start < 0 or start + length > nbits:
        raise ValueError("bit slice out of range")
    value = to_int(data, nbits) >> (nbits - start - length)
    return from_int(value & ((1 << length) - 1), length)


def concat_bits(chunks) -> tuple:
    """Concatenate ``(bytes, nbits)`` chunks; returns ``(bytes, total_bits)``."""
    value, total = 0, 0
    for data, n in chunks:
        value = (value << n) | to_int(data, n)
        total += n
    return from_int(value, total), total


def xor_bytes(*chunks: bytes) -> bytes:
    """XOR of byte strings, shorter ones zero-extended on the right."""
    width = max((len(c) for c in chunks), default=0)
    out = bytearray(width)
    for chunk in chunks:
        for i, b in enumerate(chunk):
            out[i] ^= b
    return bytes(out)
