"""Bitstring algebra and in-memory packet headers.

Bit positions are 1-based and counted from the least significant bit, so
position 1 is the rightmost character of the binary rendering.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Optional

MAX_WIDTH = 256
MAX_LABEL = (1 << 20) - 1

PROTO_IPMC = "ipmc"
PROTO_MPLS = "mpls"


class BitStringError(ValueError):
    """Raised on width mismatches and out-of-range bit positions."""


@dataclass(frozen=True, slots=True)
class BitString:
    width: int
    value: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.width <= MAX_WIDTH:
            raise BitStringError(f"width {self.width} outside 1..{MAX_WIDTH}")
        if self.value < 0 or self.value >> self.width:
            raise BitStringError(f"value does not fit in {self.width} bits")

    @classmethod
    def zeros(cls, width: int) -> BitString:
        return cls(width, 0)

    @classmethod
    def ones(cls, width: int) -> BitString:
        return cls(width, (1 << width) - 1)

    @classmethod
    def from_positions(cls, width: int, positions) -> BitString:
        value = 0
        for p in positions:
            _check_index(width, p)
            value |= 1 << (p - 1)
        return cls(width, value)

    @classmethod
    def parse(cls, text: str) -> BitString:
        """Parse MSB-left binary text; the width is the text length."""
        text = text.strip().replace("_", "")
        if not text or set(text) - {"0", "1"}:
            raise BitStringError(f"not a binary bitstring: {text!r}")
        return cls(len(text), int(text, 2))

    @classmethod
    def from_bytes(cls, width: int, data: bytes) -> BitString:
        if len(data) != (width + 7) // 8:
            raise BitStringError(f"{len(data)} bytes for width {width}")
        return cls(width, int.from_bytes(data, "big"))

    def to_bytes(self) -> bytes:
        return self.value.to_bytes((self.width + 7) // 8, "big")

    def _same(self, other: BitString) -> None:
        if not isinstance(other, BitString):
            raise TypeError(f"expected BitString, got {type(other).__name__}")
        if other.width != self.width:
            raise BitStringError(f"width mismatch {self.width} != {other.width}")

    def __and__(self, other: BitString) -> BitString:
        self._same(other)
        return BitString(self.width, self.value & other.value)

    def __or__(self, other: BitString) -> BitString:
        self._same(other)
        return BitString(self.width, self.value | other.value)

    def __xor__(self, other: BitString) -> BitString:
        self._same(other)
        return BitString(self.width, self.value ^ other.value)

    def __invert__(self) -> BitString:
        return BitString(self.width, ~self.value & ((1 << self.width) - 1))

    def andnot(self, mask: BitString) -> BitString:
        self._same(mask)
        return BitString(self.width, self.value & ~mask.value)

    def test(self, p: int) -> bool:
        _check_index(self.width, p)
        return bool(self.value >> (p - 1) & 1)

    def set(self, p: int) -> BitString:
        _check_index(self.width, p)
        return BitString(self.width, self.value | 1 << (p - 1))

    def clear(self, p: int) -> BitString:
        _check_index(self.width, p)
        return BitString(self.width, self.value & ~(1 << (p - 1)))

    def positions(self) -> Iterator[int]:
        """Yield set positions in ascending order."""
        v = self.value
        while v:
            low = v & -v
            yield low.bit_length()
            v ^= low

    def count(self) -> int:
        return self.value.bit_count()

    def __bool__(self) -> bool:
        return self.value != 0

    def __len__(self) -> int:
        return self.width

    def binary(self) -> str:
        return format(self.value, f"0{self.width}b")

    def hex(self) -> str:
        return "0x" + format(self.value, f"0{(self.width + 3) // 4}x")

    def render(self) -> str:
        """Binary MSB-left up to 32 bits, hex beyond."""
        return self.binary() if self.width <= 32 else self.hex()

    def __str__(self) -> str:
        return self.render()


def _check_index(width: int, p: int) -> None:
    if not 1 <= p <= width:
        raise BitStringError(f"bit position {p} outside 1..{width}")


def bs_and(a: BitString, b: BitString) -> BitString:
    return a & b


def bs_or(a: BitString, b: BitString) -> BitString:
    return a | b


def bs_andnot(a: BitString, mask: BitString) -> BitString:
    return a.andnot(mask)


def bs_test(a: BitString, p: int) -> bool:
    return a.test(p)


def bs_clear(a: BitString, p: int) -> BitString:
    return a.clear(p)


def bs_iter_set(a: BitString) -> Iterator[int]:
    return a.positions()


@dataclass(frozen=True, slots=True)
class BitPosition:
    si: int
    index: int

    def __post_init__(self) -> None:
        if self.si < 0:
            raise BitStringError(f"negative subset id {self.si}")
        if self.index < 1:
            raise BitStringError(f"bit index {self.index} must be >= 1")


@dataclass(frozen=True, slots=True)
class BierTeHeader:
    si: int
    bs: BitString
    proto: str = PROTO_IPMC


@dataclass(frozen=True, slots=True)
class MplsHeader:
    label: int

    def __post_init__(self) -> None:
        if not 0 <= self.label <= MAX_LABEL:
            raise ValueError(f"MPLS label {self.label} outside 20-bit range")


@dataclass(frozen=True, slots=True)
class Packet:
    """Simulator packet. Header order on the wire: MPLS, BIER-TE, IPMC."""

    ipmc_group: str
    ipmc_payload_len: int
    mpls: Optional[MplsHeader] = None
    bierte: Optional[BierTeHeader] = None
    trace_id: str = ""
    recirc_count: int = 0

    def with_bs(self, bs: BitString) -> Packet:
        return replace(self, bierte=replace(self.bierte, bs=bs))

    def recirculated(self, n: int = 1) -> Packet:
        if n < 0:
            raise ValueError("recirculation count cannot decrease")
        return replace(self, recirc_count=self.recirc_count + n) if n else self
