"""Throughput model for BIER-TE replication on a fixed-rate pipeline."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

DEFAULT_OVERHEAD = 16  # 12 B BIER header + 4 B MPLS label
DEFAULT_LINE_RATE = 100.0

# Measured throughput of a hardware switch implementation, Gbit/s, keyed by
# (frame bytes, bsl). For comparison only; the model is not fitted to them.
MEASURED = {
    (1536, 64): 99.0,  # lower bound, measured above 99
    (1536, 256): 96.0,
    (64, 64): 88.0,
    (64, 256): 70.0,
}


@dataclass(frozen=True)
class PerfQuery:
    l_ipmc: int
    bsl: int
    fixed_overhead: float = DEFAULT_OVERHEAD
    line_rate: float = DEFAULT_LINE_RATE

    def __post_init__(self):
        if self.l_ipmc < 1:
            raise ValueError(f"frame size must be >= 1 byte, got {self.l_ipmc}")
        if not 8 <= self.bsl <= 256:
            raise ValueError(f"bsl must be in 8..256, got {self.bsl}")
        if self.fixed_overhead < 0:
            raise ValueError("fixed_overhead must be >= 0")

    @property
    def header_bytes(self) -> float:
        return self.fixed_overhead + self.bsl / 8


def r_max(q: PerfQuery) -> float:
    """Highest IPMC input rate (Gbit/s) that fits the line once headers are added."""
    return q.line_rate * q.l_ipmc / (q.l_ipmc + q.header_bytes)


def replication_throughput(line_rate: float, n_recirc: int) -> float:
    if n_recirc < 0:
        raise ValueError("n_recirc must be >= 0")
    if n_recirc == 0:
        return line_rate
    return line_rate / n_recirc


def curve(frames, bsls, overhead: float = DEFAULT_OVERHEAD, line_rate: float = DEFAULT_LINE_RATE):
    rows = []
    for l in frames:
        for b in bsls:
            rows.append((l, b, r_max(PerfQuery(l, b, overhead, line_rate))))
    return rows


def curve_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["l_ipmc", "bsl", "r_max_gbps"])
    for l, b, r in rows:
        w.writerow([l, b, f"{r:.4f}"])
    return buf.getvalue()
