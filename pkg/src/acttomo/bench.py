"""Analytic scaling baselines and comparison-table assembly.

Counting formulas for the known compressive measurement families, used to
benchmark measured completeness counts. `kind` distinguishes outcome counts
from basis counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def _check(d: int, r: int) -> None:
    if not 1 <= r <= d:
        raise ValueError(f"need 1 <= r <= d, got r={r}, d={d}")


def bf_outcomes(d: int, r: int) -> int:
    """Element-probing POVM outcome count: (2d - r) r + 1."""
    _check(d, r)
    return (2 * d - r) * r + 1


def shifted_bf_bases(d: int, r: int) -> float:
    """Basis-count equivalent of the element-probing scaling: M/d + 2."""
    return bf_outcomes(d, r) / d + 2.0


def bg_bases(r: int) -> int:
    """Structured-bases count: 4r + 1."""
    if r < 1:
        raise ValueError("rank must be positive")
    return 4 * r + 1


def kw_bound(d: int, r: int) -> int:
    """Sufficient basis count for arbitrary bases: 4r ceil((d-r)/(d-1)).

    The ceiling vanishes at r = d (the formula targets rank-deficient
    states); the reported bound is floored at 1 there.
    """
    _check(d, r)
    return max(1, 4 * r * math.ceil((d - r) / (d - 1)))


def act_conjecture(r: int) -> int:
    """Conjectured asymptotic basis count for the entangled adaptive scheme."""
    if r < 1:
        raise ValueError("rank must be positive")
    return 2 * r + 2


def pact_conjecture(r: int) -> int:
    """Conjectured asymptotic basis count for the product adaptive scheme."""
    return bg_bases(r)


@dataclass(frozen=True)
class ScalingRow:
    d: int
    r: int
    label: str
    value: float
    kind: str  # "bases" or "outcomes"


@dataclass(frozen=True)
class ScalingTable:
    rows: tuple

    def as_csv_lines(self) -> list:
        lines = ["d,r,label,value,kind"]
        for row in self.rows:
            lines.append(f"{row.d},{row.r},{row.label},{row.value:.6g},{row.kind}")
        return lines


def baseline_rows(d: int, r: int) -> list:
    return [
        ScalingRow(d, r, "BF", float(bf_outcomes(d, r)), "outcomes"),
        ScalingRow(d, r, "BF_shifted", shifted_bf_bases(d, r), "bases"),
        ScalingRow(d, r, "BG", float(bg_bases(r)), "bases"),
        ScalingRow(d, r, "KW", float(kw_bound(d, r)), "bases"),
        ScalingRow(d, r, "ACT_conjecture", float(act_conjecture(r)), "bases"),
        ScalingRow(d, r, "PACT_conjecture", float(pact_conjecture(r)), "bases"),
    ]


def build_comparison(summaries, dims_ranks=None) -> ScalingTable:
    """Merge measured mean completeness counts with the analytic baselines.

    `summaries` is an iterable of EnsembleSummary; `dims_ranks` optionally
    adds baseline-only cells. Rows are sorted by (d, r, label) for
    deterministic output.
    """
    cells = set(dims_ranks or [])
    rows = []
    for s in summaries:
        cells.add((s.dim, s.rank))
        label = f"measured_{s.config.kind.value}"
        rows.append(ScalingRow(s.dim, s.rank, label, s.mean_k_ic, "bases"))
    for d, r in cells:
        rows.extend(baseline_rows(d, r))
    rows.sort(key=lambda row: (row.d, row.r, row.label))
    return ScalingTable(tuple(rows))
