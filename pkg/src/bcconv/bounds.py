"""Spectral lower bounds on bounded-coefficient linear complexity, in bits.

Every function takes singular values (``SpectralData``) or a matrix and
returns log2-scale values; ``-inf`` marks a vacuous bound.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .spectral import (
    SpectralData,
    as_matrix,
    circulant,
    circulant_spectral_data,
    r_volume,
    svd,
)

__all__ = [
    "NEG_INF",
    "BoundEntry",
    "BoundReport",
    "HelpGateBound",
    "SurrogateTerms",
    "morgenstern",
    "msv_bound",
    "rvol_bound",
    "rigidity_bound",
    "helpgate_bound",
    "best_bound",
    "circulant_best_bound",
    "surrogate_coefficient",
    "maximize_surrogate_coefficient",
    "convolution_theorem_surrogate",
    "lemma43_constant",
    "CSV_COLUMNS",
]

NEG_INF = float("-inf")
CSV_COLUMNS = ("n", "formula", "r", "s", "h", "bound_bits", "upper_size")
# the sweep enumerates every row subset, 2^m determinants in total
RVOL_MAX_ROWS = 16


def _spec(A) -> SpectralData:
    return A if isinstance(A, SpectralData) else svd(A)


def _sum_log2(spec: SpectralData, lo: int, hi: int) -> float:
    """sum_{i=lo}^{hi} log2 sigma_i (1-based, inclusive)."""
    vals = spec.log2_sigma[lo - 1 : hi]
    return float(np.sum(vals)) if vals.size else 0.0


def morgenstern(spec) -> float:
    """log2 |det A| for square A."""
    spec = _spec(spec)
    if spec.m != spec.n:
        raise ValueError("Morgenstern's bound needs a square matrix")
    if spec.n == 0:
        return 0.0
    return spec.log2_msv(spec.n)


def msv_bound(spec, r: int) -> float:
    """log2 MSV_r(A) - m/2."""
    spec = _spec(spec)
    return spec.log2_msv(r) - spec.m / 2


def rvol_bound(A, r: int) -> float:
    """log2 Vol_r(A); brute force over r-row subsets."""
    v = r_volume(A, r)
    return math.log2(v) if v > 0 else NEG_INF


def rigidity_bound(spec, r: int) -> float:
    """r * log2(sigma_{r+1} / sqrt(n)), using the lower rigidity sandwich."""
    spec = _spec(spec)
    if not 0 <= r < spec.p:
        raise ValueError(f"r={r} out of range 0..{spec.p - 1}")
    s = spec.sigma(r + 1)
    if s <= 0:
        return NEG_INF
    return r * (math.log2(s) - 0.5 * math.log2(spec.n))


class HelpGateBound(NamedTuple):
    bits: float
    weak_bits: float


def helpgate_bound(spec, h: int, s: int) -> HelpGateBound:
    """Bound on C_h(A): sum_{i=h+1}^{h+s} log2 sigma_i - m/2 + h, and the
    weaker s * log2 sigma_{h+s} - m/2 + h."""
    spec = _spec(spec)
    if h < 0 or not 1 <= s <= spec.p - h:
        raise ValueError(f"need h >= 0 and 1 <= s <= p - h (p={spec.p}, h={h}, s={s})")
    strong = _sum_log2(spec, h + 1, h + s) - spec.m / 2 + h
    sig = spec.sigma(h + s)
    weak = (s * math.log2(sig) if sig > 0 else NEG_INF) - spec.m / 2 + h
    return HelpGateBound(strong, weak)


@dataclass(frozen=True)
class BoundEntry:
    name: str
    bits: float
    r: int | None = None
    s: int | None = None
    h: int = 0
    trace: str = ""


@dataclass
class BoundReport:
    matrix_id: str
    m: int
    n: int
    h: int
    entries: list[BoundEntry] = field(default_factory=list)
    upper_bound: int | None = None

    @property
    def best(self) -> float:
        return max((e.bits for e in self.entries), default=NEG_INF)

    @property
    def best_entry(self) -> BoundEntry | None:
        if not self.entries:
            return None
        # first maximum in sweep order keeps the choice deterministic
        top = self.best
        return next(e for e in self.entries if e.bits == top)

    def by_name(self, name: str) -> list[BoundEntry]:
        return [e for e in self.entries if e.name == name]

    def rows(self) -> list[dict]:
        return [
            {
                "n": self.n,
                "formula": e.name,
                "r": "" if e.r is None else e.r,
                "s": "" if e.s is None else e.s,
                "h": e.h,
                "bound_bits": _fmt_bits(e.bits),
                "upper_size": "" if self.upper_bound is None else self.upper_bound,
            }
            for e in self.entries
        ]

    def to_csv(self) -> str:
        return rows_to_csv(self.rows())

    def to_markdown(self) -> str:
        head = f"**{self.matrix_id}** ({self.m}x{self.n}, h={self.h}): best = {_fmt_bits(self.best)} bits"
        be = self.best_entry
        if be is not None:
            head += f" via {be.name}"
        return head + "\n\n" + rows_to_markdown(self.rows())


def _fmt_bits(v: float) -> str:
    if v == NEG_INF:
        return "-inf"
    return f"{v:.6f}"


def rows_to_csv(rows: list[dict], columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def rows_to_markdown(rows: list[dict], columns=CSV_COLUMNS) -> str:
    lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    for r in rows:
        lines.append("| " + " | ".join(str(r[c]) for c in columns) + " |")
    return "\n".join(lines) + "\n"


def _sweep(spec: SpectralData, A: np.ndarray | None, h: int, matrix_id: str) -> BoundReport:
    rep = BoundReport(matrix_id, spec.m, spec.n, h)
    add = rep.entries.append
    p = spec.p
    if h == 0:
        if spec.m == spec.n and p:
            add(BoundEntry("morgenstern", morgenstern(spec), r=p, trace="sum_i log2 sigma_i"))
        for r in range(1, p + 1):
            add(BoundEntry("msv", msv_bound(spec, r), r=r, trace=f"log2 MSV_{r} - {spec.m}/2"))
        if A is not None and spec.m <= RVOL_MAX_ROWS:
            for r in range(1, p + 1):
                add(BoundEntry("rvol", rvol_bound(A, r), r=r, trace=f"log2 Vol_{r}"))
        for r in range(0, p):
            add(BoundEntry("rigidity", rigidity_bound(spec, r), r=r,
                           trace=f"{r} * log2(sigma_{r + 1} / sqrt({spec.n}))"))
    for s in range(1, p - h + 1):
        hb = helpgate_bound(spec, h, s)
        add(BoundEntry("helpgate", hb.bits, s=s, h=h,
                       trace=f"sum_{{i={h + 1}}}^{{{h + s}}} log2 sigma_i - {spec.m}/2 + {h}"))
        add(BoundEntry("helpgate_weak", hb.weak_bits, s=s, h=h,
                       trace=f"{s} * log2 sigma_{h + s} - {spec.m}/2 + {h}"))
    return rep


def best_bound(A, h: int = 0, matrix_id: str = "A") -> BoundReport:
    """Evaluate every certified bound over all valid parameters.

    With a help budget h > 0 only the help-gate bounds apply (they bound C_h);
    the plain bounds are for h = 0.
    """
    if h < 0:
        raise ValueError("help budget must be nonnegative")
    A = as_matrix(A)
    return _sweep(svd(A), A, h, matrix_id)


def circulant_best_bound(a, h: int = 0, matrix_id: str = "circulant") -> BoundReport:
    """best_bound for the circulant of a, from its DFT spectrum.

    The matrix is materialized only for the r-volume enumeration (n <= 16).
    """
    a = np.asarray(a, dtype=complex)
    spec = circulant_spectral_data(a)
    A = circulant(a) if a.shape[0] <= RVOL_MAX_ROWS else None
    return _sweep(spec, A, h, matrix_id)


# --------------------------------------------------------------------------
# finite-n form of the convolution lower-bound argument


def surrogate_coefficient(eps):
    """eps (1 - eps) / (2 (2 - eps)); exact for Fraction input."""
    return eps * (1 - eps) / (2 * (2 - eps))


def maximize_surrogate_coefficient(tol: float = 1e-12) -> tuple[float, float]:
    """Golden-section search of surrogate_coefficient on (0, 1); returns (eps, value)."""
    lo, hi = 0.0, 1.0
    phi = (math.sqrt(5) - 1) / 2
    a = hi - phi * (hi - lo)
    b = lo + phi * (hi - lo)
    fa, fb = surrogate_coefficient(a), surrogate_coefficient(b)
    while hi - lo > tol:
        if fa < fb:
            lo, a, fa = a, b, fb
            b = lo + phi * (hi - lo)
            fb = surrogate_coefficient(b)
        else:
            hi, b, fb = b, a, fa
            a = hi - phi * (hi - lo)
            fa = surrogate_coefficient(a)
    eps = (lo + hi) / 2
    return eps, surrogate_coefficient(eps)


def lemma43_constant() -> float:
    from .probability import constants

    return constants().c


@dataclass(frozen=True)
class SurrogateTerms:
    """Terms of the finite-n inequality for a bilinear convolution circuit.

    ``value``: lower bound on size(Gamma) for a given rigidity value R,
        (r/2) log2 n - c n - n log2(2 sqrt(ln(4k))) - n log2 R.
    ``eliminated``: R removed through size(Gamma) >= (n - r) log2 R,
        [(r/2) log2 n - c n - n log2(2 sqrt(ln(4k)))] / (1 + n/(n - r)).
    """

    n: int
    r: int
    k: float
    R: float
    c: float
    main: float
    lemma43: float
    union: float
    rigidity: float
    factor: float
    value: float
    eliminated: float

    def terms(self) -> dict[str, float]:
        return {
            "(r/2)log2 n": self.main,
            "-c n": self.lemma43,
            "-n log2(2 sqrt(ln 4k))": self.union,
            "-n log2 R": self.rigidity,
            "1 + n/(n-r)": self.factor,
        }


def convolution_theorem_surrogate(n: int, r: int, k: float | None = None, R: float = 1.0,
                                  c: float | None = None) -> SurrogateTerms:
    """Explicit right-hand side of the cyclic-convolution argument at finite n.

    ``k`` (number of x-side linear forms) defaults to the worst case 3 n^3;
    ``c`` defaults to the Gaussian-product constant (about 3.73).  This is an
    experimental quantity, not a certificate for a particular circuit.
    """
    if not 1 <= r < n:
        raise ValueError("need 1 <= r < n")
    if not R > 0:
        raise ValueError("R must be positive")
    if k is None:
        k = 3 * n**3
    if c is None:
        c = lemma43_constant()
    main = 0.5 * r * math.log2(n)
    lem = -c * n
    union = -n * math.log2(2 * math.sqrt(math.log(4 * k)))
    rig = -n * math.log2(R)
    factor = 1 + n / (n - r)
    return SurrogateTerms(
        n, r, k, R, c, main, lem, union, rig, factor,
        value=main + lem + union + rig,
        eliminated=(main + lem + union) / factor,
    )
