"""Pair repulsion exponents, all-pairs scans and the Vojta gap evaluator.

For distinct points P, Q and a place v the repulsion exponent is

    e_v(P, Q) = -ln dist_v(P, Q) / (h(P) + h(Q)),

the smallest eps for which dist_v(P, Q) >= H(P, Q)^-eps holds with constant 1.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

from .arith import Place, ProjPoint, pair_height, place_set, point_to_json
from .errors import EqualPoints, NoPairs, ZeroPairHeight
from .forms import HypersurfaceSpec
from .localheights import (
    DIAGONAL,
    DistanceValue,
    fmt_float,
    heights_of,
    log_array,
    neg_log_distance,
    pair_indices,
    pair_minors,
    points_array,
    proj_distance,
    proximity,
    split_rows,
)

HIST_LO, HIST_HI, HIST_WIDTH = 0.0, 1.5, 0.05
HIST_BINS = round((HIST_HI - HIST_LO) / HIST_WIDTH)
MAX_SCAN_PAIRS = 10**8
REL_TIE = 1e-12


def _tie_tol(x: float) -> float:
    return REL_TIE * max(1.0, abs(x))


@dataclass(frozen=True)
class RepulsionRecord:
    P: ProjPoint
    Q: ProjPoint
    place: Place
    distance: DistanceValue
    pair_h: float
    exponent: float


def repulsion_exponent(P: ProjPoint, Q: ProjPoint, v: Place) -> RepulsionRecord:
    if P == Q:
        raise EqualPoints(f"{P} paired with itself")
    ph = pair_height(P, Q).logarithmic
    if ph <= 0:
        raise ZeroPairHeight("both points have height 1; the exponent is undefined")
    d = proj_distance(P, Q, v)
    return RepulsionRecord(P, Q, v, d, ph, d.log_negated / ph)


@dataclass
class ScanSummary:
    place: Place
    points_included: int = 0
    points_excluded: int = 0
    pairs: int = 0
    max_exponent: float | None = None
    argmax_pairs: list[tuple[int, int]] = field(default_factory=list)
    histogram: list[int] = field(default_factory=lambda: [0] * HIST_BINS)
    underflow: int = 0
    overflow: int = 0
    thresholds: tuple[float, ...] = ()
    trend: list[float | None] = field(default_factory=list)
    trend_pairs: list[int] = field(default_factory=list)
    _cands: list = field(default_factory=list, repr=False)

    def absorb(self, I, J, exponent, pair_h):
        if not len(exponent):
            return
        self.pairs += len(exponent)
        b = np.floor((exponent - HIST_LO) / HIST_WIDTH).astype(np.int64)
        self.underflow += int((b < 0).sum())
        self.overflow += int((b >= HIST_BINS).sum())
        inside = b[(b >= 0) & (b < HIST_BINS)]
        self.histogram = (np.array(self.histogram) + np.bincount(inside, minlength=HIST_BINS)).tolist()
        for k, T in enumerate(self.thresholds):
            sel = pair_h >= T
            if sel.any():
                m = float(exponent[sel].max())
                cur = self.trend[k]
                self.trend[k] = m if cur is None else max(cur, m)
                self.trend_pairs[k] += int(sel.sum())
        bmax = float(exponent.max())
        best = bmax if self.max_exponent is None else max(self.max_exponent, bmax)
        tol = _tie_tol(best)
        keep = np.nonzero(exponent >= best - tol)[0]
        new = [(int(I[k]), int(J[k]), float(exponent[k])) for k in keep]
        self._cands = [c for c in self._cands if c[2] >= best - tol] + new
        self.max_exponent = best

    def merge(self, other: "ScanSummary") -> "ScanSummary":
        out = ScanSummary(self.place, self.points_included, self.points_excluded,
                          thresholds=self.thresholds)
        out.pairs = self.pairs + other.pairs
        out.histogram = [a + b for a, b in zip(self.histogram, other.histogram)]
        out.underflow = self.underflow + other.underflow
        out.overflow = self.overflow + other.overflow
        out.trend = [
            b if a is None else a if b is None else max(a, b)
            for a, b in zip(self.trend, other.trend)
        ]
        out.trend_pairs = [a + b for a, b in zip(self.trend_pairs, other.trend_pairs)]
        maxes = [m for m in (self.max_exponent, other.max_exponent) if m is not None]
        if maxes:
            best = max(maxes)
            tol = _tie_tol(best)
            out.max_exponent = best
            out._cands = [c for c in self._cands + other._cands if c[2] >= best - tol]
        return out

    def finalize(self):
        if self.max_exponent is not None:
            tol = _tie_tol(self.max_exponent)
            self.argmax_pairs = sorted((i, j) for i, j, e in self._cands if e >= self.max_exponent - tol)
        return self

    def to_json(self, points: Sequence[ProjPoint], real_dimension: int | None = None) -> dict:
        out = {
            "place": str(self.place),
            "points_included": self.points_included,
            "points_excluded": self.points_excluded,
            "pairs": self.pairs,
            "max_exponent": self.max_exponent,
            "argmax_pairs": [
                {"i": i, "j": j, "P": point_to_json(points[i]), "Q": point_to_json(points[j])}
                for i, j in self.argmax_pairs
            ],
            "histogram": {
                "lo": HIST_LO,
                "width": HIST_WIDTH,
                "counts": self.histogram,
                "underflow": self.underflow,
                "overflow": self.overflow,
            },
            "trend": [
                {"min_pair_h": T, "max_exponent": m, "pairs": c}
                for T, m, c in zip(self.thresholds, self.trend, self.trend_pairs)
            ],
        }
        if real_dimension is not None:
            # the counting argument consumes eps/n per point, so n*exponent is the comparable eps
            out["real_dimension"] = real_dimension
            out["max_exponent_times_dimension"] = (
                None if self.max_exponent is None else self.max_exponent * real_dimension
            )
        return out


@dataclass
class PairScan:
    summary: ScanSummary
    records: list[RepulsionRecord] | None


def _included(points, exclusion) -> np.ndarray:
    if exclusion is None:
        return np.arange(len(points))
    if hasattr(exclusion, "mask"):
        mask = exclusion.mask(points)
    else:
        mask = np.array([bool(exclusion(P)) for P in points], dtype=bool)
    return np.nonzero(~mask)[0]


def _blocks(arr, lh, idx, place, min_pair_height, start, stop) -> Iterator[dict]:
    sub, slh = arr[idx], lh[idx]
    floor = max(min_pair_height, 0.0)
    for I, J in pair_indices(len(idx), start, stop):
        ph = slh[I] + slh[J]
        keep = (ph > 0) & (ph >= floor)
        if not keep.all():
            I, J, ph = I[keep], J[keep], ph[keep]
        if not len(I):
            continue
        neg, num, den = neg_log_distance(sub, slh, I, J, place)
        yield {"I": idx[I], "J": idx[J], "pair_h": ph, "neg": neg, "num": num, "den": den,
               "exponent": neg / ph}


def count_scan_pairs(points, exclusion=None) -> int:
    k = len(_included(points, exclusion))
    return k * (k - 1) // 2


def pair_scan(
    points: Sequence[ProjPoint],
    v: Place,
    exclusion: Callable[[ProjPoint], bool] | None = None,
    min_pair_height: float = 0.0,
    *,
    thresholds: Sequence[float] = (),
    keep_records: bool = True,
    workers: int = 1,
) -> PairScan:
    """Repulsion exponents of all included pairs with 0 < pair_h, pair_h >= min_pair_height.

    Indices in the summary refer to positions in ``points``.
    """
    points = list(points)
    idx = _included(points, exclusion)
    thresholds = tuple(float(t) for t in thresholds)

    def fresh():
        return ScanSummary(v, len(idx), len(points) - len(idx), thresholds=thresholds,
                           trend=[None] * len(thresholds), trend_pairs=[0] * len(thresholds))

    if len(idx) < 2:
        return PairScan(fresh().finalize(), [] if keep_records else None)
    arr = points_array(points)
    lh = log_array(heights_of(arr))
    records = [] if keep_records else None

    def run(rng):
        s = fresh()
        recs = []
        for blk in _blocks(arr, lh, idx, v, min_pair_height, *rng):
            s.absorb(blk["I"], blk["J"], blk["exponent"], blk["pair_h"])
            if keep_records:
                recs.extend(_records_from_block(points, v, blk))
        return s, recs

    parts = split_rows(len(idx), workers)
    if len(parts) == 1:
        results = [run(parts[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            results = list(pool.map(run, parts))
    summary = results[0][0]
    for s, _ in results[1:]:
        summary = summary.merge(s)
    if keep_records:
        for _, recs in results:
            records.extend(recs)
    return PairScan(summary.finalize(), records)


def _exact(num, den) -> Fraction:
    return Fraction(int(num), int(den))


def _records_from_block(points, v, blk) -> Iterator[RepulsionRecord]:
    for i, j, ph, neg, num, den, e in zip(
        blk["I"].tolist(), blk["J"].tolist(), blk["pair_h"].tolist(), blk["neg"].tolist(),
        blk["num"].tolist(), blk["den"].tolist(), blk["exponent"].tolist(),
    ):
        yield RepulsionRecord(points[i], points[j], v, DistanceValue(_exact(num, den), neg), ph, e)


def write_scan_csv(fh, points, v: Place, exclusion=None, min_pair_height: float = 0.0) -> int:
    """Stream scan records as CSV rows; returns the number of rows written."""
    points = list(points)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["i", "j", "place", "dist_num", "dist_den", "pair_h", "exponent"])
    idx = _included(points, exclusion)
    if len(idx) < 2:
        return 0
    arr = points_array(points)
    lh = log_array(heights_of(arr))
    rows = 0
    for blk in _blocks(arr, lh, idx, v, min_pair_height, 0, len(idx)):
        num, den = blk["num"], blk["den"]
        if den.dtype != object:
            g = np.gcd(num, den)
            num, den = num // g, den // g
        for i, j, a, b, ph, e in zip(blk["I"].tolist(), blk["J"].tolist(), num.tolist(),
                                     den.tolist(), blk["pair_h"].tolist(), blk["exponent"].tolist()):
            f = Fraction(a, b)
            w.writerow([i, j, str(v), f.numerator, f.denominator, fmt_float(ph), fmt_float(e)])
            rows += 1
    return rows


@dataclass
class VojtaReport:
    epsilon: float
    places: tuple[Place, ...]
    canonical_coefficient: int
    constant: float
    argmax_pairs: list[tuple[ProjPoint, ProjPoint]]
    excluded_count: int
    pair_count: int

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "places": [str(v) for v in self.places],
            "canonical_coefficient": self.canonical_coefficient,
            "constant": self.constant,
            "argmax_pairs": [[point_to_json(P), point_to_json(Q)] for P, Q in self.argmax_pairs],
            "excluded_count": self.excluded_count,
            "pair_count": self.pair_count,
        }


def vojta_gap_check(
    points: Sequence[ProjPoint],
    spec: HypersurfaceSpec,
    epsilon: float,
    place_list,
    exclusion: Callable[[ProjPoint], bool] | None = None,
    *,
    workers: int = 1,
) -> VojtaReport:
    """Smallest c with m_S(diag, (P,Q)) + k*h(P,Q) <= eps*h(P,Q) + c over included pairs.

    Here k = d - n - 1 is the adjunction coefficient of the hypersurface, so
    the canonical-height term vanishes on K3-type surfaces.  Pairs of two
    height-1 points are dropped.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    places = place_set(place_list)
    kappa = spec.canonical_coefficient
    points = list(points)
    idx = _included(points, exclusion)
    arr = points_array(points) if points else None
    if len(idx) < 2:
        raise NoPairs("fewer than two points survive the exclusion")
    lh = log_array(heights_of(arr))
    sub, slh = arr[idx], lh[idx]

    def run(rng):
        best, cands, count = None, [], 0
        for I, J in pair_indices(len(idx), *rng):
            ph = slh[I] + slh[J]
            keep = ph > 0
            I, J, ph = I[keep], J[keep], ph[keep]
            if not len(I):
                continue
            M = pair_minors(sub, I, J)
            val = (kappa - epsilon) * ph
            for v in places:
                val = val + neg_log_distance(sub, slh, I, J, v, M)[0]
            count += len(val)
            bmax = float(val.max())
            best = bmax if best is None else max(best, bmax)
            tol = _tie_tol(best)
            sel = np.nonzero(val >= best - tol)[0]
            cands = [c for c in cands if c[2] >= best - tol]
            cands += [(int(idx[I[k]]), int(idx[J[k]]), float(val[k])) for k in sel]
        return best, cands, count

    parts = split_rows(len(idx), workers)
    if len(parts) == 1:
        results = [run(parts[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            results = list(pool.map(run, parts))
    count = sum(r[2] for r in results)
    maxes = [r[0] for r in results if r[0] is not None]
    if not maxes:
        raise NoPairs("every pair is excluded or has zero height")
    constant = max(maxes)
    tol = _tie_tol(constant)
    ties = sorted((i, j) for r in results for i, j, val in r[1] if val >= constant - tol)
    report = VojtaReport(
        float(epsilon), places, kappa, constant,
        [(points[i], points[j]) for i, j in ties],
        len(points) - len(idx), count,
    )
    _reverify(report)
    return report


def _reverify(report: VojtaReport) -> None:
    # recompute the maximizing pairs through the scalar exact path
    for P, Q in report.argmax_pairs[:64]:
        ph = pair_height(P, Q).logarithmic
        val = proximity(DIAGONAL, (P, Q), report.places) + (
            report.canonical_coefficient - report.epsilon
        ) * ph
        if not math.isclose(val, report.constant, rel_tol=1e-9, abs_tol=1e-9):
            raise ArithmeticError(
                f"vectorized constant {report.constant} disagrees with exact path {val} at {P}, {Q}"
            )
