"""Place-local functionals: projective distance, local heights, proximity.

The distance between two points of P^n at a place v is the sup-norm minor
formula

    dist_v(P, Q) = max_{i<j} |x_i y_j - x_j y_i|_v / (max_i |x_i|_v * max_j |y_j|_v)

which is exact over Q.  The diagonal local height is -ln dist_v.

Besides the scalar operations, this module holds the vectorized all-pairs
kernels used by the repulsion scans and the invariant checks.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

from .arith import Place, ProjPoint, abs_v, log_abs_v, ord_p
from .errors import DimensionMismatch, OnDivisor
from .forms import HypersurfaceSpec, evaluate_form

# coordinates below this keep every 2x2 minor inside int64
INT64_COORD_LIMIT = 2**31


class _Diagonal:
    """Marker for the diagonal of X x X as a divisor-like target."""

    def __repr__(self):
        return "DIAGONAL"


DIAGONAL = _Diagonal()


@dataclass(frozen=True)
class DistanceValue:
    exact: Fraction
    log_negated: float

    @property
    def is_zero(self) -> bool:
        return self.exact == 0


def minor_pairs(nvars: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(nvars), 2))


def minors_of(P: Sequence[int], Q: Sequence[int]) -> list[int]:
    """The 2x2 minors x_i y_j - x_j y_i for i < j, in lexicographic (i, j) order."""
    return [P[i] * Q[j] - P[j] * Q[i] for i, j in minor_pairs(len(P))]


def proj_distance(P: ProjPoint, Q: ProjPoint, v: Place) -> DistanceValue:
    if len(P) != len(Q):
        raise DimensionMismatch("points live in different projective spaces")
    nz = [m for m in minors_of(P.coords, Q.coords) if m]
    if not nz:
        return DistanceValue(Fraction(0), math.inf)
    num = max(abs_v(m, v) for m in nz)
    den = max(abs_v(x, v) for x in P.coords if x) * max(abs_v(y, v) for y in Q.coords if y)
    exact = num / den
    if v.is_archimedean:
        # same evaluation order as the vectorized kernel
        neg = math.log(P.height) + math.log(Q.height) - math.log(max(abs(m) for m in nz))
    else:
        # exact = p^-k with k the least valuation among the minors
        neg = -ord_p(exact, v.prime) * math.log(v.prime)
    return DistanceValue(exact, neg)


def local_height_hypersurface(spec: HypersurfaceSpec, P: ProjPoint, v: Place) -> float:
    """d * ln max_i |x_i|_v - ln |F(x)|_v  (the Weil function with zero correction term)."""
    fx = evaluate_form(spec, P)
    if fx == 0:
        raise OnDivisor(f"{P} lies on the divisor")
    top = max(abs_v(x, v) for x in P.coords if x)
    return spec.degree * log_abs_v(top, v) - log_abs_v(fx, v)


def proximity(divisor, target, places: Iterable[Place]) -> float:
    """Sum of local heights over a place set.

    ``divisor`` is a :class:`HypersurfaceSpec` (``target`` a point) or
    :data:`DIAGONAL` (``target`` a pair of distinct points).
    """
    places = list(places)
    if divisor is DIAGONAL:
        P, Q = target
        if P == Q:
            raise OnDivisor("the pair lies on the diagonal")
        return sum(proj_distance(P, Q, v).log_negated for v in places)
    if not places:
        if evaluate_form(divisor, target) == 0:
            raise OnDivisor(f"{target} lies on the divisor")
        return 0.0
    return sum(local_height_hypersurface(divisor, target, v) for v in places)


def distance_csv_rows(
    points: Sequence[ProjPoint], place: Place, pairs: Iterable[tuple[int, int]]
) -> Iterator[list]:
    for i, j in pairs:
        d = proj_distance(points[i], points[j], place)
        yield [i, j, str(place), d.exact.numerator, d.exact.denominator, fmt_float(d.log_negated)]


def write_distance_csv(fh, points, place, pairs) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["i", "j", "place", "dist_num", "dist_den", "neg_log_dist"])
    w.writerows(distance_csv_rows(points, place, pairs))


def fmt_float(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


# vectorized kernels --------------------------------------------------------


def points_array(points: Sequence[ProjPoint]) -> np.ndarray:
    """Stack points into an int64 array, or an object array for huge coordinates."""
    if not points:
        return np.zeros((0, 0), dtype=np.int64)
    big = max(p.height for p in points) >= INT64_COORD_LIMIT
    return np.array([p.coords for p in points], dtype=object if big else np.int64)


def heights_of(arr: np.ndarray) -> np.ndarray:
    return np.abs(arr).max(axis=1)


def log_array(a: np.ndarray) -> np.ndarray:
    if a.dtype == object:
        return np.array([math.log(int(x)) for x in a], dtype=float)
    return np.log(a.astype(float))


def pair_indices(n: int, start: int = 0, stop: int | None = None, target: int = 1 << 20):
    """Yield (I, J) index blocks covering all i < j with start <= i < stop."""
    stop = n if stop is None else stop
    a = start
    while a < stop:
        # grow the row block until it holds about ``target`` pairs
        b, total = a, 0
        while b < stop and (total == 0 or total + (n - b - 1) <= target):
            total += n - b - 1
            b += 1
        rows = np.arange(a, b)
        lengths = n - rows - 1
        if total:
            I = np.repeat(rows, lengths)
            starts = np.repeat(np.cumsum(lengths) - lengths, lengths)
            J = np.arange(total) - starts + np.repeat(rows + 1, lengths)
            yield I, J
        a = b


def split_rows(n: int, parts: int) -> list[tuple[int, int]]:
    """Contiguous row ranges holding roughly equal numbers of i < j pairs."""
    parts = max(1, int(parts))
    total = n * (n - 1) // 2
    bounds, acc, a = [], 0, 0
    goal = total / parts
    for i in range(n):
        acc += n - i - 1
        if acc >= goal * (len(bounds) + 1) and len(bounds) < parts - 1:
            bounds.append((a, i + 1))
            a = i + 1
    bounds.append((a, n))
    return bounds


def pair_minors(arr: np.ndarray, I: np.ndarray, J: np.ndarray) -> np.ndarray:
    X, Y = arr[I], arr[J]
    cols = [X[:, i] * Y[:, j] - X[:, j] * Y[:, i] for i, j in minor_pairs(arr.shape[1])]
    return np.stack(cols, axis=1)


def ord_array(a: np.ndarray, p: int) -> np.ndarray:
    """p-adic valuation of each (nonzero) entry."""
    a = np.abs(a)
    v = np.zeros(a.shape, dtype=np.int64)
    live = (a != 0) & (a % p == 0)
    while live.any():
        v += live
        a = np.where(live, a // p, a)
        live = live & (a % p == 0)
    return v


def neg_log_distance(
    arr: np.ndarray, lh: np.ndarray, I: np.ndarray, J: np.ndarray, place: Place, M=None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """-ln dist_v for each pair, plus the exact distance as numerator/denominator arrays.

    ``lh`` holds ln H for each point. Points must be canonical so that the
    finite-place denominator is 1.
    """
    if M is None:
        M = pair_minors(arr, I, J)
    if place.is_archimedean:
        m = np.abs(M).max(axis=1)
        H = heights_of(arr)
        den = H[I] * H[J]
        neg = lh[I] + lh[J] - log_array(m)
        return neg, m, den
    p = place.prime
    g = np.gcd.reduce(M, axis=1)
    v = ord_array(g, p)
    neg = v * math.log(p)
    ones = np.ones(len(v), dtype=np.int64)
    if arr.dtype == object:
        den = np.array([p ** int(k) for k in v], dtype=object)
    else:
        den = p ** v
    return neg, ones, den


def distance_matrix_ord(points: Sequence[ProjPoint], p: int) -> np.ndarray:
    """Matrix of k with dist_p(P_i, P_j) = p^-k; -1 on the diagonal (distance zero)."""
    arr = points_array(points)
    n = len(points)
    out = np.full((n, n), -1, dtype=np.int64)
    for I, J in pair_indices(n):
        g = np.gcd.reduce(pair_minors(arr, I, J), axis=1)
        k = ord_array(g, p)
        out[I, J] = k
        out[J, I] = k
    return out


def archimedean_minor_matrix(points: Sequence[ProjPoint]) -> np.ndarray:
    """Matrix of the largest absolute 2x2 minor for every pair of points."""
    arr = points_array(points)
    n = len(points)
    out = np.zeros((n, n), dtype=arr.dtype if n else np.int64)
    for I, J in pair_indices(n):
        m = np.abs(pair_minors(arr, I, J)).max(axis=1)
        out[I, J] = m
        out[J, I] = m
    return out

