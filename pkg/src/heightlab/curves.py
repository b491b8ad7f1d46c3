"""Rational lines through point sets: Plücker keys, detection, exclusion sets."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
from sympy import factorint

from .arith import ProjPoint, point_from_json, point_to_json
from .errors import EqualPoints
from .forms import HypersurfaceSpec, evaluate_array, evaluate_form
from .localheights import minor_pairs, minors_of, pair_minors, points_array, split_rows


def _canonical_vector(v: Sequence[int]) -> tuple[int, ...]:
    g = reduce(math.gcd, v, 0)
    if g == 0:
        raise EqualPoints("all minors vanish; the points coincide")
    first = next(x for x in v if x)
    if first < 0:
        g = -g
    return tuple(x // g for x in v)


def pluecker_of_pair(P: ProjPoint, Q: ProjPoint) -> tuple[int, ...]:
    """Primitive, sign-canonical Plücker vector (p01, p02, p03, p12, p13, p23 in P^3)."""
    return _canonical_vector(minors_of(P.coords, Q.coords))


def pluecker_relations(pl: Sequence[int], nvars: int) -> list[int]:
    """Values of the three-term relations p_ij p_kl - p_ik p_jl + p_il p_jk."""
    index = {pair: k for k, pair in enumerate(minor_pairs(nvars))}
    out = []
    for i, j, k, l in itertools.combinations(range(nvars), 4):
        p = lambda a, b: pl[index[(a, b)]]  # noqa: E731
        out.append(p(i, j) * p(k, l) - p(i, k) * p(j, l) + p(i, l) * p(j, k))
    return out


@dataclass(frozen=True, eq=False)
class RationalLine:
    span: tuple[ProjPoint, ProjPoint]
    pluecker: tuple[int, ...]

    def __eq__(self, other):
        return isinstance(other, RationalLine) and self.pluecker == other.pluecker

    def __hash__(self):
        return hash(self.pluecker)

    def __post_init__(self):
        P, Q = self.span
        if pluecker_of_pair(P, Q) != tuple(self.pluecker):
            raise ValueError("span points do not reproduce the stored Plücker vector")
        if any(pluecker_relations(self.pluecker, len(P))):
            raise ValueError("Plücker relation violated")

    @classmethod
    def through(cls, P: ProjPoint, Q: ProjPoint) -> "RationalLine":
        return cls((P, Q), pluecker_of_pair(P, Q))

    @property
    def nvars(self) -> int:
        return len(self.span[0])

    def contains(self, P: ProjPoint) -> bool:
        """Exact incidence: every 3x3 minor of [A; B; P] vanishes."""
        pl = dict(zip(minor_pairs(self.nvars), self.pluecker))
        x = P.coords
        for a, b, c in itertools.combinations(range(self.nvars), 3):
            if x[a] * pl[b, c] - x[b] * pl[a, c] + x[c] * pl[a, b]:
                return False
        return True

    def contains_array(self, arr: np.ndarray) -> np.ndarray:
        pl = dict(zip(minor_pairs(self.nvars), self.pluecker))
        ok = np.ones(len(arr), dtype=bool)
        for a, b, c in itertools.combinations(range(self.nvars), 3):
            det = arr[:, a] * pl[b, c] - arr[:, b] * pl[a, c] + arr[:, c] * pl[a, b]
            ok &= det == 0
        return ok

    def lattice_basis(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Basis (u, v) of the integer points of the line's 2-dimensional span."""
        u = self.span[0].coords
        w = list(self.span[1].coords)
        content = reduce(math.gcd, minors_of(u, w), 0)
        for q, e in sorted(factorint(content).items()):
            for _ in range(e):
                # u ^ w = 0 mod q and u is primitive, so w = -k u mod q for some k
                k = next(k for k in range(q) if all((wi + k * ui) % q == 0 for wi, ui in zip(w, u)))
                w = [(wi + k * ui) // q for wi, ui in zip(w, u)]
        return tuple(u), tuple(w)

    def to_json(self, member_count: int | None = None, on_surface: bool | None = None) -> dict:
        out = {
            "span": [point_to_json(self.span[0]), point_to_json(self.span[1])],
            "pluecker": [str(x) for x in self.pluecker],
        }
        if member_count is not None:
            out["member_count"] = member_count
        if on_surface is not None:
            out["on_surface"] = on_surface
        return out

    @classmethod
    def from_json(cls, data: dict) -> "RationalLine":
        P, Q = (point_from_json(x) for x in data["span"])
        line = cls.through(P, Q)
        if "pluecker" in data and tuple(int(x) for x in data["pluecker"]) != line.pluecker:
            raise ValueError(f"stored Plücker vector {data['pluecker']} does not match span")
        return line


def line_parameters(d: int) -> list[tuple[int, int]]:
    """d+1 pairwise non-proportional parameter pairs (s, t)."""
    out = [(1, 0), (0, 1), (1, 1)]
    k = 2
    while len(out) < d + 1:
        out += [(1, k), (k, 1)]
        k += 1
    return out[: d + 1]


def line_on_surface(line: RationalLine, spec: HypersurfaceSpec) -> bool:
    """True iff F vanishes identically on the line.

    F restricted to the line is a binary form of degree d, which has at most
    d projective zeros unless it is zero, so d+1 checks suffice.
    """
    P, Q = (p.coords for p in line.span)
    for s, t in line_parameters(spec.degree):
        x = [s * a + t * b for a, b in zip(P, Q)]
        if evaluate_form(spec, x) != 0:
            return False
    return True


def points_on_line(
    line: RationalLine, B: int, spec: HypersurfaceSpec | None = None
) -> list[ProjPoint]:
    """All canonical points of height <= B on the line, sorted.

    Points are s*u + t*v for a basis (u, v) of the line's integer lattice and
    coprime (s, t); if ``spec`` is given only points on that hypersurface are
    kept (all of them when the line lies on it).
    """
    u, v = (np.array(x, dtype=object) for x in line.lattice_basis())
    # coordinate pair with a nonzero minor bounds |s| and |t| in terms of B
    i, j = next((i, j) for i, j in minor_pairs(len(u)) if u[i] * v[j] - u[j] * v[i])
    m = abs(int(u[i] * v[j] - u[j] * v[i]))
    smax = B * (abs(int(v[i])) + abs(int(v[j]))) // m
    tmax = B * (abs(int(u[i])) + abs(int(u[j]))) // m
    big = (smax + tmax) * max(abs(int(x)) for x in (*u, *v)) >= 2**62
    dt = object if big else np.int64
    uu, vv = u.astype(dt), v.astype(dt)
    out = []
    for s in range(0, smax + 1):
        t = np.arange(-tmax, tmax + 1, dtype=np.int64) if s else np.array([1], dtype=np.int64)
        t = t[np.gcd(t, s) == 1]
        if not len(t):
            continue
        tt = t.astype(dt)
        coords = s * uu[None, :] + tt[:, None] * vv[None, :]
        H = np.abs(coords).max(axis=1)
        coords = coords[H <= B]
        if spec is not None and len(coords):
            coords = coords[np.asarray(evaluate_array(spec, coords, bound=B) == 0)]
        if len(coords):
            # (s, t) coprime on a saturated basis, so rows are already primitive
            nz = coords != 0
            sign = np.sign(coords[np.arange(len(coords)), nz.argmax(axis=1)])
            out.extend(ProjPoint._trusted(tuple(r)) for r in (coords * sign[:, None]).tolist())
    out.sort()
    return out


def _canonical_rows(M: np.ndarray) -> np.ndarray:
    g = np.gcd.reduce(M, axis=1)
    M = M // g[:, None]
    nz = M != 0
    first = M[np.arange(len(M)), nz.argmax(axis=1)]
    return M * np.sign(first)[:, None]


def _detect_rows(arr: np.ndarray, start: int, stop: int, threshold: int) -> dict:
    """Lines first seen at rows start..stop-1: key -> (row, partner, pairs in that row)."""
    n, width = len(arr), arr.shape[1] * (arr.shape[1] - 1) // 2
    found = {}
    for i in range(start, stop):
        if n - i - 1 < threshold:
            break
        J = np.arange(i + 1, n)
        M = _canonical_rows(pair_minors(arr, np.full(len(J), i), J))
        keys = np.ascontiguousarray(M).view(np.dtype((np.void, M.dtype.itemsize * width))).ravel()
        uniq, first, counts = np.unique(keys, return_index=True, return_counts=True)
        for k in np.nonzero(counts >= threshold)[0]:
            key = tuple(int(x) for x in M[first[k]])
            if key not in found:
                found[key] = (i, int(J[first[k]]), int(counts[k]))
    return found


def _detect_rows_exact(points: Sequence[ProjPoint], start: int, stop: int, threshold: int) -> dict:
    found = {}
    n = len(points)
    for i in range(start, stop):
        groups: dict[tuple, list[int]] = {}
        for j in range(i + 1, n):
            groups.setdefault(pluecker_of_pair(points[i], points[j]), []).append(j)
        for key, js in groups.items():
            if len(js) >= threshold and key not in found:
                found[key] = (i, js[0], len(js))
    return found


def detect_lines(
    points: Sequence[ProjPoint], min_points: int = 5, workers: int = 1
) -> list[tuple[RationalLine, int]]:
    """Lines containing at least ``min_points`` of the input points.

    Pairs are grouped by their canonical Plücker vector.  A line with k
    members is credited at its lowest-index member, whose row holds exactly
    k - 1 partners on it.  Output is sorted by member count (descending),
    then by Plücker vector.
    """
    if min_points < 3:
        raise ValueError("min_points must be at least 3")
    points = list(points)
    n = len(points)
    if n < min_points:
        return []
    arr = points_array(points)
    threshold = min_points - 1
    parts = split_rows(n, workers)

    def run(rng):
        a, b = rng
        if arr.dtype == object:
            return _detect_rows_exact(points, a, b, threshold)
        return _detect_rows(arr, a, b, threshold)

    if len(parts) == 1:
        results = [run(parts[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            results = list(pool.map(run, parts))
    merged: dict[tuple, tuple[int, int, int]] = {}
    for res in results:
        for key, rec in res.items():
            if key not in merged or rec[0] < merged[key][0]:
                merged[key] = rec
    out = []
    for key, (i, j, cnt) in merged.items():
        line = RationalLine((points[i], points[j]), key)
        out.append((line, cnt + 1))
    out.sort(key=lambda lc: (-lc[1], lc[0].pluecker))
    return out


@dataclass(frozen=True)
class ExclusionPredicate:
    """Points lying on any listed line, plus an explicit denylist."""

    lines: tuple[RationalLine, ...] = ()
    extra_points: frozenset = field(default_factory=frozenset)

    def __call__(self, P: ProjPoint) -> bool:
        if P in self.extra_points:
            return True
        return any(line.contains(P) for line in self.lines if line.nvars == len(P))

    def mask(self, points: Sequence[ProjPoint]) -> np.ndarray:
        """Vectorized membership for a list of points."""
        out = np.zeros(len(points), dtype=bool)
        if not points:
            return out
        arr = points_array(points)
        for line in self.lines:
            out |= line.contains_array(arr)
        if self.extra_points:
            out |= np.array([P in self.extra_points for P in points], dtype=bool)
        return out

    def union(self, other: "ExclusionPredicate") -> "ExclusionPredicate":
        lines = tuple(dict.fromkeys(self.lines + other.lines))
        return ExclusionPredicate(lines, self.extra_points | other.extra_points)

    def to_json(self) -> dict:
        return {
            "lines": [line.to_json() for line in self.lines],
            "extra_points": [point_to_json(P) for P in sorted(self.extra_points)],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExclusionPredicate":
        lines = tuple(RationalLine.from_json(x) for x in data.get("lines", []))
        extra = frozenset(point_from_json(x) for x in data.get("extra_points", []))
        return cls(lines, extra)


NO_EXCLUSION = ExclusionPredicate()


def lines_report(detected: Iterable[tuple[RationalLine, int]], spec: HypersurfaceSpec) -> list[dict]:
    return [line.to_json(count, line_on_surface(line, spec)) for line, count in detected]
