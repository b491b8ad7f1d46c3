"""Exact invariant checks behind ``heightlab verify`` and the acceptance suite.

Every check returns a :class:`CheckResult`; nothing here raises on a
violated invariant, so a full report can always be written.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .arith import ARCHIMEDEAN, Place, ProjPoint, log_abs_v, prime_support, weil_height
from .curves import ExclusionPredicate, detect_lines, line_on_surface
from .errors import NoPairs
from .forms import HypersurfaceSpec, contains_point, evaluate_form, hyperplane, is_singular_at, make_form
from .localheights import (
    distance_matrix_ord,
    heights_of,
    local_height_hypersurface,
    log_array,
    neg_log_distance,
    ord_array,
    pair_indices,
    pair_minors,
    points_array,
)
from .repulsion import pair_scan, vojta_gap_check
from .search import SearchConfig, count_function, enumerate_points, naive_points

LN2 = math.log(2)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def check_product_formula(values: Sequence[Fraction], tol: float = 1e-12) -> CheckResult:
    """sum over {inf} + supp(r) of ln|r|_v vanishes for every nonzero rational r."""
    worst = 0.0
    for r in values:
        places = [ARCHIMEDEAN] + [Place(p) for p in prime_support(r)]
        total = math.fsum(log_abs_v(r, v) for v in places)
        worst = max(worst, abs(total) / max(1.0, abs(math.log(abs(r)))))
    return CheckResult("product_formula", worst <= tol, {"count": len(values), "worst_residual": worst})


def sample_rationals(points: Sequence[ProjPoint], limit: int = 2000) -> list[Fraction]:
    out = []
    for P in points:
        nz = [x for x in P.coords if x]
        for a, b in itertools.permutations(nz, 2):
            r = Fraction(a * P.height + 1, b)
            if r:
                out.append(r)
        if len(out) >= limit:
            break
    return out[:limit]


def default_test_divisors(nvars: int) -> list[HypersurfaceSpec]:
    """A hyperplane and a quadric in the given ambient space, both primitive."""
    coeffs = [1, 2, 3, 5, 7, 11, 13, 17][:nvars] + [1] * max(0, nvars - 8)
    quad = {}
    for i in range(nvars):
        e = [0] * nvars
        e[i] = 2
        quad[tuple(e)] = 1 if i % 2 == 0 else 2
    e = [0] * nvars
    e[0] += 1
    e[-1] += 1
    quad[tuple(e)] = quad.get(tuple(e), 0) + 3
    return [hyperplane(coeffs), make_form(nvars - 1, 2, quad)]


def check_local_decomposition(
    points: Sequence[ProjPoint], divisors: Sequence[HypersurfaceSpec], tol: float = 1e-9
) -> CheckResult:
    """Summed over inf and the primes dividing the form value, local heights give degree * h(P)."""
    worst, used, skipped = 0.0, 0, 0
    for divisor in divisors:
        for P in points:
            fx = evaluate_form(divisor, P)
            if fx == 0:
                skipped += 1
                continue
            places = [ARCHIMEDEAN] + [Place(p) for p in prime_support(fx)]
            total = math.fsum(local_height_hypersurface(divisor, P, v) for v in places)
            expect = divisor.degree * weil_height(P).logarithmic
            worst = max(worst, abs(total - expect))
            used += 1
    return CheckResult(
        "local_height_decomposition",
        worst <= tol and used > 0,
        {"evaluations": used, "on_divisor_skipped": skipped, "worst_residual": worst},
    )


def check_liouville(points: Sequence[ProjPoint], primes: Sequence[int]) -> list[CheckResult]:
    """dist_inf >= 1/(H H') and dist_p >= 1/(2 H H') on every pair, as integer inequalities."""
    arr = points_array(points)
    n = len(points)
    H = heights_of(arr) if n else np.zeros(0, dtype=np.int64)
    arch_bad = 0
    fin_bad = {p: 0 for p in primes}
    pairs = 0
    for I, J in pair_indices(n):
        M = pair_minors(arr, I, J)
        m = np.abs(M).max(axis=1)
        pairs += len(m)
        # dist_inf = m / (H H') >= 1 / (H H')  <=>  m >= 1
        arch_bad += int((m < 1).sum())
        g = np.gcd.reduce(M, axis=1)
        hh2 = 2 * H[I] * H[J]
        for p in primes:
            k = ord_array(g, p)
            # dist_p = p^-k >= 1 / (2 H H')  <=>  p^k <= 2 H H'
            if arr.dtype == object:
                fin_bad[p] += sum(p ** int(a) > b for a, b in zip(k, hh2))
            else:
                fin_bad[p] += int((p**k > hh2).sum())
    out = [CheckResult("liouville_archimedean", arch_bad == 0, {"pairs": pairs, "violations": arch_bad})]
    out.append(
        CheckResult(
            "liouville_finite",
            all(v == 0 for v in fin_bad.values()),
            {"pairs": pairs, "primes": list(primes), "violations": {str(p): v for p, v in fin_bad.items()}},
        )
    )
    return out


def check_ultrametric(points: Sequence[ProjPoint], primes: Sequence[int]) -> CheckResult:
    """dist_p(P,R) <= max(dist_p(P,Q), dist_p(Q,R)) on every ordered triple of distinct points."""
    n = len(points)
    bad = 0
    for p in primes:
        K = distance_matrix_ord(points, p)  # dist = p^-K
        big = np.iinfo(np.int64).max
        Kf = np.where(K < 0, big, K)
        for j in range(n):
            # -log_p of the max of the two distances through j
            through = np.minimum(Kf[:, j][:, None], Kf[j, :][None, :])
            viol = Kf < through
            viol[j, :] = False
            viol[:, j] = False
            np.fill_diagonal(viol, False)
            bad += int(viol.sum())
    return CheckResult(
        "ultrametric", bad == 0, {"points": n, "triples": n * (n - 1) * (n - 2), "primes": list(primes), "violations": bad}
    )


def check_enumeration(spec: HypersurfaceSpec, bound: int, brute_bound: int, partitions=(1, 2, 8)) -> list[CheckResult]:
    out = []
    naive = naive_points(spec, brute_bound)
    sieved = enumerate_points(spec, SearchConfig(brute_bound))
    out.append(CheckResult("sieve_equals_naive", naive == sieved, {"bound": brute_bound, "points": len(naive)}))
    runs = [enumerate_points(spec, SearchConfig(bound, thread_partitions=k)) for k in partitions]
    same = all(r == runs[0] for r in runs[1:])
    out.append(CheckResult("partition_independence", same, {"bound": bound, "partitions": list(partitions)}))
    pts = runs[0]
    canon = all(math.gcd(*P.coords) == 1 and next(x for x in P.coords if x) > 0 for P in pts)
    on = all(contains_point(spec, P) for P in pts)
    ordered = all(a < b for a, b in zip(pts, pts[1:]))
    out.append(CheckResult("points_canonical_on_surface", canon and on and ordered, {"points": len(pts)}))
    singular = [P for P in pts if is_singular_at(spec, P)]
    out.append(
        CheckResult(
            "smooth_at_points",
            not singular,
            {"points": len(pts), "singular": [list(P.coords) for P in singular[:10]]},
        )
    )
    return out


def check_lines(spec: HypersurfaceSpec, points: Sequence[ProjPoint], min_points: int) -> CheckResult:
    found = detect_lines(points, min_points)
    bad = []
    for line, count in found:
        members = sum(line.contains(P) for P in points)
        # more than d points of X on a line force the line into X
        must_lie = count > spec.degree
        if members != count or (must_lie and not line_on_surface(line, spec)):
            bad.append(list(line.pluecker))
    return CheckResult("line_detection", not bad, {"lines": len(found), "inconsistent": bad})


def check_exponent_bounds(points: Sequence[ProjPoint], places: Sequence[Place]) -> CheckResult:
    """exponent <= 1 + ln2 / pair_h on every pair, i.e. -ln dist - pair_h <= ln 2."""
    arr = points_array(points)
    n = len(points)
    worst = -math.inf
    if n >= 2:
        lh = log_array(heights_of(arr))
        for I, J in pair_indices(n):
            M = pair_minors(arr, I, J)
            ph = lh[I] + lh[J]
            for v in places:
                neg = neg_log_distance(arr, lh, I, J, v, M)[0]
                worst = max(worst, float((neg - ph).max()))
    return CheckResult(
        "exponent_bound", worst <= LN2 + 1e-12, {"places": [str(v) for v in places], "max_gap": worst if n >= 2 else None}
    )


def check_vojta(spec, points, exclusion, epsilon_grid) -> list[CheckResult]:
    out = []
    if spec.is_k3_type:
        try:
            c = vojta_gap_check(points, spec, 1.0, [ARCHIMEDEAN]).constant
            out.append(CheckResult("vojta_theorem_bound", c <= LN2 + 1e-12, {"constant": c, "bound": LN2}))
        except NoPairs:
            out.append(CheckResult("vojta_theorem_bound", True, {"constant": None}))
    grid = sorted(epsilon_grid)
    try:
        consts = [vojta_gap_check(points, spec, e, [ARCHIMEDEAN]).constant for e in grid]
        mono = all(b <= a + 1e-12 for a, b in zip(consts, consts[1:]))
    except NoPairs:
        consts, mono = [], True
    out.append(CheckResult("vojta_monotone_in_epsilon", mono, {"epsilon": grid, "constants": consts}))
    if exclusion is not None:
        full = pair_scan(points, ARCHIMEDEAN, keep_records=False).summary.max_exponent
        cut = pair_scan(points, ARCHIMEDEAN, exclusion, keep_records=False).summary.max_exponent
        ok = full is None or cut is None or cut <= full + 1e-12
        out.append(CheckResult("exclusion_monotone", ok, {"max_all": full, "max_after_exclusion": cut}))
    return out


def check_counting(points, exclusion, bounds) -> CheckResult:
    a = count_function(points, None, bounds).counts
    b = count_function(points, exclusion, bounds).counts if exclusion is not None else a
    ok = all(x <= y for x, y in zip(a, a[1:])) and all(y <= x for x, y in zip(a, b))
    return CheckResult("count_monotone", ok, {"bounds": list(bounds), "all": a, "excluded": b})


def run_suite(
    spec: HypersurfaceSpec,
    *,
    bound: int = 20,
    brute_bound: int = 5,
    ultrametric_bound: int = 5,
    primes: Sequence[int] = (2, 3, 5),
    min_points: int = 5,
    epsilon_grid: Sequence[float] = (0.2, 0.5, 1.0),
    exclusion: ExclusionPredicate | None = None,
) -> list[CheckResult]:
    results = check_enumeration(spec, bound, brute_bound)
    pts = enumerate_points(spec, bound)
    results.append(check_product_formula(sample_rationals(pts)))
    results.append(check_local_decomposition(pts, default_test_divisors(spec.nvars)))
    results.extend(check_liouville(pts, primes))
    results.append(check_ultrametric(enumerate_points(spec, ultrametric_bound), primes))
    results.append(check_exponent_bounds(pts, [ARCHIMEDEAN] + [Place(p) for p in primes]))
    results.append(check_lines(spec, pts, min_points))
    if exclusion is None:
        exclusion = ExclusionPredicate(tuple(line for line, _ in detect_lines(pts, min_points) if line_on_surface(line, spec)))
    results.extend(check_vojta(spec, pts, exclusion, epsilon_grid))
    results.append(check_counting(pts, exclusion, sorted({max(1, bound // 4), max(1, bound // 2), bound})))
    return results
