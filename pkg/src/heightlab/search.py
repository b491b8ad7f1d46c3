"""Enumeration of rational points of bounded height on a hypersurface.

The search visits sign-canonical coordinate tuples in the box [-B, B]^(n+1)
and never evaluates F on tuples ruled out modulo a small prime.  For each
sieve prime p a table records, for every residue prefix (x_0..x_{n-1}) mod p,
the residues of x_n making F vanish mod p (the feasible set, stored as a
bitset over (Z/p)^(n+1)).  Surviving residues are glued by CRT across the
primes, so for a given prefix only the last coordinates in the admissible
classes modulo prod(p) are ever generated.  Every candidate is then checked
exactly.

Work is split by the value of x_0 (the outer coordinate); partitions share
only the read-only form and tables, and results are concatenated in x_0
order, which is already lexicographic.
"""

from __future__ import annotations

import bisect
import itertools
import json
import logging
import math
import statistics
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
from sympy import isprime, nextprime

from .arith import ProjPoint, point_from_json, point_to_json
from .errors import ConfigError, InsufficientData, UnsortedBounds
from .forms import HypersurfaceSpec, evaluate_array, evaluate_form

log = logging.getLogger(__name__)

MAX_SIEVE_PRIME = 10_000
TABLE_CAP = 1 << 22  # entries in one residue table, p^(n+1)
MODULUS_CAP = 1 << 40
COORD_CAP = 1 << 31
DEFAULT_SIEVE_COUNT = 6


@dataclass(frozen=True)
class SearchConfig:
    height_bound: int
    sieve_primes: tuple[int, ...] | None = None
    thread_partitions: int = 1
    real_dimension: int | None = None
    memory_cap: int | None = None
    spill_dir: str | None = None
    use_sieve: bool = True

    def __post_init__(self):
        B = self.height_bound
        if not isinstance(B, int) or isinstance(B, bool) or B < 1:
            raise ConfigError(f"height_bound: expected a positive integer, got {B!r}")
        if B >= COORD_CAP:
            raise ConfigError(f"height_bound: {B} exceeds the supported range")
        if self.sieve_primes is not None:
            ps = tuple(int(p) for p in self.sieve_primes)
            if len(set(ps)) != len(ps):
                raise ConfigError("sieve_primes: primes must be distinct")
            for p in ps:
                if not isprime(p) or p > MAX_SIEVE_PRIME:
                    raise ConfigError(f"sieve_primes: {p} is not a prime <= {MAX_SIEVE_PRIME}")
            object.__setattr__(self, "sieve_primes", ps)
        if int(self.thread_partitions) < 1:
            raise ConfigError("thread_partitions: must be >= 1")
        if self.memory_cap is not None and self.memory_cap < 1:
            raise ConfigError("memory_cap: must be positive")


def default_sieve_primes(spec: HypersurfaceSpec, count: int = DEFAULT_SIEVE_COUNT) -> tuple[int, ...]:
    """The first primes not dividing the gcd of the pure-power coefficients.

    Primes whose residue table would exceed ``TABLE_CAP`` entries are skipped,
    so high-dimensional forms get fewer (smaller) primes.
    """
    d = spec.degree
    pure = [c for e, c in spec.terms if max(e) == d]
    g = reduce(math.gcd, pure, 0)
    out, p = [], 2
    while len(out) < count and p ** spec.nvars <= TABLE_CAP:
        if g == 0 or g % p:
            out.append(p)
        p = nextprime(p)
    return tuple(out)


class SieveTable:
    """Residues of the last coordinate making F vanish mod p, per residue prefix."""

    def __init__(self, spec: HypersurfaceSpec, p: int):
        n1 = spec.nvars
        if p**n1 > TABLE_CAP:
            raise ConfigError(
                f"sieve_primes: table for p={p} needs {p}^{n1} entries (cap {TABLE_CAP})"
            )
        self.p = p
        grids = np.indices((p,) * n1, dtype=np.int64).reshape(n1, -1)
        val = np.zeros(grids.shape[1], dtype=np.int64)
        for e, c in spec.terms:
            t = np.full(grids.shape[1], c % p, dtype=np.int64)
            for i, k in enumerate(e):
                if k:
                    pw = np.array([pow(r, k, p) for r in range(p)], dtype=np.int64)
                    t = t * pw[grids[i]] % p
            val = (val + t) % p
        # bitset over (Z/p)^(n+1), last coordinate fastest
        self.dense = val == 0
        self.feasible = np.packbits(self.dense)
        zero = (val == 0).reshape(-1, p)
        self.counts = zero.sum(axis=1).astype(np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.counts)[:-1]]).astype(np.int64)
        self.flat_roots = np.nonzero(zero)[1].astype(np.int64)
        self.survival = float(zero.mean())

    def is_feasible(self, residues: Sequence[int]) -> bool:
        idx = 0
        for r in residues:
            idx = idx * self.p + (r % self.p)
        return bool((self.feasible[idx >> 3] >> (7 - (idx & 7))) & 1)


def resolve_primes(spec: HypersurfaceSpec, cfg: SearchConfig) -> tuple[int, ...]:
    if not cfg.use_sieve:
        return ()
    primes = cfg.sieve_primes if cfg.sieve_primes is not None else default_sieve_primes(spec)
    for p in primes:
        if p**spec.nvars > TABLE_CAP:
            raise ConfigError(
                f"sieve_primes: table for p={p} needs {p}^{spec.nvars} entries (cap {TABLE_CAP})"
            )
    modulus = math.prod(primes)
    if modulus > MODULUS_CAP:
        raise ConfigError(f"sieve_primes: product {modulus} exceeds {MODULUS_CAP}")
    return tuple(primes)


def _ragged_arange(counts: np.ndarray) -> np.ndarray:
    """Concatenation of arange(c) for c in counts."""
    total = int(counts.sum())
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    return np.arange(total, dtype=np.int64) - starts


def _prefix_grid(n: int, B: int, x0: int) -> np.ndarray:
    """All prefixes (x0, x1..x_{n-1}) for a fixed x0, canonical-sign filtered."""
    if n == 1:
        return np.array([[x0]], dtype=np.int64)
    side = np.arange(-B, B + 1, dtype=np.int64)
    mesh = np.meshgrid(*([side] * (n - 1)), indexing="ij")
    rest = np.stack([m.ravel() for m in mesh], axis=1)
    if x0 == 0:
        # first nonzero of the tail must be positive, or the tail is all zero
        nz = rest != 0
        first = np.where(nz.any(axis=1), rest[np.arange(len(rest)), nz.argmax(axis=1)], 0)
        rest = rest[first >= 0]
    return np.concatenate([np.full((len(rest), 1), x0, dtype=np.int64), rest], axis=1)


def _enumerate_slice(
    spec: HypersurfaceSpec, B: int, x0: int, tables: Sequence[SieveTable]
) -> np.ndarray:
    n = spec.ambient_dim
    pref = _prefix_grid(n, B, x0)
    width = 2 * B + 1
    # expand by CRT with the largest primes until each class has at most one
    # representative in [-B, B]; the remaining primes then act as filters
    expand, filters, modulus = [], [], 1
    for tab in sorted(tables, key=lambda t: -t.p):
        if modulus < width:
            expand.append(tab)
            modulus *= tab.p
        else:
            filters.append(tab)

    def residue_index(tab, rows):
        p = tab.p
        ridx = np.zeros(len(rows), dtype=np.int64)
        for i in range(n):
            ridx = ridx * p + rows[:, i] % p
        return ridx

    ent_pref = np.arange(len(pref), dtype=np.int64)
    ent_res = np.zeros(len(pref), dtype=np.int64)
    modulus = 1
    for tab in expand:
        p = tab.p
        r = residue_index(tab, pref)[ent_pref]
        k = tab.counts[r]
        roots = tab.flat_roots[np.repeat(tab.offsets[r], k) + _ragged_arange(k)]
        ent_pref = np.repeat(ent_pref, k)
        ent_res = np.repeat(ent_res, k)
        step = (roots - ent_res % p) % p * pow(modulus % p, -1, p) % p
        ent_res = ent_res + modulus * step
        modulus *= p
    # lift each residue class to the integers in [-B, B]
    lo = -((B + ent_res) // modulus)
    hi = (B - ent_res) // modulus
    cnt = np.maximum(hi - lo + 1, 0)
    last = np.repeat(ent_res + modulus * lo, cnt) + modulus * _ragged_arange(cnt)
    ent_pref = np.repeat(ent_pref, cnt)
    for tab in filters:
        p = tab.p
        ok = tab.dense[residue_index(tab, pref)[ent_pref] * p + last % p]
        ent_pref, last = ent_pref[ok], last[ok]
    tuples = np.concatenate([pref[ent_pref], last[:, None]], axis=1)
    if x0 == 0:
        tail_zero = ~(tuples[:, 1:n] != 0).any(axis=1)
        tuples = tuples[~tail_zero | (tuples[:, n] > 0)]
    tuples = tuples[np.gcd.reduce(tuples, axis=1) == 1]
    if len(tuples):
        tuples = tuples[evaluate_array_zero(spec, tuples, B)]
    order = np.lexsort(tuples.T[::-1])
    return tuples[order]


def evaluate_array_zero(spec: HypersurfaceSpec, tuples: np.ndarray, B: int) -> np.ndarray:
    return np.asarray(evaluate_array(spec, tuples, bound=B) == 0, dtype=bool)


class _Spill:
    """Holds enumerated slices, moving them to disk once a row budget is spent."""

    def __init__(self, cap: int | None, directory: str | None):
        self.cap = cap
        self.directory = directory
        self.held = 0
        self.lock = threading.Lock()
        self._tmp = None

    def store(self, arr: np.ndarray):
        if self.cap is None:
            return arr
        with self.lock:
            if self.held + len(arr) <= self.cap:
                self.held += len(arr)
                return arr
            if self._tmp is None:
                self._tmp = tempfile.TemporaryDirectory(dir=self.directory, prefix="heightlab-spill-")
            fh = tempfile.NamedTemporaryFile(dir=self._tmp.name, suffix=".npy", delete=False)
        with fh:
            np.save(fh, arr)
        return Path(fh.name)

    @staticmethod
    def load(item) -> np.ndarray:
        return np.load(item) if isinstance(item, Path) else item

    def close(self):
        if self._tmp is not None:
            self._tmp.cleanup()


def partition_ranges(B: int, parts: int) -> list[range]:
    """Contiguous ranges of outer-coordinate values x0 in [0, B]."""
    chunks = np.array_split(np.arange(B + 1), max(1, min(parts, B + 1)))
    return [range(int(c[0]), int(c[-1]) + 1) for c in chunks if len(c)]


def iter_point_arrays(spec: HypersurfaceSpec, cfg: SearchConfig) -> Iterator[np.ndarray]:
    """Yield sorted blocks of point coordinates; concatenated they are lexicographic."""
    B = cfg.height_bound
    tables = [SieveTable(spec, p) for p in resolve_primes(spec, cfg)]
    spill = _Spill(cfg.memory_cap, cfg.spill_dir)

    def work(xs: range) -> list:
        return [spill.store(_enumerate_slice(spec, B, x0, tables)) for x0 in xs]

    parts = partition_ranges(B, int(cfg.thread_partitions))
    try:
        if len(parts) == 1:
            results = [work(parts[0])]
        else:
            with ThreadPoolExecutor(max_workers=len(parts)) as pool:
                results = list(pool.map(work, parts))
        for part in results:
            for item in part:
                arr = spill.load(item)
                if len(arr):
                    yield arr
    finally:
        spill.close()


def iter_points(spec: HypersurfaceSpec, cfg: SearchConfig) -> Iterator[ProjPoint]:
    for arr in iter_point_arrays(spec, cfg):
        for row in arr.tolist():
            yield ProjPoint._trusted(tuple(row))


def enumerate_points(spec: HypersurfaceSpec, cfg: SearchConfig | int) -> list[ProjPoint]:
    """All canonical points of X with H(P) <= B, in lexicographic order."""
    if isinstance(cfg, int):
        cfg = SearchConfig(cfg)
    return list(iter_points(spec, cfg))


def naive_points(spec: HypersurfaceSpec, B: int) -> list[ProjPoint]:
    """Unsieved scan over every tuple of the box; slow, used as a cross-check."""
    out = []
    for x in itertools.product(range(-B, B + 1), repeat=spec.nvars):
        if not any(x) or math.gcd(*x) != 1:
            continue
        if next(v for v in x if v) < 0:
            continue
        if evaluate_form(spec, x) == 0:
            out.append(ProjPoint._trusted(x))
    return out


# points files --------------------------------------------------------------


def write_points_file(path: str | Path, points: Iterable[ProjPoint]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for P in points:
            fh.write(json.dumps(point_to_json(P), separators=(",", ":")))
            fh.write("\n")
            n += 1
    return n


def read_points_file(path: str | Path) -> Iterator[ProjPoint]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield point_from_json(json.loads(line))


def manifest(spec: HypersurfaceSpec, cfg: SearchConfig, total: int) -> dict:
    return {
        "spec_hash": spec.spec_hash,
        "height_bound": cfg.height_bound,
        "sieve_primes": list(resolve_primes(spec, cfg)),
        "total_count": total,
    }


# counting ------------------------------------------------------------------


@dataclass(frozen=True)
class CountSeries:
    samples: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        bs = [b for b, _ in self.samples]
        if any(b2 <= b1 for b1, b2 in zip(bs, bs[1:])):
            raise UnsortedBounds("bounds must be strictly increasing")
        cs = [c for _, c in self.samples]
        if any(c2 < c1 for c1, c2 in zip(cs, cs[1:])):
            raise ValueError("counts must be nondecreasing in B")

    @property
    def bounds(self) -> list[int]:
        return [b for b, _ in self.samples]

    @property
    def counts(self) -> list[int]:
        return [c for _, c in self.samples]


def _check_bounds(bounds: Sequence[int]) -> list[int]:
    bounds = [int(b) for b in bounds]
    if any(b < 1 for b in bounds):
        raise UnsortedBounds("bounds must be positive")
    if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
        raise UnsortedBounds(f"bounds must be strictly increasing, got {bounds}")
    return bounds


def count_function(
    points: Iterable[ProjPoint],
    exclusion: Callable[[ProjPoint], bool] | None,
    bounds: Sequence[int],
) -> CountSeries:
    """N(B) = #{P : H(P) <= B, P not excluded} for each B in ``bounds``."""
    bounds = _check_bounds(bounds)
    points = list(points)
    if exclusion is None:
        kept = points
    elif hasattr(exclusion, "mask"):
        kept = [P for P, out in zip(points, exclusion.mask(points)) if not out]
    else:
        kept = [P for P in points if not exclusion(P)]
    tally = [0] * (len(bounds) + 1)
    for P in kept:
        tally[bisect.bisect_left(bounds, P.height)] += 1
    counts = np.cumsum(tally[:-1]).tolist() if bounds else []
    return CountSeries(tuple(zip(bounds, (int(c) for c in counts))))


def fit_growth_exponent(series: CountSeries) -> float:
    """Least-squares slope of ln N against ln B over samples with N >= 1."""
    pts = [(math.log(b), math.log(c)) for b, c in series.samples if c >= 1]
    if len(pts) < 2:
        raise InsufficientData(f"need two samples with positive count, got {len(pts)}")
    xs, ys = zip(*pts)
    if len(set(ys)) == 1:
        return 0.0
    return statistics.linear_regression(xs, ys).slope
