"""Exact arithmetic on rational points of projective space.

Points are stored as canonical primitive integer vectors; heights are the
standard Weil height relative to the hyperplane class.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Iterable, Sequence, Union

from sympy import factorint, isprime

from .errors import AllZero, NotCanonical, ZeroInput

Rational = Union[int, Fraction]


@dataclass(frozen=True, order=True)
class ProjPoint:
    """A rational point of P^n with primitive, sign-canonical coordinates."""

    coords: tuple[int, ...]

    def __post_init__(self):
        c = self.coords
        if not isinstance(c, tuple):
            object.__setattr__(self, "coords", c := tuple(int(x) for x in c))
        if not any(c):
            raise AllZero("point has all coordinates zero")
        if math.gcd(*c) != 1:
            raise NotCanonical(f"coordinates {c} are not primitive")
        if _first_nonzero(c) < 0:
            raise NotCanonical(f"first nonzero coordinate of {c} is negative")

    @classmethod
    def _trusted(cls, coords: tuple[int, ...]) -> "ProjPoint":
        # bulk construction from already-canonical enumeration output
        obj = object.__new__(cls)
        object.__setattr__(obj, "coords", coords)
        return obj

    @property
    def dim(self) -> int:
        """Projective dimension n (the point has n+1 coordinates)."""
        return len(self.coords) - 1

    @property
    def height(self) -> int:
        return max(abs(x) for x in self.coords)

    def __len__(self):
        return len(self.coords)

    def __iter__(self):
        return iter(self.coords)

    def __getitem__(self, i):
        return self.coords[i]

    def __repr__(self):
        return f"ProjPoint({list(self.coords)})"

    def to_json(self) -> list[str]:
        return point_to_json(self)


def _first_nonzero(coords: Sequence[int]) -> int:
    for x in coords:
        if x:
            return x
    return 0


def normalize(raw_coords: Iterable[int]) -> ProjPoint:
    """Return the primitive representative whose first nonzero entry is positive.

    >>> normalize([-5, 10, 0, 0])
    ProjPoint([1, -2, 0, 0])
    """
    c = [int(x) for x in raw_coords]
    if not any(c):
        raise AllZero("cannot normalize the zero vector")
    g = reduce(math.gcd, c)
    if _first_nonzero(c) < 0:
        g = -g
    return ProjPoint._trusted(tuple(x // g for x in c))


def normalize_rational(raw_coords: Iterable[Rational]) -> ProjPoint:
    """Normalize a vector of rationals by clearing denominators first."""
    fr = [Fraction(x) for x in raw_coords]
    den = reduce(math.lcm, (x.denominator for x in fr), 1)
    return normalize(int(x * den) for x in fr)


@dataclass(frozen=True)
class Place:
    """One place of Q: archimedean when ``prime`` is None, else the p-adic place."""

    prime: int | None = None

    def __post_init__(self):
        if self.prime is not None:
            p = self.prime
            if not isinstance(p, int) or p < 2 or not isprime(p):
                raise ValueError(f"finite place requires a prime, got {p!r}")

    @property
    def is_archimedean(self) -> bool:
        return self.prime is None

    @classmethod
    def parse(cls, value) -> "Place":
        if isinstance(value, Place):
            return value
        if isinstance(value, str):
            s = value.strip().lower()
            if s in ("inf", "infinity", "archimedean", "oo"):
                return cls(None)
            s = s.removeprefix("p=").removeprefix("p")
            try:
                value = int(s)
            except ValueError:
                raise ValueError(f"unrecognised place {value!r}") from None
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"unrecognised place {value!r}")
        return cls(value)

    def sort_key(self):
        return (0, 0) if self.prime is None else (1, self.prime)

    def __str__(self):
        return "inf" if self.prime is None else str(self.prime)

    def __repr__(self):
        return "Place(inf)" if self.prime is None else f"Place({self.prime})"


ARCHIMEDEAN = Place(None)


def place_set(values: Iterable) -> tuple[Place, ...]:
    """Parse and deduplicate a collection of places into a sorted tuple."""
    places = {Place.parse(v) for v in values}
    return tuple(sorted(places, key=Place.sort_key))


def ord_p(r: Rational, p: int) -> int:
    """p-adic valuation of a nonzero rational."""
    r = Fraction(r)
    if r == 0:
        raise ZeroInput("valuation of zero is infinite")
    return _ord_int(r.numerator, p) - _ord_int(r.denominator, p)


def _ord_int(n: int, p: int) -> int:
    n = abs(n)
    k = 0
    while n % p == 0:
        n //= p
        k += 1
    return k


def abs_v(r: Rational, v: Place) -> Fraction:
    """Normalized absolute value |r|_v, exact.

    >>> abs_v(12, Place(2))
    Fraction(1, 4)
    """
    r = Fraction(r)
    if r == 0:
        raise ZeroInput("absolute value of zero requested")
    if v.prime is None:
        return abs(r)
    return Fraction(v.prime) ** (-ord_p(r, v.prime))


def log_abs_v(r: Rational, v: Place) -> float:
    """ln |r|_v, computed from the exact valuation at finite places."""
    r = Fraction(r)
    if r == 0:
        raise ZeroInput("absolute value of zero requested")
    if v.prime is None:
        return math.log(abs(r.numerator)) - math.log(r.denominator)
    return -ord_p(r, v.prime) * math.log(v.prime)


def prime_support(r: Rational) -> list[int]:
    """Sorted primes dividing the numerator or denominator of r."""
    r = Fraction(r)
    if r == 0:
        raise ZeroInput("prime support of zero is undefined")
    ps = set(factorint(abs(r.numerator))) | set(factorint(r.denominator))
    return sorted(ps)


@dataclass(frozen=True)
class HeightValue:
    multiplicative: Fraction
    logarithmic: float

    @classmethod
    def from_multiplicative(cls, value: Rational) -> "HeightValue":
        value = Fraction(value)
        return cls(value, math.log(value.numerator) - math.log(value.denominator))


def weil_height(P: ProjPoint) -> HeightValue:
    return HeightValue.from_multiplicative(P.height)


def pair_height(P: ProjPoint, Q: ProjPoint) -> HeightValue:
    """Height on the product: H(P)·H(Q), logarithmically h(P)+h(Q)."""
    hp, hq = P.height, Q.height
    return HeightValue(Fraction(hp * hq), math.log(hp) + math.log(hq))


def point_to_json(P: ProjPoint) -> list[str]:
    return [str(x) for x in P.coords]


def point_from_json(data) -> ProjPoint:
    """Parse a JSON array of decimal strings (plain ints are tolerated)."""
    if isinstance(data, str):
        data = json.loads(data)
    if not isinstance(data, list):
        raise ValueError("point must be a JSON array")
    return ProjPoint(tuple(int(x) for x in data))


def dumps_point(P: ProjPoint) -> str:
    return json.dumps(point_to_json(P), separators=(",", ":"))
