"""Integral homogeneous forms and the hypersurfaces they cut out."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property, reduce
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .arith import ProjPoint, normalize
from .errors import DimensionMismatch, FormError, NotOnSurface

INT64_LIMIT = 2**62


@dataclass(frozen=True)
class HypersurfaceSpec:
    """A primitive integral form F of degree d in n+1 variables.

    ``terms`` is a tuple of ``(exponents, coefficient)`` sorted by exponent
    vector; use :func:`make_form` or :func:`parse_form` rather than the raw
    constructor.
    """

    ambient_dim: int
    degree: int
    terms: tuple[tuple[tuple[int, ...], int], ...]

    def __post_init__(self):
        _validate(self.ambient_dim, self.degree, list(self.terms))

    @property
    def canonical_coefficient(self) -> int:
        # adjunction: K_X = (d - n - 1) H for a degree-d hypersurface in P^n
        return self.degree - self.ambient_dim - 1

    @property
    def nvars(self) -> int:
        return self.ambient_dim + 1

    @property
    def is_k3_type(self) -> bool:
        return self.canonical_coefficient == 0

    @cached_property
    def coefficient_l1(self) -> int:
        return sum(abs(c) for _, c in self.terms)

    def int64_safe(self, bound: int) -> bool:
        """True when every evaluation on the box [-bound, bound]^(n+1) fits in int64."""
        return self.coefficient_l1 * bound**self.degree < INT64_LIMIT

    def to_json(self) -> dict:
        return {
            "ambient_dim": self.ambient_dim,
            "degree": self.degree,
            "terms": [
                {"exponents": list(e), "coefficient": str(c)} for e, c in self.terms
            ],
        }

    @cached_property
    def spec_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def __str__(self):
        parts = []
        for e, c in self.terms:
            mono = "*".join(
                f"x{i}" if k == 1 else f"x{i}^{k}" for i, k in enumerate(e) if k
            )
            parts.append(f"{c}*{mono}" if mono else str(c))
        return " + ".join(parts).replace("+ -", "- ")


def _validate(n, d, terms, lines=None):
    def where(i):
        if lines and i < len(lines):
            return f"line {lines[i]}: terms[{i}]"
        return f"terms[{i}]"

    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise FormError(f"ambient_dim: expected a positive integer, got {n!r}")
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise FormError(f"degree: expected a positive integer, got {d!r}")
    if not terms:
        raise FormError("terms: at least one term is required")
    seen = {}
    for i, (e, c) in enumerate(terms):
        if len(e) != n + 1:
            raise FormError(
                f"{where(i)}.exponents: expected {n + 1} entries, got {len(e)}"
            )
        if any((not isinstance(k, int)) or k < 0 for k in e):
            raise FormError(f"{where(i)}.exponents: entries must be nonnegative integers")
        if sum(e) != d:
            raise FormError(f"{where(i)}.exponents: sum {sum(e)} differs from degree {d}")
        if c == 0:
            raise FormError(f"{where(i)}.coefficient: zero coefficients are not allowed")
        if e in seen:
            raise FormError(
                f"{where(i)}.exponents: duplicate exponent vector {list(e)} "
                f"(first seen at terms[{seen[e]}])"
            )
        seen[e] = i
    g = reduce(math.gcd, (c for _, c in terms))
    if g != 1:
        raise FormError(f"terms: coefficients share the factor {g}; the form must be primitive")


def make_form(ambient_dim: int, degree: int, terms: Mapping | Iterable) -> HypersurfaceSpec:
    """Build a spec from ``{exponents: coefficient}`` or a list of pairs."""
    items = terms.items() if isinstance(terms, Mapping) else terms
    raw = [(tuple(int(k) for k in e), int(c)) for e, c in items]
    _validate(ambient_dim, degree, raw)
    return HypersurfaceSpec(ambient_dim, degree, tuple(sorted(raw)))


def _term_lines(text: str) -> list[int]:
    # line number of each "exponents" key, in order; used only for diagnostics
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        out.extend([lineno] * line.count('"exponents"'))
    return out


def parse_form(data: dict | str) -> HypersurfaceSpec:
    """Parse the JSON form format, validating every invariant.

    ``data`` may be the decoded dict or the raw JSON text; raw text gives
    line numbers in diagnostics.
    """
    lines = None
    if isinstance(data, str):
        lines = _term_lines(data)
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise FormError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise FormError("form file must hold a JSON object")
    for key in ("ambient_dim", "degree", "terms"):
        if key not in data:
            raise FormError(f"{key}: missing field")
    n, d, raw_terms = data["ambient_dim"], data["degree"], data["terms"]
    if not isinstance(raw_terms, list):
        raise FormError("terms: expected a list")
    terms = []
    for i, t in enumerate(raw_terms):
        if not isinstance(t, dict) or "exponents" not in t or "coefficient" not in t:
            raise FormError(f"terms[{i}]: expected an object with exponents and coefficient")
        e = t["exponents"]
        if not isinstance(e, list):
            raise FormError(f"terms[{i}].exponents: expected a list")
        c = t["coefficient"]
        try:
            if isinstance(c, bool) or not isinstance(c, (str, int)):
                raise ValueError
            c = int(c)
        except ValueError:
            raise FormError(
                f"terms[{i}].coefficient: expected a decimal integer string, got {c!r}"
            ) from None
        terms.append((tuple(e), c))
    _validate(n, d, terms, lines)
    return HypersurfaceSpec(n, d, tuple(sorted(terms)))


def load_form(path: str | Path) -> HypersurfaceSpec:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return parse_form(text)
    except FormError as exc:
        raise FormError(f"{path}: {exc}") from None


BUNDLED_FORMS = (
    "diagonal_quartic",
    "twisted_quartic",
    "cyclic_quartic",
    "fermat_cubic",
    "plane_conic",
)


def bundled_form(name: str) -> HypersurfaceSpec:
    """Load one of the fixture forms shipped in ``heightlab/data``."""
    text = resources.files("heightlab.data").joinpath(f"{name}.json").read_text()
    return parse_form(text)


def diagonal_quartic() -> HypersurfaceSpec:
    """x0^4 + x1^4 - x2^4 - x3^4."""
    return bundled_form("diagonal_quartic")


def hyperplane(coeffs: Iterable[int]) -> HypersurfaceSpec:
    coeffs = [int(c) for c in coeffs]
    n = len(coeffs) - 1
    terms = {}
    for i, c in enumerate(coeffs):
        if c:
            e = [0] * (n + 1)
            e[i] = 1
            terms[tuple(e)] = c
    return make_form(n, 1, terms)


def _check_dim(spec: HypersurfaceSpec, coords) -> None:
    if len(coords) != spec.nvars:
        raise DimensionMismatch(
            f"point has {len(coords)} coordinates, form expects {spec.nvars}"
        )


def _eval_terms(terms, x) -> int:
    total = 0
    for e, c in terms:
        v = c
        for xi, k in zip(x, e):
            if k:
                v *= xi**k
        total += v
    return total


def evaluate_form(spec: HypersurfaceSpec, P: ProjPoint | Iterable[int]) -> int:
    """Exact integer value of F at the given coordinates."""
    x = P.coords if isinstance(P, ProjPoint) else tuple(int(v) for v in P)
    _check_dim(spec, x)
    return _eval_terms(spec.terms, x)


def contains_point(spec: HypersurfaceSpec, P: ProjPoint) -> bool:
    return evaluate_form(spec, P) == 0


def partial_derivative_terms(spec: HypersurfaceSpec, i: int):
    out = []
    for e, c in spec.terms:
        if e[i]:
            e2 = list(e)
            e2[i] -= 1
            out.append((tuple(e2), c * e[i]))
    return out


def gradient(spec: HypersurfaceSpec, P: ProjPoint) -> tuple[int, ...]:
    x = P.coords
    _check_dim(spec, x)
    return tuple(
        _eval_terms(partial_derivative_terms(spec, i), x) for i in range(spec.nvars)
    )


def is_singular_at(spec: HypersurfaceSpec, P: ProjPoint) -> bool:
    """True iff every partial derivative of F vanishes at P (P must lie on X)."""
    if evaluate_form(spec, P) != 0:
        raise NotOnSurface(f"{P} does not lie on the hypersurface")
    return not any(gradient(spec, P))


def evaluate_array(spec: HypersurfaceSpec, coords: np.ndarray, bound: int | None = None):
    """Evaluate F on each row of an integer array, exactly.

    Uses int64 when the height bound guarantees no overflow, Python integers
    (object dtype) otherwise.
    """
    coords = np.asarray(coords)
    if coords.ndim != 2 or coords.shape[1] != spec.nvars:
        raise DimensionMismatch(f"expected rows of length {spec.nvars}")
    if bound is None:
        bound = int(np.abs(coords).max()) if coords.size else 0
    if coords.dtype != object and spec.int64_safe(bound):
        x = coords.astype(np.int64, copy=False)
        total = np.zeros(len(x), dtype=np.int64)
        for e, c in spec.terms:
            v = np.full(len(x), c, dtype=np.int64)
            for i, k in enumerate(e):
                if k:
                    v *= x[:, i] ** k
            total += v
        return total
    x = coords.astype(object)
    total = np.zeros(len(x), dtype=object)
    for e, c in spec.terms:
        v = np.full(len(x), c, dtype=object)
        for i, k in enumerate(e):
            if k:
                v = v * x[:, i] ** k
        total = total + v
    return total


def symmetry_images(spec: HypersurfaceSpec, P: ProjPoint) -> list[ProjPoint]:
    """Images of P under the signed coordinate permutations that preserve F.

    Only maps sending F to +F or -F are used, so every image lies on X
    whenever P does.
    """
    out = set()
    for perm, signs in _signed_symmetries(spec):
        y = [0] * spec.nvars
        for i, j in enumerate(perm):
            y[j] = signs[j] * P.coords[i]
        out.add(normalize(y))
    return sorted(out)


def _signed_symmetries(spec: HypersurfaceSpec):
    n1 = spec.nvars
    base = dict(spec.terms)
    found = []
    for perm in itertools.permutations(range(n1)):
        for signs in itertools.product((1, -1), repeat=n1):
            mapped = {}
            # F(y) with y[perm[i]] = signs[perm[i]] * x[i]
            for e, c in spec.terms:
                e2 = tuple(e[perm[i]] for i in range(n1))
                s = 1
                for j in range(n1):
                    if e[j] % 2 and signs[j] < 0:
                        s = -s
                mapped[e2] = c * s
            if mapped == base or mapped == {e: -c for e, c in base.items()}:
                found.append((perm, signs))
    return found
