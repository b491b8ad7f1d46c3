import pytest

from heightlab.arith import normalize
from heightlab.curves import ExclusionPredicate, RationalLine
from heightlab.forms import bundled_form, diagonal_quartic
from heightlab.search import enumerate_points


def P(*xs):
    return normalize(xs)


@pytest.fixture(scope="session")
def quartic():
    return diagonal_quartic()


@pytest.fixture(scope="session")
def quartic_points_20(quartic):
    return enumerate_points(quartic, 20)


@pytest.fixture(scope="session")
def quartic_points_50(quartic):
    return enumerate_points(quartic, 50)


@pytest.fixture(scope="session")
def eight_lines():
    spans = []
    for a in (1, -1):
        for b in (1, -1):
            # {x0 = a x2, x1 = b x3} and {x0 = a x3, x1 = b x2}
            spans.append(((a, 0, 1, 0), (0, b, 0, 1)))
            spans.append(((a, 0, 0, 1), (0, b, 1, 0)))
    return [RationalLine.through(normalize(u), normalize(w)) for u, w in spans]


@pytest.fixture(scope="session")
def line_exclusion(eight_lines):
    return ExclusionPredicate(tuple(eight_lines))


@pytest.fixture(scope="session")
def quartic_points_200(quartic):
    return enumerate_points(quartic, 200)


@pytest.fixture(scope="session")
def off_line_points_200(quartic_points_200, line_exclusion):
    pts = quartic_points_200
    return [Q for Q, out in zip(pts, line_exclusion.mask(pts)) if not out]


@pytest.fixture(scope="session")
def mixed_points(quartic_points_20, off_line_points_200):
    """Everything up to height 20 plus the off-line points up to height 200."""
    return sorted(set(quartic_points_20) | set(off_line_points_200))


@pytest.fixture(scope="session")
def small_forms():
    return [bundled_form(n) for n in ("diagonal_quartic", "twisted_quartic", "cyclic_quartic")]
