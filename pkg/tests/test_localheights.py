import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from heightlab.arith import ARCHIMEDEAN, Place, ProjPoint, normalize
from heightlab.errors import DimensionMismatch, OnDivisor
from heightlab.forms import hyperplane
from heightlab.invariants import check_liouville, check_local_decomposition, check_ultrametric, default_test_divisors
from heightlab.localheights import (
    DIAGONAL,
    heights_of,
    local_height_hypersurface,
    log_array,
    neg_log_distance,
    pair_indices,
    points_array,
    proj_distance,
    proximity,
    write_distance_csv,
)
from heightlab.search import enumerate_points

PLACES = [ARCHIMEDEAN, Place(2), Place(3), Place(5)]
points4 = st.lists(st.integers(-10**6, 10**6), min_size=4, max_size=4).filter(any).map(normalize)


def test_distance_examples():
    A, B = ProjPoint((1, 0, 1, 0)), ProjPoint((0, 1, 0, 1))
    for v in PLACES:
        assert proj_distance(A, A, v).exact == 0
        assert proj_distance(A, A, v).is_zero
    assert proj_distance(A, B, ARCHIMEDEAN).exact == 1
    assert proj_distance(A, ProjPoint((1, 5, 1, 0)), Place(5)).exact == Fraction(1, 5)


def test_distance_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        proj_distance(ProjPoint((1, 0, 0)), ProjPoint((1, 0, 0, 0)), ARCHIMEDEAN)


@given(points4, points4, st.sampled_from(PLACES))
def test_distance_symmetric_and_separating(P, Q, v):
    d1, d2 = proj_distance(P, Q, v), proj_distance(Q, P, v)
    assert d1 == d2
    assert (d1.exact == 0) == (P == Q)
    # sup-norm minors: |xy' - x'y| <= 2 H H' at infinity, ultrametric at p
    assert 0 <= d1.exact <= (2 if v.is_archimedean else 1)
    if P != Q:
        assert d1.log_negated == pytest.approx(-math.log(d1.exact), abs=1e-9)


def test_local_height_examples():
    x0 = hyperplane([1, 0])
    assert local_height_hypersurface(x0, ProjPoint((1, 1)), ARCHIMEDEAN) == 0
    assert local_height_hypersurface(x0, ProjPoint((2, 1)), Place(2)) == pytest.approx(math.log(2))
    assert local_height_hypersurface(x0, ProjPoint((2, 1)), ARCHIMEDEAN) == pytest.approx(0, abs=1e-15)
    with pytest.raises(OnDivisor):
        local_height_hypersurface(x0, ProjPoint((0, 1)), ARCHIMEDEAN)


def test_proximity_examples():
    A, B = ProjPoint((1, 0, 1, 0)), ProjPoint((0, 1, 0, 1))
    assert proximity(DIAGONAL, (A, B), [ARCHIMEDEAN]) == 0
    assert proximity(DIAGONAL, (A, ProjPoint((1, 5, 1, 0))), [Place(5)]) == pytest.approx(math.log(5))
    assert proximity(hyperplane([1, 2, 3, 4]), A, []) == 0
    assert proximity(DIAGONAL, (A, B), []) == 0
    with pytest.raises(OnDivisor):
        proximity(DIAGONAL, (A, A), [ARCHIMEDEAN])


def test_ultrametric_exhaustive_at_height_5(quartic):
    res = check_ultrametric(enumerate_points(quartic, 5), [2, 3, 5])
    assert res.passed, res.detail


def test_ultrametric_oracle_on_small_set():
    pts = [normalize(x) for x in ([1, 2, 3], [4, 2, 6], [1, 0, 8], [3, 3, 1], [9, 1, 2], [1, 4, 16])]
    for v in (Place(2), Place(3)):
        for a in pts:
            for b in pts:
                for c in pts:
                    if len({a, b, c}) == 3:
                        assert proj_distance(a, c, v).exact <= max(
                            proj_distance(a, b, v).exact, proj_distance(b, c, v).exact
                        )


def test_liouville_on_all_pairs(quartic_points_20):
    for res in check_liouville(quartic_points_20, [2, 3, 5, 7]):
        assert res.passed, res.detail


def test_decomposition_on_surface_points(quartic_points_20):
    res = check_local_decomposition(quartic_points_20, default_test_divisors(4))
    assert res.passed, res.detail


@given(points4, st.lists(st.integers(-9, 9), min_size=4, max_size=4).filter(any))
def test_decomposition_property(P, coeffs):
    D = hyperplane(normalize(coeffs).coords)
    res = check_local_decomposition([P], [D])
    assert res.passed or res.detail["evaluations"] == 0


def test_vectorized_kernel_matches_scalar(quartic_points_20):
    pts = quartic_points_20[::37]
    arr = points_array(pts)
    lh = log_array(heights_of(arr))
    for v in PLACES:
        for I, J in pair_indices(len(pts), target=500):
            neg, num, den = neg_log_distance(arr, lh, I, J, v)
            for k in range(0, len(I), 7):
                d = proj_distance(pts[I[k]], pts[J[k]], v)
                assert Fraction(int(num[k]), int(den[k])) == d.exact
                assert neg[k] == pytest.approx(d.log_negated, abs=1e-12)


def test_pair_indices_cover_upper_triangle():
    seen = [(int(i), int(j)) for I, J in pair_indices(23, target=17) for i, j in zip(I, J)]
    assert seen == [(i, j) for i in range(23) for j in range(i + 1, 23)]


def test_big_coordinates_use_exact_path():
    P = normalize([2**40 + 1, 3, 0])
    Q = normalize([2**40, 3, 1])
    arr = points_array([P, Q])
    assert arr.dtype == object
    lh = log_array(heights_of(arr))
    neg, num, den = neg_log_distance(arr, lh, np.array([0]), np.array([1]), ARCHIMEDEAN)
    assert Fraction(int(num[0]), int(den[0])) == proj_distance(P, Q, ARCHIMEDEAN).exact


def test_distance_csv():
    pts = [ProjPoint((1, 0, 1, 0)), ProjPoint((1, 5, 1, 0))]
    buf = io.StringIO()
    write_distance_csv(buf, pts, Place(5), [(0, 1)])
    rows = buf.getvalue().splitlines()
    assert rows[0] == "i,j,place,dist_num,dist_den,neg_log_dist"
    assert rows[1].startswith("0,1,5,1,5,1.6094379124341")
