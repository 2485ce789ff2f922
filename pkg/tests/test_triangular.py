import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from boundarylab.triangular import (
    MAX_DIMENSION,
    ShapeError,
    SubspaceBasis,
    TriMatrix,
    appendix_identity_check,
    det_bareiss,
    det_laplace,
    inverse,
    matmul,
    minor,
    multiply,
    split_ud,
    subsets_containing_last,
    wedge_rep,
)

from oracles import det_leibniz, wedge_matrix_leibniz

small = st.builds(Fraction, st.integers(-9, 9), st.integers(1, 9))
small_nonzero = small.filter(bool)


@st.composite
def tri(draw, d=None):
    d = d or draw(st.integers(1, 5))
    return TriMatrix(
        [[draw(small_nonzero) if i == j else (draw(small) if j > i else 0) for j in range(d)] for i in range(d)]
    )


def rand_tri(rng, d):
    q = lambda: Fraction(rng.randint(-9, 9), rng.randint(1, 9))
    nz = lambda: Fraction(rng.choice([-1, 1]) * rng.randint(1, 9), rng.randint(1, 9))
    return TriMatrix([[nz() if i == j else (q() if j > i else 0) for j in range(d)] for i in range(d)])


def test_multiply_inverse_examples():
    g = TriMatrix([["1/2", 1], [0, 1]])
    assert multiply(g, g) == TriMatrix([["1/4", "3/2"], [0, 1]])
    assert inverse(TriMatrix([[2, 1], [0, 3]])) == TriMatrix([["1/2", "-1/6"], [0, "1/3"]])
    assert inverse(TriMatrix.diag([2, 5, "1/3"])) == TriMatrix.diag(["1/2", "1/5", 3])
    assert inverse(TriMatrix.identity(3)) == TriMatrix.identity(3)


def test_split_and_minor_examples():
    s = split_ud(TriMatrix([[2, "1/3"], [0, 3]]))
    assert s.unipotent.entry(1, 2) == Fraction(1, 9) and s.diagonal == (2, 3)
    assert split_ud(TriMatrix.diag([2, 3])).unipotent == TriMatrix.identity(2)
    a = TriMatrix([[1, 2, 3], [0, 4, 5], [0, 0, 6]])
    assert minor(a, 2) == TriMatrix([[1, 2], [0, 4]])
    assert minor(a, 3) == a and minor(a, 1) == TriMatrix([[1]])


def test_shape_validation():
    with pytest.raises(ShapeError, match="diagonal"):
        TriMatrix([[0, 1], [0, 1]])
    with pytest.raises(ShapeError, match="below"):
        TriMatrix([[1, 0], [1, 1]])
    with pytest.raises(ShapeError):
        TriMatrix([[1, 2]])
    with pytest.raises(ShapeError):
        TriMatrix.identity(MAX_DIMENSION + 1)


def test_json_round_trip_and_key():
    a = TriMatrix([["-3/4", 2], [0, "5/6"]])
    assert a.to_json() == [["-3/4", "2"], ["0", "5/6"]]
    assert TriMatrix.from_json(a.to_json()) == a
    assert TriMatrix([["-6/8", 2], [0, "10/12"]]).key() == a.key()


def test_wedge_examples():
    basis = SubspaceBasis(3, (1, 3))
    assert basis.elements == ((1, 2), (1, 3))
    assert basis.label(2) == "e1^e3"
    w = wedge_rep(TriMatrix([[1, 1, 0], [0, 1, 1], [0, 0, 1]]), basis)
    assert w.matrix == ((1, 1), (0, 1))
    assert w.to_csv_rows()[0] == ["", "e1^e2", "e1^e3"]
    # identity and diagonal
    b = SubspaceBasis(4, (2, 4))
    wid = wedge_rep(TriMatrix.identity(4), b)
    assert all(wid.entry(k, l) == (k == l) for k in range(1, b.m + 1) for l in range(1, b.m + 1))
    delta = [2, 3, 5, 7]
    wd = wedge_rep(TriMatrix.diag(delta), b)
    for k, t in enumerate(b.elements, start=1):
        assert wd.entry(k, k) == Fraction(delta[t[0] - 1] * delta[t[1] - 1])


def test_basis_requires_last_index():
    with pytest.raises(ShapeError):
        SubspaceBasis(3, (1, 2))


def test_normalized_bottom_right_is_one():
    rng = random.Random(5)
    for d in range(2, 6):
        for J in subsets_containing_last(d):
            a = rand_tri(rng, d)
            w = wedge_rep(a, SubspaceBasis(d, J))
            assert w.normalized()[-1][-1] == 1


def test_normalized_diagonal_is_subset_ratio():
    rng = random.Random(6)
    for d in range(2, 5):
        a = rand_tri(rng, d)
        for J in subsets_containing_last(d):
            basis = SubspaceBasis(d, J)
            den = 1
            for j in J:
                den *= a.entry(j, j)
            num = {}
            for K in itertools.combinations(range(1, d + 1), len(J)):
                v = Fraction(1)
                for j in K:
                    v *= a.entry(j, j)
                num[K] = v / den
            nd = wedge_rep(a, basis).normalized()
            for k, t in enumerate(basis.elements):
                assert nd[k][k] == num[t]


def test_appendix_identity_examples():
    a = TriMatrix([[3, 7], [0, 2]])
    assert appendix_identity_check(a, (2,), 1)
    assert appendix_identity_check(TriMatrix.identity(4), (2, 4), 3)
    with pytest.raises(ValueError):
        appendix_identity_check(a, (1, 2), 1)


def test_appendix_identity_random_all_valid_instances():
    rng = random.Random(11)
    count = 0
    for _ in range(120):
        d = rng.randint(2, 5)
        a = rand_tri(rng, d)
        J = rng.choice(subsets_containing_last(d))
        for l in range(1, d):
            if l not in J:
                assert appendix_identity_check(a, J, l)
                count += 1
    assert count > 100


def test_bareiss_laplace_leibniz_agree():
    rng = random.Random(3)
    for n in range(1, 6):
        for _ in range(20):
            m = [[Fraction(rng.randint(-5, 5), rng.randint(1, 4)) for _ in range(n)] for _ in range(n)]
            ref = det_leibniz(m)
            assert det_bareiss(m) == ref == det_laplace(m)
    # a leading zero pivot needs a row swap
    assert det_bareiss([[0, 1], [1, 0]]) == -1
    assert det_bareiss([[0, 0], [0, 1]]) == 0


def test_wedge_matches_leibniz_expansion():
    rng = random.Random(9)
    for d in range(2, 5):
        a = rand_tri(rng, d)
        for J in subsets_containing_last(d):
            basis = SubspaceBasis(d, J)
            ref = wedge_matrix_leibniz(a.rows, basis.elements)
            assert [list(r) for r in wedge_rep(a, basis).matrix] == ref


@settings(max_examples=60)
@given(st.data())
def test_wedge_functorial(data):
    d = data.draw(st.integers(2, 5))
    a, b = data.draw(tri(d)), data.draw(tri(d))
    J = data.draw(st.sampled_from(subsets_containing_last(d)))
    basis = SubspaceBasis(d, J)
    lhs = wedge_rep(multiply(a, b), basis).matrix
    rhs = matmul(wedge_rep(a, basis).matrix, wedge_rep(b, basis).matrix)
    assert lhs == rhs


@given(tri())
def test_split_round_trip_and_inverse(a):
    s = split_ud(a)
    assert s.unipotent.is_unipotent()
    assert s.recompose() == a
    d = a.dim
    assert multiply(a, inverse(a)) == TriMatrix.identity(d) == multiply(inverse(a), a)


@given(tri(3), tri(3), tri(3))
def test_multiply_associative(a, b, c):
    assert multiply(multiply(a, b), c) == multiply(a, multiply(b, c))
