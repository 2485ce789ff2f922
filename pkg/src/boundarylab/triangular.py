"""The group A(Q) of invertible upper-triangular rational matrices.

Index conventions: everything mathematical is 1-based (``entry(i, j)``,
index sets ``J``, wedge tuples ``(i_1, ..., i_r)``), matching the usual
notation; ``rows`` is the raw 0-based storage.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

from .rational import RationalLike, as_rational, format_rational

# desk-scale cap on d; wedge dimension is at most C(8, 4) = 70
MAX_DIMENSION = 8

Matrix = tuple[tuple[Fraction, ...], ...]


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class TriMatrix:
    rows: Matrix

    def __init__(self, rows: Iterable[Iterable[RationalLike]]) -> None:
        m = tuple(tuple(as_rational(x) for x in row) for row in rows)
        d = len(m)
        if d < 1 or d > MAX_DIMENSION:
            raise ShapeError(f"dimension {d} outside 1..{MAX_DIMENSION}")
        for i, row in enumerate(m):
            if len(row) != d:
                raise ShapeError("matrix is not square")
            if row[i] == 0:
                raise ShapeError(f"zero diagonal entry at ({i + 1},{i + 1})")
            if any(row[j] != 0 for j in range(i)):
                raise ShapeError(f"nonzero entry below the diagonal in row {i + 1}")
        object.__setattr__(self, "rows", m)

    @classmethod
    def _trusted(cls, rows: Matrix) -> TriMatrix:
        obj = object.__new__(cls)
        object.__setattr__(obj, "rows", rows)
        return obj

    @classmethod
    def identity(cls, d: int) -> TriMatrix:
        return cls.diag([1] * d)

    @classmethod
    def diag(cls, values: Sequence[RationalLike]) -> TriMatrix:
        d = len(values)
        return cls([[values[i] if i == j else 0 for j in range(d)] for i in range(d)])

    @property
    def dim(self) -> int:
        return len(self.rows)

    def entry(self, i: int, j: int) -> Fraction:
        return self.rows[i - 1][j - 1]

    def diagonal(self) -> tuple[Fraction, ...]:
        return tuple(self.rows[i][i] for i in range(self.dim))

    def is_unipotent(self) -> bool:
        return all(x == 1 for x in self.diagonal())

    def __matmul__(self, other: TriMatrix) -> TriMatrix:
        return multiply(self, other)

    def to_json(self) -> list[list[str]]:
        return [[format_rational(x) for x in row] for row in self.rows]

    @classmethod
    def from_json(cls, data: Sequence[Sequence[str | int]]) -> TriMatrix:
        return cls(data)

    def key(self) -> str:
        """Canonical string key; equal matrices give equal keys."""
        return ";".join(",".join(format_rational(x) for x in row) for row in self.rows)

    def __repr__(self) -> str:
        return f"TriMatrix({self.to_json()})"

    def __hash__(self) -> int:
        # cached: Fraction hashing dominates dict-heavy convolutions
        try:
            return self.__dict__["_hash"]
        except KeyError:
            h = hash(self.rows)
            object.__setattr__(self, "_hash", h)
            return h


def multiply(a: TriMatrix, b: TriMatrix) -> TriMatrix:
    d = a.dim
    if b.dim != d:
        raise ShapeError(f"dimension mismatch: {d} vs {b.dim}")
    A, B = a.rows, b.rows
    zero = Fraction(0)
    out = []
    for i in range(d):
        Ai = A[i]
        row = [zero] * d
        for j in range(i, d):
            s = zero
            for k in range(i, j + 1):
                x = Ai[k]
                if x:
                    y = B[k][j]
                    if y:
                        s += x * y
            row[j] = s
        out.append(tuple(row))
    return TriMatrix._trusted(tuple(out))


def inverse(a: TriMatrix) -> TriMatrix:
    """Back substitution; the diagonal of the inverse is the reciprocal diagonal."""
    d = a.dim
    A = a.rows
    inv = [[Fraction(0)] * d for _ in range(d)]
    for j in range(d):
        inv[j][j] = 1 / A[j][j]
        for i in range(j - 1, -1, -1):
            s = sum((A[i][k] * inv[k][j] for k in range(i + 1, j + 1) if A[i][k]), Fraction(0))
            inv[i][j] = -s / A[i][i]
    return TriMatrix._trusted(tuple(tuple(r) for r in inv))


@dataclass(frozen=True)
class UnipotentDiagonalSplit:
    unipotent: TriMatrix
    diagonal: tuple[Fraction, ...]

    def recompose(self) -> TriMatrix:
        return self.unipotent @ TriMatrix.diag(self.diagonal)


def split_ud(a: TriMatrix) -> UnipotentDiagonalSplit:
    """a = u * delta with u unipotent: u_ij = a_ij / a_jj."""
    d = a.dim
    diag = a.diagonal()
    rows = tuple(
        tuple(a.rows[i][j] / diag[j] if j >= i else Fraction(0) for j in range(d))
        for i in range(d)
    )
    return UnipotentDiagonalSplit(TriMatrix._trusted(rows), diag)


def minor(a: TriMatrix, size: int) -> TriMatrix:
    """Top-left ``size`` x ``size`` block."""
    if not 1 <= size <= a.dim:
        raise ShapeError(f"minor size {size} outside 1..{a.dim}")
    return TriMatrix._trusted(tuple(row[:size] for row in a.rows[:size]))


# --- determinants -----------------------------------------------------------

def det_bareiss(m: Sequence[Sequence[Fraction]]) -> Fraction:
    """Fraction-free (Bareiss) elimination with row pivoting.

    Rational input is cleared to integers row by row first, so every
    division in the elimination is exact integer division.
    """
    n = len(m)
    if n == 0:
        return Fraction(1)
    scale = Fraction(1)
    rows: list[list[int]] = []
    for row in m:
        den = 1
        for x in row:
            x = Fraction(x)
            den = math.lcm(den, x.denominator)
        rows.append([int(Fraction(x) * den) for x in row])
        scale /= den
    sign = 1
    prev = 1
    for k in range(n - 1):
        if rows[k][k] == 0:
            for r in range(k + 1, n):
                if rows[r][k] != 0:
                    rows[k], rows[r] = rows[r], rows[k]
                    sign = -sign
                    break
            else:
                return Fraction(0)
        pivot = rows[k][k]
        for i in range(k + 1, n):
            ri, rk = rows[i], rows[k]
            for j in range(k + 1, n):
                ri[j] = (ri[j] * pivot - ri[k] * rk[j]) // prev
            ri[k] = 0
        prev = pivot
    return sign * rows[n - 1][n - 1] * scale


def det_laplace(m: Sequence[Sequence[Fraction]]) -> Fraction:
    """Naive cofactor expansion along the first row (test oracle, small n)."""
    n = len(m)
    if n == 0:
        return Fraction(1)
    if n == 1:
        return Fraction(m[0][0])
    total = Fraction(0)
    for j in range(n):
        if m[0][j] == 0:
            continue
        sub = [row[:j] + row[j + 1 :] for row in m[1:]]
        total += (-1) ** j * Fraction(m[0][j]) * det_laplace(sub)
    return total


def submatrix(a: TriMatrix, rows: Sequence[int], cols: Sequence[int]) -> list[list[Fraction]]:
    return [[a.entry(i, j) for j in cols] for i in rows]


# --- exterior powers --------------------------------------------------------

@dataclass(frozen=True)
class SubspaceBasis:
    """Lexicographically ordered wedge tuples (i_1 < ... < i_r) with i_s <= j_s."""

    dimension: int
    J: tuple[int, ...]
    elements: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self) -> None:
        J = tuple(sorted(self.J))
        if not J or J[-1] != self.dimension or len(set(J)) != len(J) or J[0] < 1:
            raise ShapeError(f"J={self.J} must be a set in 1..{self.dimension} containing {self.dimension}")
        object.__setattr__(self, "J", J)
        elems = [
            t
            for t in itertools.combinations(range(1, self.dimension + 1), len(J))
            if all(t[s] <= J[s] for s in range(len(J)))
        ]
        object.__setattr__(self, "elements", tuple(elems))

    @property
    def r(self) -> int:
        return len(self.J)

    @property
    def m(self) -> int:
        return len(self.elements)

    @cached_property
    def index(self) -> dict[tuple[int, ...], int]:
        """1-based position of each tuple."""
        return {t: k + 1 for k, t in enumerate(self.elements)}

    def label(self, k: int) -> str:
        return "^".join(f"e{i}" for i in self.elements[k - 1])


@dataclass(frozen=True)
class WedgeRep:
    source: TriMatrix
    basis: SubspaceBasis
    matrix: tuple[tuple[Fraction, ...], ...]

    def entry(self, k: int, l: int) -> Fraction:
        return self.matrix[k - 1][l - 1]

    def normalized(self) -> tuple[tuple[Fraction, ...], ...]:
        """a' = a^(r) / prod_{j in J} a_jj; its bottom-right entry is 1."""
        c = Fraction(1)
        for j in self.basis.J:
            c *= self.source.entry(j, j)
        return tuple(tuple(x / c for x in row) for row in self.matrix)

    def to_csv_rows(self) -> list[list[str]]:
        header = [""] + [self.basis.label(k + 1) for k in range(self.basis.m)]
        out = [header]
        for k, row in enumerate(self.matrix):
            out.append([self.basis.label(k + 1)] + [format_rational(x) for x in row])
        return out


def wedge_rep(a: TriMatrix, basis: SubspaceBasis) -> WedgeRep:
    """Entry (k, l) = minor of ``a`` on rows tuple_k and columns tuple_l."""
    if basis.dimension != a.dim:
        raise ShapeError("basis and matrix dimensions differ")
    els = basis.elements
    m = len(els)
    zero = Fraction(0)
    mat = []
    for k in range(m):
        row = []
        for l in range(m):
            # upper triangular in lexicographic order
            if l < k or any(els[k][s] > els[l][s] for s in range(basis.r)):
                row.append(zero)
            else:
                row.append(det_bareiss(submatrix(a, els[k], els[l])))
        mat.append(tuple(row))
    return WedgeRep(a, basis, tuple(mat))


def matmul(x: Sequence[Sequence[Fraction]], y: Sequence[Sequence[Fraction]]) -> tuple[tuple[Fraction, ...], ...]:
    """Dense product for square upper-triangular rational arrays."""
    n = len(x)
    zero = Fraction(0)
    out = []
    for i in range(n):
        xi = x[i]
        row = [zero] * n
        for j in range(i, n):
            s = zero
            for k in range(i, j + 1):
                a = xi[k]
                if a:
                    b = y[k][j]
                    if b:
                        s += a * b
            row[j] = s
        out.append(tuple(row))
    return tuple(out)


def appendix_rows(J: Sequence[int], l: int, d: int) -> tuple[int, ...]:
    """I_d^l = {l} u (J minus {d}), sorted."""
    return tuple(sorted({l} | (set(J) - {d})))


def appendix_identity_check(a: TriMatrix, J: Sequence[int], l: int) -> bool:
    """a^(r)_{k,m} == det(a_ij) over I_d^l x J, evaluated along two routes.

    The wedge entry comes from :func:`wedge_rep` (Bareiss); the right-hand
    side is an independent cofactor expansion.
    """
    d = a.dim
    if l in J:
        raise ValueError(f"l={l} must not belong to J={tuple(J)}")
    if not 1 <= l < d:
        raise ValueError(f"l={l} outside 1..{d - 1}")
    basis = SubspaceBasis(d, tuple(J))
    rows = appendix_rows(basis.J, l, d)
    k = basis.index[rows]
    lhs = wedge_rep(a, basis).entry(k, basis.m)
    rhs = det_laplace(submatrix(a, rows, basis.J))
    return lhs == rhs


def subsets_containing_last(d: int) -> list[tuple[int, ...]]:
    """All index sets J in 1..d with d in J."""
    out = []
    for r in range(0, d):
        for c in itertools.combinations(range(1, d), r):
            out.append(c + (d,))
    return out
