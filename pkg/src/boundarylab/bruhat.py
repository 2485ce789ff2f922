"""Weyl permutations selected by drifts, U = U^w U_w, and the action on a cell."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cmp_to_key
from typing import Any, Sequence

from .rational import LogCombination, Place
from .triangular import TriMatrix, inverse, multiply, split_ud
from .walk import DriftProfile


@dataclass(frozen=True)
class WeylPerm:
    """A permutation w of {1..d} in one-line notation: ``perm[i-1] = w(i)``."""

    perm: tuple[int, ...]

    def __post_init__(self) -> None:
        if sorted(self.perm) != list(range(1, len(self.perm) + 1)):
            raise ValueError(f"{self.perm} is not a permutation of 1..{len(self.perm)}")

    @property
    def dim(self) -> int:
        return len(self.perm)

    def __call__(self, i: int) -> int:
        return self.perm[i - 1]

    @classmethod
    def identity(cls, d: int) -> WeylPerm:
        return cls(tuple(range(1, d + 1)))

    @classmethod
    def longest(cls, d: int) -> WeylPerm:
        return cls(tuple(range(d, 0, -1)))

    def free_positions(self) -> frozenset[tuple[int, int]]:
        """(i, j) with i < j and w(i) < w(j): the coordinates of U^w."""
        d = self.dim
        return frozenset(
            (i, j) for i in range(1, d + 1) for j in range(i + 1, d + 1) if self(i) < self(j)
        )


def weyl_from_phi(phi: Sequence[LogCombination]) -> WeylPerm:
    """w(i) = rank of i when indices are sorted ascending by (phi(i), -i).

    This is the unique w with w(i) > w(j) whenever i < j and phi(i) >= phi(j)
    (and, by completion, w(i) < w(j) when phi(i) < phi(j)).
    """
    d = len(phi)

    def cmp(i: int, j: int) -> int:
        s = phi[i - 1].compare(phi[j - 1])
        if s:
            return s
        return (j > i) - (j < i)  # key -i

    order = sorted(range(1, d + 1), key=cmp_to_key(cmp))
    w = [0] * d
    for rank, i in enumerate(order, start=1):
        w[i - 1] = rank
    return WeylPerm(tuple(w))


def weyl_from_drifts(profile: DriftProfile, place: Place) -> WeylPerm:
    return weyl_from_phi(profile.phi(place))


@dataclass(frozen=True)
class CellDescriptor:
    place: Place
    weyl: WeylPerm

    @property
    def free(self) -> frozenset[tuple[int, int]]:
        return self.weyl.free_positions()

    @property
    def dim(self) -> int:
        return self.weyl.dim

    def is_point(self) -> bool:
        return not self.free

    def contains(self, u: TriMatrix) -> bool:
        if not u.is_unipotent():
            return False
        free = self.free
        return all(
            u.entry(i, j) == 0
            for i in range(1, self.dim + 1)
            for j in range(i + 1, self.dim + 1)
            if (i, j) not in free
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "place": str(self.place),
            "weyl": list(self.weyl.perm),
            "free": [list(x) for x in sorted(self.free)],
        }


def cell_of(profile: DriftProfile, place: Place) -> CellDescriptor:
    return CellDescriptor(place, weyl_from_drifts(profile, place))


def factorize_u(u: TriMatrix, w: WeylPerm) -> tuple[TriMatrix, TriMatrix]:
    """Unique u = u_free * u_fixed with u_free in U^w, u_fixed in U_w.

    Solved along superdiagonals: u_ij = F_ij + X_ij + sum_{i<k<j} F_ik X_kj,
    where exactly one of F_ij, X_ij may be nonzero.
    """
    if not u.is_unipotent():
        raise ValueError("factorize_u needs a unipotent matrix")
    d = u.dim
    free = w.free_positions()
    F = [[Fraction(int(i == j)) for j in range(d)] for i in range(d)]
    X = [[Fraction(int(i == j)) for j in range(d)] for i in range(d)]
    for gap in range(1, d):
        for i in range(d - gap):
            j = i + gap
            s = u.rows[i][j] - sum((F[i][k] * X[k][j] for k in range(i + 1, j)), Fraction(0))
            if (i + 1, j + 1) in free:
                F[i][j] = s
            else:
                X[i][j] = s
    return TriMatrix._trusted(tuple(map(tuple, F))), TriMatrix._trusted(tuple(map(tuple, X)))


def boundary_action(a: TriMatrix, b: TriMatrix, w: WeylPerm) -> TriMatrix:
    """a . b = U^w-component of a b delta^{-1}, where a = u delta."""
    free = w.free_positions()
    if not b.is_unipotent() or any(
        b.entry(i, j) != 0 for i in range(1, b.dim + 1) for j in range(i + 1, b.dim + 1) if (i, j) not in free
    ):
        raise ValueError("b is not a point of the cell U^w")
    delta = split_ud(a).diagonal
    v = multiply(multiply(a, b), inverse(TriMatrix.diag(delta)))
    return factorize_u(v, w)[0]
