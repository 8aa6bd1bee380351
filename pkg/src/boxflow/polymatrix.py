"""Square matrices over the ring of generalized polynomials.

The asymptotic pipeline works with matrices that are declared unimodular
(symbolic determinant identically 1), so the inverse is the adjugate and
stays polynomial; general algebraic-group inverses are rational functions
and out of scope.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DeterminantError, DimensionError
from .polyalg import NEG_INF, GenPoly, parse_poly


class PolyMatrix:
    """Immutable N x N matrix of :class:`GenPoly` entries."""

    __slots__ = ("dim", "entries")

    def __init__(self, rows: Sequence[Sequence]):
        n = len(rows)
        entries = []
        for row in rows:
            if len(row) != n:
                raise DimensionError("matrix rows must all have length N")
            entries.append(tuple(GenPoly._coerce(e) for e in row))
        object.__setattr__(self, "dim", n)
        object.__setattr__(self, "entries", tuple(entries))

    def __setattr__(self, name, value):
        raise AttributeError("PolyMatrix is immutable")

    def __reduce__(self):
        return (PolyMatrix, ([list(row) for row in self.entries],))

    # -- constructors ----------------------------------------------------

    @classmethod
    def identity(cls, n: int) -> "PolyMatrix":
        return cls([[1 if i == j else 0 for j in range(n)] for i in range(n)])

    @classmethod
    def zero(cls, n: int) -> "PolyMatrix":
        return cls([[0] * n for _ in range(n)])

    @classmethod
    def from_text(cls, rows: Sequence[Sequence[str]]) -> "PolyMatrix":
        return cls([[parse_poly(e) for e in row] for row in rows])

    def to_text(self):
        return [[e.to_text() for e in row] for row in self.entries]

    # -- protocol ----------------------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolyMatrix):
            return NotImplemented
        return self.dim == other.dim and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(self.entries)

    def __str__(self) -> str:
        rows = ", ".join(
            "[" + ", ".join(e.to_text() for e in row) + "]" for row in self.entries
        )
        return f"[{rows}]"

    __repr__ = __str__

    def is_zero(self) -> bool:
        return all(e.is_zero() for row in self.entries for e in row)

    # -- arithmetic ----------------------------------------------------------

    def _require_same_dim(self, other: "PolyMatrix") -> None:
        if self.dim != other.dim:
            raise DimensionError(
                f"dimension mismatch: {self.dim} vs {other.dim}"
            )

    def __add__(self, other: "PolyMatrix") -> "PolyMatrix":
        self._require_same_dim(other)
        return PolyMatrix(
            [
                [a + b for a, b in zip(r1, r2)]
                for r1, r2 in zip(self.entries, other.entries)
            ]
        )

    def __sub__(self, other: "PolyMatrix") -> "PolyMatrix":
        self._require_same_dim(other)
        return PolyMatrix(
            [
                [a - b for a, b in zip(r1, r2)]
                for r1, r2 in zip(self.entries, other.entries)
            ]
        )

    def __matmul__(self, other: "PolyMatrix") -> "PolyMatrix":
        """Exact matrix product in canonical form."""
        self._require_same_dim(other)
        n = self.dim
        rows = []
        for i in range(n):
            row = []
            for j in range(n):
                acc = GenPoly.zero()
                for k in range(n):
                    acc = acc + self.entries[i][k] * other.entries[k][j]
                row.append(acc)
            rows.append(row)
        return PolyMatrix(rows)

    def scale(self, factor) -> "PolyMatrix":
        f = GenPoly._coerce(factor)
        return self.map_entries(lambda e: e * f)

    def map_entries(self, fn: Callable[[GenPoly], GenPoly]) -> "PolyMatrix":
        return PolyMatrix([[fn(e) for e in row] for row in self.entries])

    # -- calculus / composition ------------------------------------------------

    def differentiate(self, var: str, order: int = 1) -> "PolyMatrix":
        return self.map_entries(lambda e: e.differentiate(var, order))

    def substitute(self, bindings: Mapping[str, object]) -> "PolyMatrix":
        return self.map_entries(lambda e: e.substitute(bindings))

    def degree_in(self, var: str):
        """Max degree over all entries; NEG_INF for the zero matrix."""
        best = NEG_INF
        for row in self.entries:
            for e in row:
                d = e.degree_in(var)
                if d is not NEG_INF and (best is NEG_INF or d > best):
                    best = d
        return best

    def variables(self) -> tuple:
        seen = set()
        for row in self.entries:
            for e in row:
                seen.update(e.variables())
        from .polyalg import _var_key

        return tuple(sorted(seen, key=_var_key))

    # -- determinant and unimodular inverse -------------------------------------

    def determinant(self) -> GenPoly:
        n = self.dim
        if n == 1:
            return self.entries[0][0]
        if n == 2:
            (a, b), (c, d) = self.entries
            return a * d - b * c
        det = GenPoly.zero()
        sign = 1
        for j in range(n):
            minor = self._minor(0, j)
            det = det + Fraction(sign) * self.entries[0][j] * minor.determinant()
            sign = -sign
        return det

    def _minor(self, i: int, j: int) -> "PolyMatrix":
        rows = [
            [e for jj, e in enumerate(row) if jj != j]
            for ii, row in enumerate(self.entries)
            if ii != i
        ]
        return PolyMatrix(rows)

    def adjugate(self) -> "PolyMatrix":
        n = self.dim
        if n == 1:
            return PolyMatrix([[1]])
        cof = []
        for i in range(n):
            row = []
            for j in range(n):
                sign = Fraction(-1) ** (i + j)
                row.append(sign * self._minor(i, j).determinant())
            cof.append(row)
        # transpose of the cofactor matrix
        return PolyMatrix([[cof[j][i] for j in range(n)] for i in range(n)])

    def inverse_sl(self) -> "PolyMatrix":
        """Inverse of a matrix with symbolic determinant 1 (the adjugate).

        Raises :class:`DeterminantError` carrying the symbolic determinant
        otherwise.
        """
        det = self.determinant()
        if det != GenPoly.const(1):
            raise DeterminantError(det.to_text())
        return self.adjugate()

    # -- evaluation ---------------------------------------------------------------

    def evaluate(self, point: Mapping[str, object]) -> np.ndarray:
        return np.array(
            [[e.evaluate(point) for e in row] for row in self.entries], dtype=float
        )

    def evaluate_exact(self, point: Mapping[str, object]):
        return [
            [e.evaluate_exact(point) for e in row] for row in self.entries
        ]

    def evaluate_mp(self, point: Mapping[str, object]):
        import mpmath

        return mpmath.matrix(
            [[e.evaluate_mp(point) for e in row] for row in self.entries]
        )
