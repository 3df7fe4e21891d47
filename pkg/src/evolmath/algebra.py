"""Exact rational linear algebra: rank, unique solve, row-space membership.

Everything here runs on arbitrary-precision rationals (``fractions.Fraction``),
so results are exact and reproducible. No floating point is used anywhere in
this module; problem ground truths depend on it.
"""

from fractions import Fraction
from math import lcm

Rational = Fraction


class InvalidInputError(ValueError):
    """Raised when a matrix/vector argument violates a precondition."""


class SingularSystemError(ValueError):
    """Raised when a square system has no unique solution."""


class RationalMatrix:
    """Dense row-major matrix of exact rationals.

    Dimensions stay tiny in this project (<= ~10 variables), so density is a
    non-issue and the elimination code stays simple.
    """

    __slots__ = ("rows", "cols", "_data")

    def __init__(self, rows: int, cols: int, entries):
        entries = [Fraction(e) for e in entries]
        if len(entries) != rows * cols:
            raise InvalidInputError(
                f"expected {rows * cols} entries for a {rows}x{cols} matrix, got {len(entries)}"
            )
        self.rows = rows
        self.cols = cols
        self._data = entries

    @classmethod
    def from_rows(cls, row_seq) -> "RationalMatrix":
        row_list = [list(r) for r in row_seq]
        if not row_list:
            return cls(0, 0, [])
        cols = len(row_list[0])
        if any(len(r) != cols for r in row_list):
            raise InvalidInputError("ragged rows")
        flat = [e for r in row_list for e in r]
        return cls(len(row_list), cols, flat)

    def entry(self, i: int, j: int) -> Fraction:
        return self._data[i * self.cols + j]

    def row(self, i: int) -> list[Fraction]:
        return self._data[i * self.cols : (i + 1) * self.cols]

    def row_list(self) -> list[list[Fraction]]:
        return [self.row(i) for i in range(self.rows)]

    def transpose(self) -> "RationalMatrix":
        flat = [self.entry(i, j) for j in range(self.cols) for i in range(self.rows)]
        return RationalMatrix(self.cols, self.rows, flat)

    def with_row_appended(self, v) -> "RationalMatrix":
        v = [Fraction(x) for x in v]
        if len(v) != self.cols:
            raise InvalidInputError("appended row has wrong length")
        return RationalMatrix(self.rows + 1, self.cols, self._data + v)

    def __eq__(self, other):
        if not isinstance(other, RationalMatrix):
            return NotImplemented
        return (self.rows, self.cols, self._data) == (other.rows, other.cols, other._data)

    def __repr__(self):
        return f"RationalMatrix({self.rows}x{self.cols}, {self.row_list()!r})"


def _integer_rows(m: RationalMatrix) -> list[list[int]]:
    """Scale each row by the lcm of its denominators. Row scaling preserves rank."""
    out = []
    for i in range(m.rows):
        row = m.row(i)
        scale = lcm(*(f.denominator for f in row)) if row else 1
        out.append([int(f * scale) for f in row])
    return out


def _int_rank(rows: list[list[int]]) -> int:
    """Rank by Bareiss fraction-free elimination over the integers.

    All divisions are exact by construction; an assertion guards against the
    silent corruption an inexact division would cause.
    """
    if not rows:
        return 0
    work = [r[:] for r in rows]
    n_rows, n_cols = len(work), len(work[0])
    rank = 0
    prev = 1
    for col in range(n_cols):
        piv = next((i for i in range(rank, n_rows) if work[i][col] != 0), None)
        if piv is None:
            continue
        work[rank], work[piv] = work[piv], work[rank]
        for i in range(rank + 1, n_rows):
            for j in range(col + 1, n_cols):
                num = work[rank][col] * work[i][j] - work[i][col] * work[rank][j]
                q, rem = divmod(num, prev)
                if rem:
                    raise AssertionError("Bareiss division was not exact")
                work[i][j] = q
            work[i][col] = 0
        prev = work[rank][col]
        rank += 1
        if rank == n_rows:
            break
    return rank


def rank(m: RationalMatrix) -> int:
    """Rank of ``m``, computed exactly."""
    if m.rows == 0 or m.cols == 0:
        raise InvalidInputError("rank of an empty matrix is undefined")
    return _int_rank(_integer_rows(m))


def solve_unique(a: RationalMatrix, b) -> list[Fraction]:
    """Solve a square system a*x = b, requiring a unique solution.

    Plain Gaussian elimination over Fractions; exact at every step.
    """
    if a.rows == 0 or a.rows != a.cols:
        raise InvalidInputError(f"expected a square matrix, got {a.rows}x{a.cols}")
    b = [Fraction(x) for x in b]
    if len(b) != a.rows:
        raise InvalidInputError("right-hand side length does not match matrix")
    n = a.rows
    aug = [a.row(i) + [b[i]] for i in range(n)]
    for col in range(n):
        piv = next((i for i in range(col, n) if aug[i][col] != 0), None)
        if piv is None:
            raise SingularSystemError("coefficient matrix is singular")
        aug[col], aug[piv] = aug[piv], aug[col]
        pivot = aug[col][col]
        for i in range(n):
            if i == col or aug[i][col] == 0:
                continue
            factor = aug[i][col] / pivot
            for j in range(col, n + 1):
                aug[i][j] -= factor * aug[col][j]
    return [aug[i][n] / aug[i][i] for i in range(n)]


def in_row_space(v, m: RationalMatrix) -> bool:
    """True iff ``v`` is a rational linear combination of the rows of ``m``.

    Test: appending v to m leaves the rank unchanged. A zero-row matrix spans
    only the zero vector.
    """
    v = [Fraction(x) for x in v]
    if len(v) != m.cols:
        raise InvalidInputError("vector length does not match matrix columns")
    if m.rows == 0:
        return all(x == 0 for x in v)
    base = _int_rank(_integer_rows(m))
    extended = _int_rank(_integer_rows(m.with_row_appended(v)))
    return base == extended
