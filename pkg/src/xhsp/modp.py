"""Exact arithmetic and small linear algebra over the prime field Z_p.

Residues are canonical representatives in [0, p).  Moduli are capped below
2**31 so products fit in double-width machine arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


class Prime(int):
    """A positive integer verified prime at construction (trial division)."""

    def __new__(cls, p: int) -> "Prime":
        p = int(p)
        if p >= 1 << 31:
            raise ValueError(f"modulus too large: {p} (need p < 2**31)")
        if not _is_prime(p):
            raise ValueError(f"not a prime: {p}")
        return super().__new__(cls, p)


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


def inv(a: int, p: int) -> int:
    """Multiplicative inverse of a modulo the prime p."""
    a %= p
    if a == 0:
        raise ZeroDivisionError(f"non-invertible: 0 has no inverse mod {p}")
    return pow(a, p - 2, p)


def is_quadratic_residue(a: int, p: int) -> bool:
    """Euler's criterion; zero counts as a residue."""
    a %= p
    return a == 0 or pow(a, (p - 1) // 2, p) == 1


def sqrt_mod(a: int, p: int) -> int | None:
    """Square root of a modulo an odd prime, or None if a is a non-residue.

    Returns the smaller of the two roots so results are deterministic;
    callers wanting both roots negate.  Tonelli-Shanks in the general case.
    """
    if p == 2:
        raise ValueError("odd prime required")
    a %= p
    if a == 0:
        return 0
    if pow(a, (p - 1) // 2, p) != 1:
        return None
    if p % 4 == 3:
        r = pow(a, (p + 1) // 4, p)
    else:
        q, s = p - 1, 0
        while q % 2 == 0:
            q //= 2
            s += 1
        z = 2
        while pow(z, (p - 1) // 2, p) != p - 1:
            z += 1
        m, c, t, r = s, pow(z, q, p), pow(a, q, p), pow(a, (q + 1) // 2, p)
        while t != 1:
            t2, i = t, 0
            while t2 != 1:
                t2 = t2 * t2 % p
                i += 1
            b = pow(c, 1 << (m - i - 1), p)
            m, c, t, r = i, b * b % p, t * b * b % p, r * b % p
    return min(r, p - r)


def solve_quadratic(a: int, b: int, c: int, p: int) -> set[int]:
    """All j in [0, p) with a*j**2 + b*j + c == 0 (mod p), p odd.

    Linear solve when a == 0; discriminant plus sqrt_mod otherwise.
    """
    if p == 2:
        raise ValueError("odd prime required")
    a, b, c = a % p, b % p, c % p
    if a == 0:
        if b == 0:
            if c == 0:
                raise ValueError("degenerate equation: all coefficients zero")
            return set()
        return {(-c * inv(b, p)) % p}
    disc = (b * b - 4 * a * c) % p
    r = sqrt_mod(disc, p)
    if r is None:
        return set()
    half = inv(2 * a, p)
    return {((-b + r) * half) % p, ((-b - r) * half) % p}


@dataclass(frozen=True)
class FpMatrix:
    """Dense matrix over Z_p with entries stored row-major, reduced mod p."""

    rows: int
    cols: int
    entries: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.entries) != self.rows * self.cols:
            raise ValueError("entry count does not match rows*cols")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], p: int, cols: int | None = None) -> "FpMatrix":
        rows = [list(r) for r in rows]
        if rows:
            cols = len(rows[0])
            if any(len(r) != cols for r in rows):
                raise ValueError("ragged rows")
        elif cols is None:
            raise ValueError("column count required for an empty matrix")
        flat = tuple(x % p for r in rows for x in r)
        return cls(len(rows), cols, flat)

    def row(self, i: int) -> list[int]:
        return list(self.entries[i * self.cols : (i + 1) * self.cols])


def row_reduce(rows: Sequence[Sequence[int]], p: int) -> tuple[list[list[int]], list[int]]:
    """Reduced row echelon form over Z_p.

    Returns (rref_rows, pivot_columns); zero rows are dropped.
    """
    mat = [[x % p for x in r] for r in rows]
    ncols = len(mat[0]) if mat else 0
    pivots: list[int] = []
    r = 0
    for col in range(ncols):
        pr = next((i for i in range(r, len(mat)) if mat[i][col] != 0), None)
        if pr is None:
            continue
        mat[r], mat[pr] = mat[pr], mat[r]
        scale = inv(mat[r][col], p)
        mat[r] = [x * scale % p for x in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][col] != 0:
                f = mat[i][col]
                mat[i] = [(x - f * y) % p for x, y in zip(mat[i], mat[r])]
        pivots.append(col)
        r += 1
        if r == len(mat):
            break
    return mat[:r], pivots


def rank(rows: Sequence[Sequence[int]], p: int) -> int:
    return len(row_reduce(rows, p)[0])


def kernel_basis(m: FpMatrix | Sequence[Sequence[int]], p: int) -> list[tuple[int, ...]]:
    """Canonical basis of {v : M @ v == 0 (mod p)}.

    One basis vector per free column, pivot entries filled from the reduced
    echelon form, free entry normalized to 1.  Deterministic for identical
    input matrices.
    """
    if isinstance(m, FpMatrix):
        rows = [m.row(i) for i in range(m.rows)]
        ncols = m.cols
    else:
        rows = [list(r) for r in m]
        if not rows:
            raise ValueError("column count unknown; pass an FpMatrix")
        ncols = len(rows[0])
    rref, pivots = row_reduce(rows, p)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        v = [0] * ncols
        v[fc] = 1
        for ri, pc in enumerate(pivots):
            v[pc] = (-rref[ri][fc]) % p
        basis.append(v)
    return [tuple(v) for v in row_reduce(basis, p)[0]]
