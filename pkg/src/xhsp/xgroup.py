"""Exact algebra of extraspecial p-groups in normal form.

Every element is written uniquely as x_1^e1 y_1^f1 ... x_k^ek y_k^fk z^l with
all exponents in [0, p), stored as the coordinate tuple
(e1, f1, ..., ek, fk, l).  The group is a central product of k factors of
order p^3; the shared central generator z generates both the center and the
derived subgroup.

Factor presentations (one relation set per factor type, z central throughout):

  HEISENBERG   x^p = y^p = z^p = 1,  [x, y] = z            (p odd, exponent p)
  APSQUARED    x^(p^2) = y^p = 1,    [x, y] = z = x^p      (p odd, exponent p^2)
  DIHEDRAL4    x^2 = y^2 = z^2 = 1,  [x, y] = z            (p = 2)
  QUATERNION   x^2 = y^2 = [x, y] = z,  z^2 = 1            (p = 2)

Multiplication is the closed coordinate formula induced by the relations:
for each factor, moving x-powers of the right operand past y-powers of the
left one contributes z^(-e2*f1), and exponent overflow on x (APSQUARED) or on
x and y (QUATERNION) carries into z.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .modp import Prime, inv

DEFAULT_CLOSURE_BUDGET = 10**6


class ClosureBudgetError(RuntimeError):
    """Raised when a subgroup closure would exceed the enumeration budget."""


class FactorType(enum.Enum):
    HEISENBERG = "H"
    APSQUARED = "A"
    DIHEDRAL4 = "D4"
    QUATERNION = "Q"


_ODD_TYPES = {FactorType.HEISENBERG, FactorType.APSQUARED}
_EVEN_TYPES = {FactorType.DIHEDRAL4, FactorType.QUATERNION}


@dataclass(frozen=True)
class GroupSpec:
    """An extraspecial group of order p^(2k+1), in canonical factor form.

    At most one factor differs from the generic one and it sits first:
    for odd p the canonical forms are H^k and A * H^(k-1); for p = 2 they
    are D4^k and Q * D4^(k-1).  Arbitrary factor mixtures are normalized to
    these at construction (A*A ~ H*A, and Q*Q ~ D4*D4 so only the parity of
    the quaternion count survives).
    """

    p: Prime
    k: int
    factors: tuple[FactorType, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", Prime(self.p))
        if self.k < 1:
            raise ValueError("need at least one central factor")
        factors = tuple(self.factors)
        if len(factors) != self.k:
            raise ValueError("factor count does not match k")
        if self.p == 2:
            if not all(f in _EVEN_TYPES for f in factors):
                raise ValueError("p = 2 admits only DIHEDRAL4 and QUATERNION factors")
            nq = sum(f is FactorType.QUATERNION for f in factors)
            special = (FactorType.QUATERNION,) if nq % 2 else ()
        else:
            if not all(f in _ODD_TYPES for f in factors):
                raise ValueError("odd p admits only HEISENBERG and APSQUARED factors")
            na = sum(f is FactorType.APSQUARED for f in factors)
            special = (FactorType.APSQUARED,) if na else ()
        generic = FactorType.DIHEDRAL4 if self.p == 2 else FactorType.HEISENBERG
        object.__setattr__(self, "factors", special + (generic,) * (self.k - len(special)))

    @property
    def order(self) -> int:
        return self.p ** (2 * self.k + 1)

    @property
    def dim(self) -> int:
        """Length of a coordinate tuple."""
        return 2 * self.k + 1

    @property
    def exponent(self) -> int:
        if self.p != 2 and all(f is FactorType.HEISENBERG for f in self.factors):
            return int(self.p)
        return int(self.p) ** 2

    @property
    def has_exponent_p(self) -> bool:
        return self.exponent == self.p

    def describe(self) -> str:
        if self.p == 2:
            t = "q" if self.factors[0] is FactorType.QUATERNION else "d4"
            return f"p=2,k={self.k},type={t}"
        e = "p" if self.has_exponent_p else "p2"
        return f"p={int(self.p)},k={self.k},exp={e}"


def spec_with_exponent(p: int, k: int, exponent_p: bool) -> GroupSpec:
    """Canonical spec for odd p with the requested exponent."""
    prime = Prime(p)
    if prime == 2:
        raise ValueError("use spec_two for p = 2")
    first = FactorType.HEISENBERG if exponent_p else FactorType.APSQUARED
    return GroupSpec(prime, k, (first,) + (FactorType.HEISENBERG,) * (k - 1))


def spec_two(k: int, quaternion: bool) -> GroupSpec:
    first = FactorType.QUATERNION if quaternion else FactorType.DIHEDRAL4
    return GroupSpec(Prime(2), k, (first,) + (FactorType.DIHEDRAL4,) * (k - 1))


def parse_group_spec(text: str) -> GroupSpec:
    """Parse the CLI group format `p=<prime>,k=<int>,exp=p|p2` (p=2: `type=d4|q`)."""
    fields = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"bad group spec field: {part!r}")
        key, val = part.split("=", 1)
        fields[key.strip()] = val.strip()
    unknown = set(fields) - {"p", "k", "exp", "type"}
    if unknown:
        raise ValueError(f"unknown group spec fields: {sorted(unknown)}")
    try:
        p = Prime(int(fields["p"]))
        k = int(fields.get("k", "1"))
    except KeyError as e:
        raise ValueError(f"group spec needs {e.args[0]}") from None
    if p == 2:
        if "exp" in fields:
            raise ValueError("p=2 groups all have exponent 4; use type=d4|q")
        t = fields.get("type", "d4").lower()
        if t not in ("d4", "q"):
            raise ValueError(f"type must be d4 or q, got {t!r}")
        return spec_two(k, quaternion=(t == "q"))
    if "type" in fields:
        raise ValueError("type=d4|q applies only to p=2")
    e = fields.get("exp")
    if e not in ("p", "p2"):
        raise ValueError("odd p needs exp=p or exp=p2")
    return spec_with_exponent(p, k, exponent_p=(e == "p"))


@dataclass(frozen=True)
class GroupElement:
    """Normal-form coordinates (e1, f1, ..., ek, fk, l)."""

    coords: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))


@dataclass(frozen=True)
class BarElement:
    """Image of an element with the z-exponent dropped; adds coordinatewise."""

    coords: tuple[int, ...]


def _check_element(spec: GroupSpec, g: GroupElement) -> None:
    c = g.coords
    if len(c) != spec.dim or any(x < 0 or x >= spec.p for x in c):
        raise ValueError(f"invalid element for {spec.describe()}: {c}")


def identity(spec: GroupSpec) -> GroupElement:
    return GroupElement((0,) * spec.dim)


def x_gen(spec: GroupSpec, i: int = 0) -> GroupElement:
    c = [0] * spec.dim
    c[2 * i] = 1
    return GroupElement(tuple(c))


def y_gen(spec: GroupSpec, i: int = 0) -> GroupElement:
    c = [0] * spec.dim
    c[2 * i + 1] = 1
    return GroupElement(tuple(c))


def z_gen(spec: GroupSpec, power: int = 1) -> GroupElement:
    c = [0] * spec.dim
    c[-1] = power % spec.p
    return GroupElement(tuple(c))


def multiply(spec: GroupSpec, g1: GroupElement, g2: GroupElement) -> GroupElement:
    """Normal form of g1 * g2 by the closed coordinate formula."""
    _check_element(spec, g1)
    _check_element(spec, g2)
    p, k = spec.p, spec.k
    a, b = g1.coords, g2.coords
    out = []
    ell = a[2 * k] + b[2 * k]
    for i in range(k):
        e1, f1 = a[2 * i], a[2 * i + 1]
        e2, f2 = b[2 * i], b[2 * i + 1]
        ell -= e2 * f1
        e, f = e1 + e2, f1 + f2
        ft = spec.factors[i]
        if ft is FactorType.APSQUARED:
            ell += e // p
        elif ft is FactorType.QUATERNION:
            ell += e // 2 + f // 2
        out.append(e % p)
        out.append(f % p)
    out.append(ell % p)
    return GroupElement(tuple(out))


def inverse(spec: GroupSpec, g: GroupElement) -> GroupElement:
    _check_element(spec, g)
    p, k = spec.p, spec.k
    a = g.coords
    out = []
    ell = -a[2 * k]
    for i in range(k):
        e, f = a[2 * i], a[2 * i + 1]
        e2, f2 = (-e) % p, (-f) % p
        ell += e2 * f
        ft = spec.factors[i]
        if ft is FactorType.APSQUARED:
            ell -= (e + e2) // p
        elif ft is FactorType.QUATERNION:
            ell -= (e + e2) // 2 + (f + f2) // 2
        out.append(e2)
        out.append(f2)
    out.append(ell % p)
    return GroupElement(tuple(out))


def power(spec: GroupSpec, g: GroupElement, n: int) -> GroupElement:
    """g**n by square-and-multiply; n may be negative."""
    if n < 0:
        return power(spec, inverse(spec, g), -n)
    acc = identity(spec)
    base = g
    while n:
        if n & 1:
            acc = multiply(spec, acc, base)
        base = multiply(spec, base, base)
        n >>= 1
    return acc


def commutator(spec: GroupSpec, a: GroupElement, b: GroupElement) -> GroupElement:
    """a^-1 b^-1 a b; always a power of z in these groups."""
    return multiply(
        spec,
        multiply(spec, inverse(spec, a), inverse(spec, b)),
        multiply(spec, a, b),
    )


def bar(g: GroupElement) -> BarElement:
    return BarElement(g.coords[:-1])


def bar_add(b1: BarElement, b2: BarElement, p: int) -> BarElement:
    return BarElement(tuple((x + y) % p for x, y in zip(b1.coords, b2.coords)))


def lift_bar(spec: GroupSpec, b: BarElement | Sequence[int], ell: int = 0) -> GroupElement:
    coords = tuple(b.coords if isinstance(b, BarElement) else b)
    return GroupElement(coords + (ell % spec.p,))


def apply_phi(spec: GroupSpec, j: int, g: GroupElement) -> GroupElement:
    """The automorphism sending each x_i, y_i to its j-th power and z to z^(j^2).

    Defined only on the exponent-p groups (odd p, all factors HEISENBERG).
    In coordinates the image is (j*e1, j*f1, ..., j^2 * l).
    """
    if not spec.has_exponent_p or spec.p == 2:
        raise ValueError("phi undefined for this group")
    p = spec.p
    j %= p
    if j == 0:
        raise ValueError("phi needs a unit exponent")
    _check_element(spec, g)
    c = g.coords
    out = tuple(c[m] * j % p for m in range(2 * spec.k)) + (c[-1] * j * j % p,)
    return GroupElement(out)


def phi_twist(spec: GroupSpec, h: GroupElement) -> int:
    """The residue l with apply_phi(j, h) == h^j * z^((j - j^2) * l) for every unit j.

    l depends only on h.  Computed from the single probe j = 2, for which
    j - j^2 = -2 is invertible for every odd p.
    """
    p = spec.p
    img = apply_phi(spec, 2, h)
    sq = power(spec, h, 2)
    t = (img.coords[-1] - sq.coords[-1]) % p
    return t * inv((2 - 4) % p, p) % p


# ---------------------------------------------------------------------------
# Bulk coordinate helpers (row-per-element int arrays).  These mirror the
# scalar operations and are certified against them in the test suite.
# ---------------------------------------------------------------------------


def mul_rows(spec: GroupSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise product of coordinate arrays (broadcasting allowed)."""
    p, k = int(spec.p), spec.k
    a = np.atleast_2d(np.asarray(a, dtype=np.int64))
    b = np.atleast_2d(np.asarray(b, dtype=np.int64))
    a, b = np.broadcast_arrays(a, b)
    ae, af = a[:, 0 : 2 * k : 2], a[:, 1 : 2 * k : 2]
    be, bf = b[:, 0 : 2 * k : 2], b[:, 1 : 2 * k : 2]
    e = ae + be
    f = af + bf
    ell = a[:, 2 * k] + b[:, 2 * k] - (be * af).sum(axis=1)
    ft = spec.factors[0]
    if ft is FactorType.APSQUARED:
        ell = ell + e[:, 0] // p
    elif ft is FactorType.QUATERNION:
        ell = ell + e[:, 0] // 2 + f[:, 0] // 2
    out = np.empty(a.shape, dtype=np.int64)
    out[:, 0 : 2 * k : 2] = e % p
    out[:, 1 : 2 * k : 2] = f % p
    out[:, 2 * k] = ell % p
    return out


def coords_keys(spec: GroupSpec, rows: np.ndarray) -> np.ndarray:
    """Mixed-radix integer key per row; key order is coordinate lex order."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.int64))
    d = spec.dim
    weights = np.array([int(spec.p) ** (d - 1 - m) for m in range(d)], dtype=np.int64)
    return rows @ weights


def keys_coords(spec: GroupSpec, keys: np.ndarray) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    d = spec.dim
    out = np.empty((len(keys), d), dtype=np.int64)
    rem = keys.copy()
    for m in range(d - 1, -1, -1):
        out[:, m] = rem % spec.p
        rem //= spec.p
    return out


def elements_array(spec: GroupSpec) -> np.ndarray:
    """All group elements as coordinate rows, in lex order."""
    return keys_coords(spec, np.arange(spec.order, dtype=np.int64))


def random_element(spec: GroupSpec, rng: np.random.Generator) -> GroupElement:
    return GroupElement(tuple(int(v) for v in rng.integers(0, int(spec.p), size=spec.dim)))


# ---------------------------------------------------------------------------
# Subgroups
# ---------------------------------------------------------------------------


class Subgroup:
    """A subgroup given by generators, with echelonized reduction data.

    The bar images of the stored pivot elements form a reduced-echelon basis
    of bar(H), and contains_z records whether the central generator lies in
    H.  Together these determine order, membership, and canonical left-coset
    labels without enumerating H; the element list is enumerated lazily (and
    only within the closure budget) when actually needed.
    """

    def __init__(self, spec: GroupSpec, generators: Iterable[GroupElement]):
        self.spec = spec
        self.generators = tuple(generators)
        for g in self.generators:
            _check_element(spec, g)
        self.contains_z = False
        self._basis: list[tuple[int, GroupElement]] = []
        for g in self.generators:
            self._absorb(g)
        # bar-invisible closure: commutators of pivot pairs and p-th powers
        # land in <z> and decide whether z itself is in H.
        lifts = [b for _, b in self._basis]
        for i in range(len(lifts)):
            for j in range(i + 1, len(lifts)):
                self._absorb(commutator(spec, lifts[i], lifts[j]))
            self._absorb(power(spec, lifts[i], int(spec.p)))
        self._elements_arr: np.ndarray | None = None

    # -- echelon construction -------------------------------------------------

    def _reduce(self, g: GroupElement) -> GroupElement:
        """Clear the pivot coordinates of g by right-multiplying with members of H."""
        spec, p = self.spec, self.spec.p
        w = g
        for pos, b in self._basis:
            c = w.coords[pos]
            if c:
                w = multiply(spec, w, power(spec, b, p - c))
        return w

    def _absorb(self, g: GroupElement) -> None:
        spec, p = self.spec, self.spec.p
        w = self._reduce(g)
        nb = 2 * spec.k
        lead = next((m for m in range(nb) if w.coords[m] != 0), None)
        if lead is None:
            if w.coords[-1] != 0:
                self.contains_z = True
            return
        w = power(spec, w, inv(w.coords[lead], p))
        for idx, (pos, b) in enumerate(self._basis):
            c = b.coords[lead]
            if c:
                self._basis[idx] = (pos, multiply(spec, b, power(spec, w, p - c)))
        self._basis.append((lead, w))
        self._basis.sort(key=lambda t: t[0])

    # -- derived data ----------------------------------------------------------

    @property
    def rank(self) -> int:
        """Dimension of bar(H)."""
        return len(self._basis)

    @property
    def order(self) -> int:
        return int(self.spec.p) ** (self.rank + (1 if self.contains_z else 0))

    @property
    def echelon_lifts(self) -> tuple[GroupElement, ...]:
        """Elements of H whose bar images form the reduced echelon basis of bar(H)."""
        return tuple(b for _, b in self._basis)

    @property
    def pivots(self) -> tuple[int, ...]:
        return tuple(pos for pos, _ in self._basis)

    def bar_basis_matrix(self) -> np.ndarray:
        """Reduced-echelon basis of bar(H) as rows, shape (rank, 2k)."""
        nb = 2 * self.spec.k
        return np.array([b.coords[:nb] for _, b in self._basis], dtype=np.int64).reshape(
            self.rank, nb
        )

    def member(self, g: GroupElement) -> bool:
        w = self._reduce(g)
        if any(w.coords[m] for m in range(2 * self.spec.k)):
            return False
        return w.coords[-1] == 0 or self.contains_z

    def label(self, g: GroupElement) -> tuple[int, ...]:
        """Canonical left-coset label: the lex-least coordinate vector in gH."""
        w = self._reduce(g)
        if self.contains_z:
            return w.coords[:-1] + (0,)
        return w.coords

    # -- enumeration -----------------------------------------------------------

    def elements_as_array(self, budget: int = DEFAULT_CLOSURE_BUDGET) -> np.ndarray:
        """All elements as coordinate rows in lex order (cached)."""
        if self._elements_arr is None:
            if self.order > budget:
                raise ClosureBudgetError(
                    f"closure too large: |H| = {self.order} exceeds budget {budget}"
                )
            spec = self.spec
            gens = list(self.echelon_lifts)
            if self.contains_z:
                gens.append(z_gen(spec))
            seen = {identity(spec).coords}
            frontier = [identity(spec)]
            while frontier:
                nxt = []
                for h in frontier:
                    for g in gens:
                        w = multiply(spec, h, g)
                        if w.coords not in seen:
                            seen.add(w.coords)
                            nxt.append(w)
                frontier = nxt
            arr = np.array(sorted(seen), dtype=np.int64).reshape(len(seen), spec.dim)
            assert len(arr) == self.order
            self._elements_arr = arr
        return self._elements_arr

    @property
    def elements(self) -> tuple[GroupElement, ...]:
        return tuple(GroupElement(tuple(int(v) for v in row)) for row in self.elements_as_array())

    def coset_members(self, g: GroupElement) -> np.ndarray:
        """Coordinate rows of the left coset gH, sorted."""
        rows = mul_rows(self.spec, np.asarray([g.coords], dtype=np.int64), self.elements_as_array())
        order = np.argsort(coords_keys(self.spec, rows), kind="stable")
        return rows[order]


def subgroup_closure(
    spec: GroupSpec,
    generators: Iterable[GroupElement],
    budget: int = DEFAULT_CLOSURE_BUDGET,
) -> Subgroup:
    """Subgroup generated by the given elements, with its closure enumerated."""
    h = Subgroup(spec, generators)
    h.elements_as_array(budget=budget)
    return h


def coset_label(h: Subgroup, g: GroupElement) -> tuple[int, ...]:
    """Canonical label of the left coset gH (equal labels iff equal cosets)."""
    return h.label(g)


def subgroups_equal(a: Subgroup, b: Subgroup) -> bool:
    if a.spec != b.spec or a.order != b.order:
        return False
    return all(a.member(g) for g in b.generators) and (not b.contains_z or a.contains_z)


# ---------------------------------------------------------------------------
# Generator (de)serialization for the CLI
# ---------------------------------------------------------------------------


def generators_to_jsonable(gens: Sequence[GroupElement]) -> list[list[int]]:
    return [list(g.coords) for g in gens]


def generators_from_json(data: str | Sequence[Sequence[int]], spec: GroupSpec) -> list[GroupElement]:
    if isinstance(data, str):
        data = json.loads(data)
    gens = [GroupElement(tuple(int(c) for c in row)) for row in data]
    for g in gens:
        _check_element(spec, g)
    return gens
