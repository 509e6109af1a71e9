"""Hidden-subgroup solver for extraspecial p-groups.

The solver recovers a planted subgroup H from a coset-labeling oracle alone.
Writing Z for the central subgroup <z> (which equals the derived subgroup),
the pipeline is:

  * If the oracle identifies z with the identity, H contains Z and is the
    full preimage of its image in the quotient model of G/Z, which abelian
    Fourier sampling of the induced classical function recovers directly.
  * Otherwise, for odd p with an order-p^2 generator, the exponent of that
    generator splits off as a classically known coordinate, reducing to the
    exponent-p group of the same size.
  * Otherwise HZ is recovered by abelian Fourier sampling over the quotient
    model, fed by a quantum hiding procedure built from coset phase states:
    either plain |aHZ> states obtained by repeating the preparation circuit
    until the phase outcome is zero (small p), or four-fold products of
    |aHZ_u> states twisted by the power automorphisms phi_j, whose phases
    cancel exactly when (u, j) solves a two-equation quadratic system
    (large p).  A final abelian stage inside the elementary abelian group HZ
    then pins down H itself with the classical oracle.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations
from typing import Callable, Iterable, Sequence

import numpy as np

from . import simq, xgroup
from .modp import FpMatrix, inv, kernel_basis, rank, row_reduce, solve_quadratic
from .simq import (
    DEFAULT_DIM_BUDGET,
    DimensionBudgetError,
    ElementRegister,
    RegisterLayout,
    StateVector,
    SubgroupOracle,
    ZpRegister,
)
from .xgroup import (
    ClosureBudgetError,
    GroupElement,
    GroupSpec,
    Subgroup,
    apply_phi,
    identity,
    lift_bar,
    subgroups_equal,
    z_gen,
)

LARGE_PRIME_THRESHOLD = 11


class ResampleCapError(RuntimeError):
    """Raised when no witnessed phase tuple shows up within the retry cap."""


class StabilizationError(RuntimeError):
    """Raised when Fourier sampling fails to stabilize within the sample cap."""


class SolverInternalError(RuntimeError):
    """Raised when an intermediate recovery is internally inconsistent."""


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


class OracleHandle(SubgroupOracle):
    """Coset-labeling oracle with query accounting.

    The hidden subgroup is sealed inside the handle; callers observe only
    labels.  Every evaluation counts one query, and a coherent evaluation
    over a basis slice (superposition query) also counts exactly one.
    """

    def __init__(self, hidden: Subgroup):
        super().__init__(hidden)
        self.query_count = 0

    def query(self, g: GroupElement) -> tuple[int, ...]:
        self.query_count += 1
        return super().query(g)

    def coherent_many(self, rows: np.ndarray) -> np.ndarray:
        self.query_count += 1
        return super().coherent_many(rows)

    def coherent_sample(self, rng: np.random.Generator) -> tuple[GroupElement, np.ndarray]:
        self.query_count += 1
        g = xgroup.random_element(self.spec, rng)
        a = GroupElement(self._hidden.label(g))
        return a, self.coset_members(a)

    def count_extra_query(self) -> None:
        self.query_count += 1


def make_oracle(hidden: Subgroup) -> OracleHandle:
    """Oracle computing the canonical left-coset label of its argument."""
    return OracleHandle(hidden)


class ExtendedOracle:
    """Oracle for the same hidden subgroup inside the all-exponent-p group.

    Applies when the original group has an order-p^2 generator x_1 and the
    hidden subgroup avoids the center: every member of H then has trivial
    x_1-exponent, so (e_1, f(rest)) is again a coset labeling, now over the
    exponent-p group with identical coordinates.  One inner query per query.
    """

    def __init__(self, inner, spec2: GroupSpec):
        if spec2.dim != inner.spec.dim or spec2.p != inner.spec.p:
            raise ValueError("incompatible reduction target")
        self._inner = inner
        self.spec = spec2

    @property
    def query_count(self) -> int:
        return self._inner.query_count

    @property
    def n_cosets(self) -> int:
        return int(self.spec.p) * self._inner.n_cosets

    def _split(self, g: GroupElement) -> tuple[int, GroupElement]:
        return g.coords[0], GroupElement((0,) + g.coords[1:])

    def query(self, g: GroupElement) -> tuple[int, ...]:
        e1, rest = self._split(g)
        return (e1,) + self._inner.query(rest)[1:]

    def coherent_many(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        rest = rows.copy()
        rest[:, 0] = 0
        base = int(self.spec.p) ** (self.spec.dim - 1)
        return rows[:, 0] * base + self._inner.coherent_many(rest)

    def coherent_table(self) -> np.ndarray:
        return self.coherent_many(xgroup.elements_array(self.spec))

    def coherent_sample(self, rng: np.random.Generator) -> tuple[GroupElement, np.ndarray]:
        e1 = int(rng.integers(0, int(self.spec.p)))
        a_rest, members = self._inner.coherent_sample(rng)
        a = GroupElement((e1,) + a_rest.coords[1:])
        out = members.copy()
        out[:, 0] = e1
        return a, out

    def coset_members(self, g: GroupElement) -> np.ndarray:
        e1, rest = self._split(g)
        out = self._inner.coset_members(rest).copy()
        out[:, 0] = e1
        return out

    def count_extra_query(self) -> None:
        self._inner.count_extra_query()


def reduce_exponent_p_squared(oracle, spec: GroupSpec) -> tuple[GroupSpec, ExtendedOracle]:
    """Reduce an odd-p exponent-p^2 instance to the exponent-p group.

    Requires the hidden subgroup to avoid the center (checked through the
    oracle); otherwise the quotient-model branch already applies.
    """
    if spec.p == 2 or spec.has_exponent_p:
        raise ValueError("reduction applies to odd p with an order-p^2 generator")
    if oracle.query(z_gen(spec)) == oracle.query(identity(spec)):
        raise ValueError("central generator lies in the hidden subgroup; no reduction needed")
    spec2 = xgroup.spec_with_exponent(spec.p, spec.k, exponent_p=True)
    return spec2, ExtendedOracle(oracle, spec2)


# ---------------------------------------------------------------------------
# Phase-cancellation witnesses
# ---------------------------------------------------------------------------


def verify_witness(u: Sequence[int], j: Sequence[int], p: int) -> bool:
    """True iff all j_i are units and both phase-cancellation sums vanish.

    The defining system is sum u_i (j_i - j_i^2) == 0 and sum u_i j_i^2 == 0
    (mod p); adding the equations shows it is equivalent to requiring
    sum u_i j_i == 0 and sum u_i j_i^2 == 0.
    """
    u = [x % p for x in u]
    j = [x % p for x in j]
    if len(u) != 4 or len(j) != 4 or any(x == 0 for x in j):
        return False
    s1 = sum(ui * (ji - ji * ji) for ui, ji in zip(u, j)) % p
    s2 = sum(ui * ji * ji for ui, ji in zip(u, j)) % p
    return s1 == 0 and s2 == 0


def find_witness(u: Sequence[int], p: int) -> tuple[int, int, int, int] | None:
    """Constructive witness search for a measured phase tuple.

    Two of the four positions take the fixed values 1 and -1; substituting
    j2 = -(w + u1 j1)/u2 with v = u3 + u4 and w = u3 - u4 collapses the
    system to one quadratic in j1, solvable by a modular square root
    whenever its discriminant is a residue.  All 12 assignments of which two
    components play the (u1, u2) roles are tried (swapping the fixed pair
    only negates a solution).  The search can miss tuples that are solvable
    with both free values away from {1, -1}; callers treat None as a signal
    to resample, not as proof that no witness exists.
    """
    if p < LARGE_PRIME_THRESHOLD:
        raise ValueError(f"witness search requires p >= {LARGE_PRIME_THRESHOLD}")
    u = tuple(x % p for x in u)
    if all(x == 0 for x in u):
        return (1, 1, 1, p - 1)
    for i1, i2 in permutations(range(4), 2):
        i3, i4 = sorted(set(range(4)) - {i1, i2})
        u1, u2, u3, u4 = u[i1], u[i2], u[i3], u[i4]
        if u1 == 0 or u2 == 0 or (u1 + u2) % p == 0:
            continue
        v = (u3 + u4) % p
        w = (u3 - u4) % p
        qa = (u1 * u2 + u1 * u1) % p
        qb = 2 * u1 * w % p
        qc = (w * w + v * u2) % p
        for j1 in sorted(solve_quadratic(qa, qb, qc, p)):
            if j1 == 0:
                continue
            j2 = (-(w + u1 * j1) * inv(u2, p)) % p
            if j2 == 0:
                continue
            out = [0, 0, 0, 0]
            out[i1], out[i2], out[i3], out[i4] = j1, j2, 1, p - 1
            if verify_witness(u, out, p):
                return tuple(out)
    return None


def witness_mask(p: int) -> np.ndarray:
    """Boolean success table of find_witness over all of Z_p^4 (vectorized).

    Index order matches the lex enumeration of (u1, u2, u3, u4).  Certified
    against the scalar search in the test suite.
    """
    n = p**4
    idx = np.arange(n, dtype=np.int64)
    comps = np.stack([(idx // p ** (3 - m)) % p for m in range(4)], axis=1)
    sqrt_t = np.full(p, -1, dtype=np.int64)
    for r in range(p):
        s = r * r % p
        if sqrt_t[s] < 0:
            sqrt_t[s] = r
    inv_t = np.zeros(p, dtype=np.int64)
    for a in range(1, p):
        inv_t[a] = pow(a, p - 2, p)
    mask = np.zeros(n, dtype=bool)
    mask[0] = True
    for i1, i2 in permutations(range(4), 2):
        i3, i4 = sorted(set(range(4)) - {i1, i2})
        a, b = comps[:, i1], comps[:, i2]
        v = (comps[:, i3] + comps[:, i4]) % p
        w = (comps[:, i3] - comps[:, i4]) % p
        ok = (a != 0) & (b != 0) & ((a + b) % p != 0)
        qa = (a * b + a * a) % p
        qb = 2 * a * w % p
        qc = (w * w + v * b) % p
        disc = (qb * qb - 4 * qa * qc) % p
        root = sqrt_t[disc]
        has = ok & (root >= 0)
        inv2a = inv_t[(2 * qa) % p]
        for sgn in (1, -1):
            j1 = (-qb + sgn * root) % p * inv2a % p
            j2 = (-(w + a * j1)) % p * inv_t[b] % p
            mask |= has & (j1 != 0) & (j2 != 0)
    return mask


def witness_fraction(p: int) -> Fraction:
    """Exact fraction of phase tuples in Z_p^4 for which find_witness succeeds."""
    if p > 31:
        raise ValueError("exhaustive enumeration capped at p <= 31; sample instead")
    if p < LARGE_PRIME_THRESHOLD:
        raise ValueError(f"witness search requires p >= {LARGE_PRIME_THRESHOLD}")
    return Fraction(int(witness_mask(p).sum()), p**4)


def witness_fraction_bound(p: int) -> Fraction:
    """Guaranteed lower bound (p - 9) / 2p on the witnessable fraction."""
    return Fraction(p - 9, 2 * p)


# ---------------------------------------------------------------------------
# Hiding sets built from coset phase states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HidingTriple:
    """Four coset reps, four phase outcomes, and a verified witness."""

    a: tuple[GroupElement, GroupElement, GroupElement, GroupElement]
    u: tuple[int, int, int, int]
    j: tuple[int, int, int, int]


@dataclass
class TripleDraw:
    triple: HidingTriple
    states: tuple[StateVector, ...]
    iterations: int


@dataclass
class SolveCounters:
    state_prep_runs: int = 0
    triple_resamples: int = 0


def default_resample_cap(p: int) -> int:
    return 64 * math.ceil(2 * p / (p - 9))


def draw_hiding_triple(
    oracle_or_subgroup,
    rng: np.random.Generator,
    dim_budget: int = DEFAULT_DIM_BUDGET,
    counters: SolveCounters | None = None,
    cap: int | None = None,
) -> TripleDraw:
    """Repeat four preparation runs until the phase tuple admits a witness.

    Returns the witnessed triple together with the four retained coset phase
    states.  The expected number of iterations is at most 2p/(p - 9).
    """
    oracle = simq._as_oracle(oracle_or_subgroup)
    spec = oracle.spec
    p = int(spec.p)
    if not spec.has_exponent_p or p < LARGE_PRIME_THRESHOLD:
        raise ValueError(f"needs an exponent-p group with p >= {LARGE_PRIME_THRESHOLD}")
    if cap is None:
        cap = default_resample_cap(p)
    for it in range(1, cap + 1):
        draws = [sample_coset_phase_counted(oracle, rng, dim_budget, counters) for _ in range(4)]
        if counters is not None:
            counters.triple_resamples += 1
        u = tuple(d.u for d in draws)
        j = find_witness(u, p)
        if j is not None:
            triple = HidingTriple(tuple(d.a for d in draws), u, j)
            return TripleDraw(triple, tuple(d.state for d in draws), it)
    raise ResampleCapError(f"no witnessed phase tuple in {cap} resamples")


def sample_coset_phase_counted(oracle, rng, dim_budget, counters):
    draw = simq.sample_coset_phase(oracle, rng, dim_budget)
    if counters is not None:
        counters.state_prep_runs += 1
    return draw


def hiding_state(
    spec: GroupSpec, triple: HidingTriple, states: Sequence[StateVector], g: GroupElement
) -> list[StateVector]:
    """The four components of the product hiding state for input g.

    Component i is the retained state right-multiplied by phi_{j_i}(g); the
    full state is their tensor product and is never materialized here.
    """
    return [
        simq.right_multiply(states[i], "g", apply_phi(spec, triple.j[i], g)) for i in range(4)
    ]


def hiding_gram_check(
    spec: GroupSpec,
    triple: HidingTriple,
    states: Sequence[StateVector],
    transversal: Sequence[GroupElement],
) -> np.ndarray:
    """|<Psi_g | Psi_g'>| over the transversal, as products of component overlaps.

    For a hiding set the result is 1 on same-coset pairs and 0 elsewhere.
    """
    comps = [hiding_state(spec, triple, states, g) for g in transversal]
    n = len(comps)
    out = np.zeros((n, n))
    for i in range(n):
        out[i, i] = abs(np.prod([simq.inner_product(c, c) for c in comps[i]]))
        for m in range(i + 1, n):
            val = 1.0 + 0.0j
            for ci, cm in zip(comps[i], comps[m]):
                val *= simq.inner_product(ci, cm)
            out[i, m] = out[m, i] = abs(val)
    return out


class _HidingSet:
    """A realized hiding set: retained states plus per-input multipliers."""

    def __init__(self, spec: GroupSpec, components: Sequence[StateVector]):
        self.spec = spec
        self.components = tuple(components)
        self._partition: np.ndarray | None = None

    def _multiplier(self, i: int, g: GroupElement) -> GroupElement:
        raise NotImplementedError

    def components_for(self, gbar: Sequence[int]) -> list[StateVector]:
        g = lift_bar(self.spec, tuple(gbar), 0)
        return [
            simq.right_multiply(c, "g", self._multiplier(i, g))
            for i, c in enumerate(self.components)
        ]

    def bar_partition(self) -> np.ndarray:
        """Label per quotient-model element, constant exactly on the HZ classes.

        Derived from the support of the first retained state: the support is
        a left coset of HZ, so its z-free coordinates, translated to the
        origin, span the quotient image of HZ.  Labels are canonical affine
        representatives modulo that span.
        """
        if self._partition is not None:
            return self._partition
        spec = self.spec
        p, nb = int(spec.p), 2 * spec.k
        comp = self.components[0]
        support = comp.layout.register("g").coords[np.abs(comp.amps) > 1e-12]
        bars = np.unique((support[:, :nb] - support[0, :nb]) % p, axis=0)
        rref, pivots = row_reduce(bars.tolist(), p)
        vecs = _all_vectors(p, nb)
        if pivots:
            r = np.asarray(rref, dtype=np.int64)
            canon = (vecs - vecs[:, pivots] @ r) % p
        else:
            canon = vecs
        weights = np.array([p ** (nb - 1 - m) for m in range(nb)], dtype=np.int64)
        self._partition = canon @ weights
        return self._partition


class TripleHidingSet(_HidingSet):
    def __init__(self, spec: GroupSpec, draw: TripleDraw):
        super().__init__(spec, draw.states)
        self.triple = draw.triple

    def _multiplier(self, i: int, g: GroupElement) -> GroupElement:
        return apply_phi(self.spec, self.triple.j[i], g)


class CosetHidingSet(_HidingSet):
    """Single |aHZ> state; inputs act by plain right multiplication."""

    def _multiplier(self, i: int, g: GroupElement) -> GroupElement:
        return g


class TripleHidingProcedure:
    """Fresh witnessed four-state hiding set per call (large odd p)."""

    def __init__(self, oracle, dim_budget=DEFAULT_DIM_BUDGET, counters=None, cap=None):
        self.oracle = oracle
        self.dim_budget = dim_budget
        self.counters = counters
        self.cap = cap

    def fresh_set(self, rng: np.random.Generator) -> TripleHidingSet:
        draw = draw_hiding_triple(
            self.oracle, rng, dim_budget=self.dim_budget, counters=self.counters, cap=self.cap
        )
        return TripleHidingSet(self.oracle.spec, draw)


class CosetStateHidingProcedure:
    """Fresh |aHZ> state per call, by retrying until the phase outcome is 0.

    One retry succeeds with probability 1/p (or always, when z lies in H),
    so the expected cost is at most p preparation runs per hiding set.
    """

    def __init__(self, oracle, dim_budget=DEFAULT_DIM_BUDGET, counters=None, cap=None):
        self.oracle = oracle
        self.dim_budget = dim_budget
        self.counters = counters
        self.cap = 64 * int(oracle.spec.p) if cap is None else cap

    def fresh_set(self, rng: np.random.Generator) -> CosetHidingSet:
        for _ in range(self.cap):
            draw = sample_coset_phase_counted(self.oracle, rng, self.dim_budget, self.counters)
            if draw.u == 0:
                return CosetHidingSet(self.oracle.spec, [draw.state])
        raise ResampleCapError(f"no zero phase outcome in {self.cap} preparation runs")


def coset_state_hiding(
    oracle, rng: np.random.Generator | None = None, dim_budget: int = DEFAULT_DIM_BUDGET, counters=None
) -> CosetStateHidingProcedure:
    """Hiding-procedure handle for the repeat-until-zero construction."""
    return CosetStateHidingProcedure(oracle, dim_budget=dim_budget, counters=counters)


# ---------------------------------------------------------------------------
# Abelian Fourier sampling
# ---------------------------------------------------------------------------


def _all_vectors(p: int, n: int) -> np.ndarray:
    idx = np.arange(p**n, dtype=np.int64)
    return np.stack([(idx // p ** (n - 1 - m)) % p for m in range(n)], axis=1)


class _IndexRegister:
    """Internal register over sorted integer ids (oracle-value register)."""

    def __init__(self, name: str, values: np.ndarray):
        self.name = name
        self.values = np.unique(np.asarray(values, dtype=np.int64))
        self.dim = len(self.values)

    def value(self, i: int) -> int:
        return int(self.values[i])


def fourier_sample_labels(
    p: int,
    n: int,
    labels: np.ndarray,
    rng: np.random.Generator,
    dim_budget: int = DEFAULT_DIM_BUDGET,
) -> tuple[int, ...]:
    """One Fourier-sampling round over Z_p^n against a label function.

    Prepares sum_v |v>|label(v)>, Fourier-transforms each Z_p register, and
    measures them; the outcome is a character orthogonal to the stabilizer
    of the labeling.  When the joint state exceeds the budget, the label
    register is measured first (an exactly commuting rearrangement): a
    uniformly random v fixes the label class, the state collapses to that
    class, and the character registers are then transformed and measured.
    """
    labels = np.asarray(labels, dtype=np.int64)
    total = p**n
    if labels.shape != (total,):
        raise ValueError("label table must cover Z_p^n in lex order")
    uniq = np.unique(labels)
    if total * len(uniq) <= min(dim_budget, simq.DENSE_ORACLE_CAP):
        regs = [ZpRegister(f"v{m}", p) for m in range(n)]
        lreg = _IndexRegister("f", uniq)
        layout = RegisterLayout(regs + [lreg])
        flat = np.arange(total, dtype=np.int64) * lreg.dim + np.searchsorted(uniq, labels)
        state = simq.uniform_state(layout, flat, dim_budget)
    else:
        v0 = int(rng.integers(0, total))
        members = np.flatnonzero(labels == labels[v0])
        layout = RegisterLayout([ZpRegister(f"v{m}", p) for m in range(n)])
        state = simq.uniform_state(layout, members, dim_budget)
    for m in range(n):
        state = simq.qft_zp(state, f"v{m}")
    out = []
    for m in range(n):
        o = simq.measure(state, f"v{m}", rng)
        out.append(int(o.value))
        state = o.collapsed
    return tuple(out)


def character_distribution_from_labels(p: int, n: int, labels: np.ndarray) -> np.ndarray:
    """Exact character distribution of one sampling round, lex-indexed."""
    labels = np.asarray(labels, dtype=np.int64)
    total = p**n
    dist = np.zeros(total)
    for c in np.unique(labels):
        ind = np.zeros((p,) * n)
        ind.reshape(-1)[labels == c] = 1.0
        amp = np.fft.ifftn(ind) * total  # sum over the class of omega^(v.chi)
        dist += (np.abs(amp) ** 2).reshape(-1) / total**2
    return dist


def _dense_joint(hiding_set: _HidingSet, dim_budget: int) -> np.ndarray:
    """Materialized sum_g |g> (x) Psi_g over the quotient model, shape (p^2k, |G|^m)."""
    spec = hiding_set.spec
    if spec.order != 27:
        raise ValueError("dense backend permitted only for the 27-element group")
    p, nb = int(spec.p), 2 * spec.k
    full = ElementRegister.full_group("g", spec)
    m = len(hiding_set.components)
    simq.check_budget(p**nb * spec.order**m, dim_budget)
    joint = np.zeros((p**nb, spec.order**m), dtype=np.complex128)
    for vi, gbar in enumerate(_all_vectors(p, nb)):
        vec = np.ones(1, dtype=np.complex128)
        for comp in hiding_set.components_for(tuple(int(x) for x in gbar)):
            reg = comp.layout.register("g")
            embedded = np.zeros(spec.order, dtype=np.complex128)
            embedded[full.positions_of(reg.coords)] = comp.amps
            vec = np.kron(vec, embedded)
        joint[vi] = vec / math.sqrt(p**nb)
    return joint


def _dense_character_distribution(hiding_set: _HidingSet, dim_budget: int) -> np.ndarray:
    spec = hiding_set.spec
    p, nb = int(spec.p), 2 * spec.k
    joint = _dense_joint(hiding_set, dim_budget)
    shaped = joint.reshape((p,) * nb + (-1,))
    f = simq.fourier_matrix(p)
    for ax in range(nb):
        shaped = np.moveaxis(np.tensordot(f, np.moveaxis(shaped, ax, 0), axes=(1, 0)), 0, ax)
    return (np.abs(shaped) ** 2).reshape(p**nb, -1).sum(axis=1)


def bar_character_distribution(
    hiding_set: _HidingSet, backend: str = "structured", dim_budget: int = DEFAULT_DIM_BUDGET
) -> np.ndarray:
    """Exact one-round character distribution for a realized hiding set."""
    spec = hiding_set.spec
    if backend == "structured":
        return character_distribution_from_labels(
            int(spec.p), 2 * spec.k, hiding_set.bar_partition()
        )
    if backend == "dense":
        return _dense_character_distribution(hiding_set, dim_budget)
    raise ValueError(f"unknown backend {backend!r}")


def fourier_sample_bar_group(
    procedure,
    rng: np.random.Generator,
    backend: str = "structured",
    dim_budget: int = DEFAULT_DIM_BUDGET,
) -> tuple[int, ...]:
    """One Fourier-sampling round over the quotient model with a fresh hiding set.

    STRUCTURED replaces each product state by the basis state of its HZ-class
    label, exact because the hiding overlaps form an identity pattern; DENSE
    materializes the full tensor product (27-element group only).
    """
    hs = procedure.fresh_set(rng)
    spec = hs.spec
    p, nb = int(spec.p), 2 * spec.k
    if backend == "structured":
        return fourier_sample_labels(p, nb, hs.bar_partition(), rng, dim_budget)
    if backend == "dense":
        dist = _dense_character_distribution(hs, dim_budget)
        flat = int(rng.choice(len(dist), p=dist / dist.sum()))
        return tuple(int(x) for x in _all_vectors(p, nb)[flat])
    raise ValueError(f"unknown backend {backend!r}")


def abelian_hsp(
    sampler: Callable[[], Sequence[int]],
    n: int,
    p: int,
    stable_run: int = 10,
    cap: int | None = None,
) -> list[tuple[int, ...]]:
    """Standard abelian recovery: sample characters until the span stabilizes.

    Stops after stable_run consecutive samples that do not grow the span
    (overall cap 10 * (n + 1) samples), then returns the canonical kernel
    basis of the sample matrix, a generator basis of the hidden subgroup.
    """
    if cap is None:
        cap = 10 * (n + 1)
    samples: list[tuple[int, ...]] = []
    current, streak = 0, 0
    while len(samples) < cap:
        samples.append(tuple(int(x) % p for x in sampler()))
        r = rank(samples, p)
        if r == current:
            streak += 1
        else:
            current, streak = r, 0
        if streak >= stable_run:
            return kernel_basis(FpMatrix.from_rows(samples, p), p)
    raise StabilizationError("sampling did not stabilize")


# ---------------------------------------------------------------------------
# The reduction pipeline
# ---------------------------------------------------------------------------


def resolve_path(spec: GroupSpec, path: str) -> str:
    """Pick the hiding-procedure construction; validate explicit overrides."""
    theorem3_ok = spec.has_exponent_p and int(spec.p) >= LARGE_PRIME_THRESHOLD
    if path == "auto":
        return "theorem3" if theorem3_ok else "constant-exp"
    if path == "theorem3" and not theorem3_ok:
        raise ValueError("theorem3 path needs an exponent-p group with p >= 11")
    if path not in ("theorem3", "constant-exp"):
        raise ValueError(f"unknown path {path!r}")
    return path


def find_hz(
    oracle,
    rng: np.random.Generator,
    path: str = "auto",
    backend: str = "structured",
    dim_budget: int = DEFAULT_DIM_BUDGET,
    counters: SolveCounters | None = None,
) -> Subgroup:
    """Recover HZ = H<z> through the quotient model.

    The hiding procedure (fresh hiding set per round) also hides the
    quotient image of HZ, so abelian Fourier sampling recovers a basis of
    that image; its zero-shift lifts together with z generate HZ.
    """
    spec = oracle.spec
    path = resolve_path(spec, path)
    if path == "theorem3":
        proc = TripleHidingProcedure(oracle, dim_budget=dim_budget, counters=counters)
    else:
        proc = CosetStateHidingProcedure(oracle, dim_budget=dim_budget, counters=counters)
    vecs = abelian_hsp(
        lambda: fourier_sample_bar_group(proc, rng, backend=backend, dim_budget=dim_budget),
        2 * spec.k,
        int(spec.p),
    )
    gens = [lift_bar(spec, v) for v in vecs] + [z_gen(spec)]
    return Subgroup(spec, gens)


def _cached_label_sampler(
    oracle, rows: np.ndarray, p: int, n: int, rng, dim_budget: int
) -> Callable[[], tuple[int, ...]]:
    """Per-round sampler against f on the given basis slice; one query per round."""
    cache: dict[str, np.ndarray] = {}

    def sampler() -> tuple[int, ...]:
        if "labels" not in cache:
            cache["labels"] = oracle.coherent_many(rows)
        else:
            oracle.count_extra_query()
        return fourier_sample_labels(p, n, cache["labels"], rng, dim_budget)

    return sampler


def _solve_central_branch(spec, oracle, rng, dim_budget) -> list[GroupElement]:
    """H contains the center: classical sampling over the quotient model."""
    p, nb = int(spec.p), 2 * spec.k
    reps = np.hstack(
        [_all_vectors(p, nb), np.zeros((p**nb, 1), dtype=np.int64)]
    )
    sampler = _cached_label_sampler(oracle, reps, p, nb, rng, dim_budget)
    vecs = abelian_hsp(sampler, nb, p)
    return [lift_bar(spec, v) for v in vecs] + [z_gen(spec)]


def _abelian_lift_rows(spec, basis: Sequence[GroupElement], digits: np.ndarray) -> np.ndarray:
    """Rows prod_m basis[m]^digits[:, m] for commuting basis elements."""
    p = int(spec.p)
    rows = np.zeros((len(digits), spec.dim), dtype=np.int64)
    for m, b in enumerate(basis):
        pows = np.array(
            [xgroup.power(spec, b, c).coords for c in range(p)], dtype=np.int64
        )
        rows = xgroup.mul_rows(spec, rows, pows[digits[:, m]])
    return rows


def _solve_inside_hz(spec, oracle, hz: Subgroup, rng, dim_budget) -> list[GroupElement]:
    """Final abelian stage: locate H inside the elementary abelian group HZ."""
    p = int(spec.p)
    basis = list(hz.echelon_lifts) + [z_gen(spec)]
    for i in range(len(basis)):
        for m in range(i + 1, len(basis)):
            if xgroup.commutator(spec, basis[i], basis[m]).coords != identity(spec).coords:
                raise SolverInternalError("recovered HZ is not abelian")
    d = len(basis)
    digits = _all_vectors(p, d)
    rows = _abelian_lift_rows(spec, basis, digits)
    sampler = _cached_label_sampler(oracle, rows, p, d, rng, dim_budget)
    vecs = abelian_hsp(sampler, d, p)
    out = []
    for v in vecs:
        g = identity(spec)
        for m, b in enumerate(basis):
            g = xgroup.multiply(spec, g, xgroup.power(spec, b, v[m]))
        out.append(g)
    return out


def _solve(spec, oracle, rng, path, backend, dim_budget, counters) -> list[GroupElement]:
    p = int(spec.p)
    if oracle.query(z_gen(spec)) == oracle.query(identity(spec)):
        return _solve_central_branch(spec, oracle, rng, dim_budget)
    if not spec.has_exponent_p and p != 2:
        spec2, oracle2 = reduce_exponent_p_squared(oracle, spec)
        gens2 = _solve(spec2, oracle2, rng, path, backend, dim_budget, counters)
        for g in gens2:
            if g.coords[0] != 0:
                raise SolverInternalError("reduced recovery left the complement subgroup")
        return [GroupElement(g.coords) for g in gens2]
    hz = find_hz(
        oracle, rng, path=path, backend=backend, dim_budget=dim_budget, counters=counters
    )
    return _solve_inside_hz(spec, oracle, hz, rng, dim_budget)


@dataclass
class SolverReport:
    """Outcome of one solve: recovered generators plus accounting."""

    spec: GroupSpec
    recovered_generators: tuple[GroupElement, ...] | None
    planted_generators: tuple[GroupElement, ...] | None
    success: bool | None
    status: str
    oracle_queries: int
    state_prep_runs: int
    triple_resamples: int
    wall_time_s: float

    def to_jsonable(self) -> dict:
        return {
            "group": self.spec.describe(),
            "recovered_generators": None
            if self.recovered_generators is None
            else xgroup.generators_to_jsonable(self.recovered_generators),
            "planted_generators": None
            if self.planted_generators is None
            else xgroup.generators_to_jsonable(self.planted_generators),
            "success": self.success,
            "status": self.status,
            "oracle_queries": self.oracle_queries,
            "state_prep_runs": self.state_prep_runs,
            "triple_resamples": self.triple_resamples,
            "wall_time_s": self.wall_time_s,
        }


def solve_hsp(
    spec: GroupSpec,
    oracle,
    rng: np.random.Generator,
    path: str = "auto",
    backend: str = "structured",
    dim_budget: int = DEFAULT_DIM_BUDGET,
    planted: Subgroup | None = None,
) -> SolverReport:
    """Full dispatch of the hidden-subgroup recovery; see the module docstring.

    When the planted subgroup is supplied (for grading only; the solver
    itself never reads it), the report's success flag records whether the
    recovered generators generate exactly the planted subgroup.
    """
    t0 = time.perf_counter()
    counters = SolveCounters()
    recovered: tuple[GroupElement, ...] | None = None
    try:
        gens = _solve(spec, oracle, rng, path, backend, dim_budget, counters)
        recovered = tuple(gens)
        status = "ok"
    except (
        ResampleCapError,
        StabilizationError,
        DimensionBudgetError,
        ClosureBudgetError,
        SolverInternalError,
    ) as e:
        status = f"failed: {e}"
    success = None
    if planted is not None:
        success = recovered is not None and subgroups_equal(
            Subgroup(spec, recovered), planted
        )
    return SolverReport(
        spec=spec,
        recovered_generators=recovered,
        planted_generators=None if planted is None else tuple(planted.generators),
        success=success,
        status=status,
        oracle_queries=getattr(oracle, "query_count", 0),
        state_prep_runs=counters.state_prep_runs,
        triple_resamples=counters.triple_resamples,
        wall_time_s=time.perf_counter() - t0,
    )
