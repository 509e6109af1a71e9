"""Dense state-vector simulator over registers indexed by Z_p values or group elements.

States are complex-double amplitude vectors over the product of a layout's
registers.  A register is either a Z_p value register or an element register
whose basis values are coordinate rows (group elements or coset labels),
kept sorted by their mixed-radix keys.  Element registers may cover the full
group or any closed support subset, which keeps the simulations exact while
staying inside the dimension budget.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import xgroup
from .xgroup import GroupElement, GroupSpec, Subgroup

DEFAULT_DIM_BUDGET = 1 << 24
DENSE_ORACLE_CAP = 1 << 18
ATOL = 1e-9


class DimensionBudgetError(RuntimeError):
    """Raised when a state would exceed the simulator's basis-state budget."""


# ---------------------------------------------------------------------------
# Registers and layouts
# ---------------------------------------------------------------------------


class ZpRegister:
    """Register holding a value in Z_p."""

    def __init__(self, name: str, p: int):
        self.name = name
        self.p = int(p)
        self.dim = int(p)

    def value(self, i: int) -> int:
        return int(i)


class ElementRegister:
    """Register indexed by coordinate rows, sorted by mixed-radix key."""

    def __init__(self, name: str, spec: GroupSpec, coords: np.ndarray):
        coords = np.ascontiguousarray(np.asarray(coords, dtype=np.int64))
        keys = xgroup.coords_keys(spec, coords)
        order = np.argsort(keys, kind="stable")
        self.name = name
        self.spec = spec
        self.coords = coords[order]
        self.keys = keys[order]
        if len(self.keys) > 1 and (np.diff(self.keys) <= 0).any():
            raise ValueError("duplicate basis values in register")
        self.dim = len(self.keys)
        self.coords.setflags(write=False)
        self.keys.setflags(write=False)

    @classmethod
    def full_group(cls, name: str, spec: GroupSpec) -> "ElementRegister":
        return cls(name, spec, xgroup.elements_array(spec))

    def value(self, i: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.coords[i])

    def positions_of(self, rows: np.ndarray) -> np.ndarray:
        keys = xgroup.coords_keys(self.spec, rows)
        pos = np.searchsorted(self.keys, keys)
        if pos.max(initial=-1) >= self.dim or not np.array_equal(self.keys[pos], keys):
            raise KeyError("value not present in register")
        return pos

    def index_of(self, g: GroupElement) -> int:
        return int(self.positions_of(np.asarray([g.coords], dtype=np.int64))[0])


Register = ZpRegister | ElementRegister


class RegisterLayout:
    def __init__(self, registers: Sequence[Register]):
        self.registers = tuple(registers)
        names = [r.name for r in self.registers]
        if len(set(names)) != len(names):
            raise ValueError("duplicate register names")
        self.dims = tuple(r.dim for r in self.registers)
        self.total = int(np.prod([1] + list(self.dims)))

    def axis(self, name: str) -> int:
        for i, r in enumerate(self.registers):
            if r.name == name:
                return i
        raise KeyError(f"no register named {name!r}")

    def register(self, name: str) -> Register:
        return self.registers[self.axis(name)]

    def decode(self, flat: int) -> tuple:
        vals = []
        for d in reversed(self.dims):
            vals.append(flat % d)
            flat //= d
        return tuple(r.value(i) for r, i in zip(self.registers, reversed(vals)))

    def encode(self, values: Sequence) -> int:
        flat = 0
        for r, v in zip(self.registers, values):
            if isinstance(r, ZpRegister):
                idx = int(v) % r.p
            else:
                idx = r.index_of(v if isinstance(v, GroupElement) else GroupElement(tuple(v)))
            flat = flat * r.dim + idx
        return flat


class StateVector:
    """Unit-norm amplitude vector over a register layout."""

    def __init__(self, layout: RegisterLayout, amps: np.ndarray):
        amps = np.asarray(amps, dtype=np.complex128).reshape(-1)
        if amps.size != layout.total:
            raise ValueError("amplitude count does not match layout dimension")
        self.layout = layout
        self.amps = amps

    @property
    def shaped(self) -> np.ndarray:
        return self.amps.reshape(self.layout.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


@dataclass
class MeasurementOutcome:
    value: object
    probability: float
    collapsed: StateVector


def check_budget(total: int, dim_budget: int) -> None:
    if total > dim_budget:
        raise DimensionBudgetError(f"state dimension {total} exceeds budget {dim_budget}")


def uniform_state(
    layout: RegisterLayout,
    indices: np.ndarray | Sequence[int],
    dim_budget: int = DEFAULT_DIM_BUDGET,
) -> StateVector:
    """Equal-amplitude unit state supported on the given flat basis indices."""
    check_budget(layout.total, dim_budget)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise ValueError("empty subset")
    amps = np.zeros(layout.total, dtype=np.complex128)
    amps[indices] = 1.0 / math.sqrt(indices.size)
    return StateVector(layout, amps)


def uniform_state_over_values(
    layout: RegisterLayout, value_tuples: Sequence[Sequence], dim_budget: int = DEFAULT_DIM_BUDGET
) -> StateVector:
    return uniform_state(layout, [layout.encode(v) for v in value_tuples], dim_budget)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _omega_powers(p: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(p) / p)


def omega_power(p: int, e: int) -> complex:
    return complex(_omega_powers(p)[e % p])


@lru_cache(maxsize=None)
def fourier_matrix(p: int) -> np.ndarray:
    """F[a, b] = omega^(a*b) / sqrt(p) with omega = exp(2*pi*i/p); unitary."""
    w = _omega_powers(p)
    ab = np.outer(np.arange(p), np.arange(p)) % p
    return w[ab] / math.sqrt(p)


def _apply_axis_matrix(state: StateVector, axis: int, m: np.ndarray) -> StateVector:
    moved = np.moveaxis(state.shaped, axis, 0)
    out = np.tensordot(m, moved, axes=(1, 0))
    return StateVector(state.layout, np.moveaxis(out, 0, axis).reshape(-1))


def qft_zp(state: StateVector, reg: str) -> StateVector:
    """|a> -> p^(-1/2) sum_b omega^(ab) |b> on a dimension-p register."""
    r = state.layout.register(reg)
    if not isinstance(r, ZpRegister):
        raise ValueError(f"register {reg!r} is not a Z_p register")
    return _apply_axis_matrix(state, state.layout.axis(reg), fourier_matrix(r.p))


def _permutation_positions(reg: ElementRegister, g: GroupElement) -> np.ndarray | None:
    """Positions of value*g per basis value, or None if the support moves."""
    mapped = xgroup.mul_rows(reg.spec, reg.coords, np.asarray(g.coords, dtype=np.int64))
    keys = xgroup.coords_keys(reg.spec, mapped)
    if np.array_equal(np.sort(keys), reg.keys):
        return np.searchsorted(reg.keys, keys)
    return None


def right_multiply(state: StateVector, reg: str, g: GroupElement) -> StateVector:
    """Basis map |h> -> |h*g| on an element register; norm preserving.

    When the register's value set is closed under right multiplication by g
    this is a permutation of the existing basis; otherwise the register is
    relabeled with the translated (still sorted) support.
    """
    layout = state.layout
    axis = layout.axis(reg)
    r = layout.register(reg)
    if not isinstance(r, ElementRegister):
        raise ValueError(f"register {reg!r} is not an element register")
    mapped = xgroup.mul_rows(r.spec, r.coords, np.asarray(g.coords, dtype=np.int64))
    keys = xgroup.coords_keys(r.spec, mapped)
    moved = np.moveaxis(state.shaped, axis, 0)
    if np.array_equal(np.sort(keys), r.keys):
        pos = np.searchsorted(r.keys, keys)
        out = np.empty_like(moved)
        out[pos] = moved
        return StateVector(layout, np.moveaxis(out, 0, axis).reshape(-1))
    order = np.argsort(keys, kind="stable")
    new_reg = ElementRegister(r.name, r.spec, mapped[order])
    regs = list(layout.registers)
    regs[axis] = new_reg
    out = moved[order]
    return StateVector(RegisterLayout(regs), np.moveaxis(out, 0, axis).reshape(-1))


def controlled_z_power(state: StateVector, ctrl: str, tgt: str, sign: int = 1) -> StateVector:
    """|i>|h> -> |i>|h * z^(sign*i)>."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    layout = state.layout
    c_ax, t_ax = layout.axis(ctrl), layout.axis(tgt)
    creg, treg = layout.register(ctrl), layout.register(tgt)
    if not isinstance(creg, ZpRegister) or not isinstance(treg, ElementRegister):
        raise ValueError("need a Z_p control and an element target")
    step = xgroup.z_gen(treg.spec, sign)
    pos = _permutation_positions(treg, step)
    if pos is None:
        raise ValueError("target register support is not closed under z")
    moved = np.moveaxis(state.shaped, (c_ax, t_ax), (0, 1)).copy()
    perm = np.arange(treg.dim)
    for i in range(1, creg.dim):
        perm = pos[perm]
        block = np.empty_like(moved[i])
        block[perm] = moved[i]
        moved[i] = block
    out = np.moveaxis(moved, (0, 1), (c_ax, t_ax))
    return StateVector(layout, out.reshape(-1))


def _axis_probabilities(state: StateVector, axis: int) -> np.ndarray:
    moved = np.moveaxis(state.shaped, axis, 0)
    flat = moved.reshape(moved.shape[0], -1)
    return (np.abs(flat) ** 2).sum(axis=1)


def measure(
    state: StateVector, reg: str, rng: np.random.Generator | None
) -> MeasurementOutcome | list[MeasurementOutcome]:
    """Projective measurement of one register with Born probabilities.

    With a real generator, samples one outcome and returns it with the
    renormalized collapsed state.  With rng=None, returns the full exact
    outcome distribution as a list of outcomes.
    """
    layout = state.layout
    axis = layout.axis(reg)
    r = layout.register(reg)
    probs = _axis_probabilities(state, axis)

    def collapse(idx: int) -> StateVector:
        moved = np.moveaxis(state.shaped, axis, 0)
        out = np.zeros_like(moved)
        out[idx] = moved[idx] / math.sqrt(probs[idx])
        return StateVector(layout, np.moveaxis(out, 0, axis).reshape(-1))

    if rng is None:
        return [
            MeasurementOutcome(r.value(i), float(probs[i]), collapse(i))
            for i in range(r.dim)
            if probs[i] > 1e-12
        ]
    idx = int(rng.choice(r.dim, p=probs / probs.sum()))
    return MeasurementOutcome(r.value(idx), float(probs[idx]), collapse(idx))


def discard_register(state: StateVector, reg: str) -> StateVector:
    """Drop a register that is in a definite basis state."""
    layout = state.layout
    axis = layout.axis(reg)
    probs = _axis_probabilities(state, axis)
    live = np.flatnonzero(probs > 1e-12)
    if len(live) != 1:
        raise ValueError(f"register {reg!r} is not in a definite basis state")
    moved = np.moveaxis(state.shaped, axis, 0)
    sub = moved[live[0]] / math.sqrt(probs[live[0]])
    regs = [r for i, r in enumerate(layout.registers) if i != axis]
    return StateVector(RegisterLayout(regs), sub.reshape(-1))


def inner_product(s1: StateVector, s2: StateVector) -> complex:
    """<s1|s2>, aligning element registers by basis value where layouts differ."""
    l1, l2 = s1.layout, s2.layout
    if len(l1.registers) != len(l2.registers):
        raise ValueError("layouts have different register counts")
    idx1, idx2 = [], []
    for r1, r2 in zip(l1.registers, l2.registers):
        if r1.name != r2.name:
            raise ValueError("register names do not match")
        if isinstance(r1, ZpRegister):
            if not isinstance(r2, ZpRegister) or r1.p != r2.p:
                raise ValueError("incompatible registers")
            idx1.append(np.arange(r1.dim))
            idx2.append(np.arange(r2.dim))
        else:
            assert isinstance(r2, ElementRegister)
            common = np.intersect1d(r1.keys, r2.keys, assume_unique=True)
            if common.size == 0:
                return 0.0 + 0.0j
            idx1.append(np.searchsorted(r1.keys, common))
            idx2.append(np.searchsorted(r2.keys, common))
    sub1 = s1.shaped[np.ix_(*idx1)]
    sub2 = s2.shaped[np.ix_(*idx2)]
    return complex(np.vdot(sub1, sub2))


def states_match(s1: StateVector, s2: StateVector, atol: float = ATOL) -> bool:
    """Equality up to global phase: |<s1|s2>| == 1 within atol."""
    return abs(abs(inner_product(s1, s2)) - 1.0) <= atol


def state_to_json(state: StateVector, limit: int = 10**4) -> str:
    """Debug dump {index, values, re, im} of the nonzero amplitudes."""
    nz = np.flatnonzero(np.abs(state.amps) > 1e-12)
    if len(nz) > limit:
        raise ValueError(f"state has {len(nz)} nonzeros; dump limited to {limit}")
    entries = [
        {
            "index": int(i),
            "values": [list(v) if isinstance(v, tuple) else v for v in state.layout.decode(int(i))],
            "re": float(state.amps[i].real),
            "im": float(state.amps[i].imag),
        }
        for i in nz
    ]
    return json.dumps(entries)


# ---------------------------------------------------------------------------
# Coset phase states and their preparation circuit
# ---------------------------------------------------------------------------


def coset_phase_state(
    a: GroupElement,
    h: Subgroup,
    u: int,
    dim_budget: int = DEFAULT_DIM_BUDGET,
) -> StateVector:
    """Reference constructor for (|H| p)^(-1/2) sum_{h in H, i} omega^(-u*i) |a h z^i>.

    Built directly, without simulation.  The state is the eigenvector of
    right multiplication by z with eigenvalue omega^u, supported on the
    coset a*H*<z>.  When z lies in H the phase sum cancels for u != 0.
    """
    spec = h.spec
    p = int(spec.p)
    u %= p
    helems = h.elements_as_array()
    ah = xgroup.mul_rows(spec, np.asarray([a.coords], dtype=np.int64), helems)
    blocks = np.tile(ah, (p, 1))
    # z is central: right multiplication by z^i only shifts the last coordinate.
    shifts = np.repeat(np.arange(p, dtype=np.int64), len(ah))
    blocks[:, -1] = (blocks[:, -1] + shifts) % p
    amps = np.repeat(_omega_powers(p)[(-u * np.arange(p)) % p], len(ah))
    keys = xgroup.coords_keys(spec, blocks)
    uniq, invmap = np.unique(keys, return_inverse=True)
    acc = np.zeros(len(uniq), dtype=np.complex128)
    np.add.at(acc, invmap, amps)
    norm = np.linalg.norm(acc)
    if norm < 1e-9:
        raise ValueError("zero amplitude state: z lies in H and u != 0")
    check_budget(len(uniq), dim_budget)
    reg = ElementRegister("g", spec, xgroup.keys_coords(spec, uniq))
    return StateVector(RegisterLayout([reg]), acc / norm)


@dataclass
class CosetPhaseDraw:
    """One run of the phase-state preparation circuit."""

    a: GroupElement
    u: int
    state: StateVector
    probability: float


class SubgroupOracle:
    """Minimal oracle interface over a known subgroup (no query counting).

    The hiding function maps g to the canonical label of its left coset gH.
    Coherent evaluations hand the simulator the full value table (or a
    sampled collapse) in one oracle use.
    """

    def __init__(self, hidden: Subgroup):
        self._hidden = hidden
        self.spec = hidden.spec
        self._table: np.ndarray | None = None

    @property
    def n_cosets(self) -> int:
        return self.spec.order // self._hidden.order

    def query(self, g: GroupElement) -> tuple[int, ...]:
        return self._hidden.label(g)

    def coherent_many(self, rows: np.ndarray) -> np.ndarray:
        """Label keys for each coordinate row (one coherent evaluation)."""
        spec = self.spec
        labels = [self._hidden.label(GroupElement(tuple(int(v) for v in row))) for row in rows]
        return xgroup.coords_keys(spec, np.asarray(labels, dtype=np.int64))

    def coherent_table(self) -> np.ndarray:
        """Label keys aligned with the full group in lex order.

        The labeling is deterministic for the handle's lifetime, so the
        table is computed once and replayed (each use still counts as one
        coherent evaluation in counting subclasses).
        """
        if self._table is None:
            self._table = self.coherent_many(xgroup.elements_array(self.spec))
        else:
            self.count_extra_query()
        return self._table

    def coherent_sample(self, rng: np.random.Generator) -> tuple[GroupElement, np.ndarray]:
        """Measured oracle register: a uniformly random coset, as (label rep, members)."""
        g = xgroup.random_element(self.spec, rng)
        a = GroupElement(self.query(g))
        return a, self.coset_members(a)

    def coset_members(self, g: GroupElement) -> np.ndarray:
        return self._hidden.coset_members(g)

    def count_extra_query(self) -> None:
        """Hook for callers replaying a cached coherent evaluation."""


def _as_oracle(oracle_or_subgroup) -> SubgroupOracle:
    if isinstance(oracle_or_subgroup, Subgroup):
        return SubgroupOracle(oracle_or_subgroup)
    return oracle_or_subgroup


def _phase_circuit(state: StateVector) -> StateVector:
    state = qft_zp(state, "u")
    state = controlled_z_power(state, "u", "g", sign=-1)
    return qft_zp(state, "u")


def _restricted_start(
    spec: GroupSpec, a_members: np.ndarray, dim_budget: int
) -> tuple[RegisterLayout, np.ndarray]:
    """Layout (u, g) with g restricted to the z-closure of the coset members."""
    p = int(spec.p)
    blocks = np.tile(a_members, (p, 1))
    shifts = np.repeat(np.arange(p, dtype=np.int64), len(a_members))
    blocks[:, -1] = (blocks[:, -1] + shifts) % p
    support = np.unique(xgroup.coords_keys(spec, blocks))
    check_budget(p * len(support), dim_budget)
    greg = ElementRegister("g", spec, xgroup.keys_coords(spec, support))
    layout = RegisterLayout([ZpRegister("u", p), greg])
    start = greg.positions_of(a_members)  # u = 0 block
    return layout, start


def sample_coset_phase(
    oracle_or_subgroup,
    rng: np.random.Generator,
    dim_budget: int = DEFAULT_DIM_BUDGET,
) -> CosetPhaseDraw:
    """Run the phase-state preparation circuit once.

    Starting from sum_g |0>|g>|f(g)>, the oracle register is measured and
    discarded (collapsing the group register to a uniform coset state |aH>
    for a random a), then a Fourier transform on the Z_p register, a
    controlled multiplication by z^(-i), and a final Fourier transform leave
    (1/sqrt(p)) sum_u |u>|aHG_u>.  Measuring the first register yields u and
    the collapsed group register, which equals coset_phase_state(a, H, u) up
    to global phase.

    The three-register state is materialized densely while it stays small
    (at most DENSE_ORACLE_CAP basis states and within the budget); beyond
    that the oracle measurement is performed analytically (its outcome
    distribution is exactly uniform over cosets) and the circuit runs on the
    support a*H*<z>, which the remaining operations never leave.  The two
    routes produce identical outcome distributions and collapsed states.
    """
    oracle = _as_oracle(oracle_or_subgroup)
    spec = oracle.spec
    p = int(spec.p)
    dense_total = p * spec.order * oracle.n_cosets
    if dense_total <= min(dim_budget, DENSE_ORACLE_CAP):
        table = oracle.coherent_table()
        label_keys = np.unique(table)
        freg = ElementRegister("f", spec, xgroup.keys_coords(spec, label_keys))
        greg = ElementRegister.full_group("g", spec)
        layout = RegisterLayout([ZpRegister("u", p), greg, freg])
        gpos = np.arange(spec.order, dtype=np.int64)
        fpos = np.searchsorted(label_keys, table)
        flat = gpos * len(label_keys) + fpos  # u index 0
        state = uniform_state(layout, flat, dim_budget)
        out = measure(state, "f", rng)
        a = GroupElement(out.value)
        state = discard_register(out.collapsed, "f")
    else:
        a, members = oracle.coherent_sample(rng)
        layout, start = _restricted_start(spec, members, dim_budget)
        state = uniform_state(layout, start, dim_budget)
    state = _phase_circuit(state)
    mu = measure(state, "u", rng)
    return CosetPhaseDraw(a, int(mu.value), discard_register(mu.collapsed, "u"), mu.probability)


def coset_phase_outcomes(
    oracle_or_subgroup,
    a: GroupElement,
    dim_budget: int = DEFAULT_DIM_BUDGET,
) -> list[CosetPhaseDraw]:
    """Exact outcome distribution of the circuit for a fixed oracle outcome a."""
    oracle = _as_oracle(oracle_or_subgroup)
    spec = oracle.spec
    members = oracle.coset_members(a)
    layout, start = _restricted_start(spec, members, dim_budget)
    state = uniform_state(layout, start, dim_budget)
    state = _phase_circuit(state)
    return [
        CosetPhaseDraw(a, int(o.value), discard_register(o.collapsed, "u"), o.probability)
        for o in measure(state, "u", None)
    ]
