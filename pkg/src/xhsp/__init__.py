"""Hidden subgroup problem solver and verifier for extraspecial p-groups.

Layers: exact prime-field arithmetic (modp), normal-form group algebra
(xgroup), a dense state-vector simulator (simq), the reduction pipeline and
solver (hspcore), and a command-line harness (cli).
"""

from .modp import FpMatrix, Prime, inv, kernel_basis, solve_quadratic, sqrt_mod
from .xgroup import (
    BarElement,
    FactorType,
    GroupElement,
    GroupSpec,
    Subgroup,
    apply_phi,
    bar,
    coset_label,
    inverse,
    multiply,
    parse_group_spec,
    phi_twist,
    power,
    subgroup_closure,
)
from .simq import (
    MeasurementOutcome,
    RegisterLayout,
    StateVector,
    coset_phase_state,
    measure,
    qft_zp,
    right_multiply,
    sample_coset_phase,
    uniform_state,
)
from .hspcore import (
    HidingTriple,
    OracleHandle,
    SolverReport,
    abelian_hsp,
    draw_hiding_triple,
    find_hz,
    find_witness,
    make_oracle,
    solve_hsp,
    verify_witness,
    witness_fraction,
)

__all__ = [name for name in dir() if not name.startswith("_")]
