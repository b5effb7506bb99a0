"""Classical emulation of near-term quantum linear-system solvers."""

__version__ = "0.1.0"

from .pauli import PauliString, ProductState, pauli_mul, canonical_form, expectation_product_state  # noqa: E402
from .backends import DenseState, SymbolicState, DenseOperatorMatrix, PauliSum, overlap, haar_unitary, evolve_exp  # noqa: E402
from .operators import (  # noqa: E402
    DecomposedOperator,
    LinearSystem,
    build_H,
    gen_haar_sum_system,
    gen_pauli_sum_system,
    load_system,
    save_system,
    spectral_bounds,
)
from .measurement import Estimator  # noqa: E402
from .solver import AnsatzTree, SolveConfig, Subspace, cqs_solve, solve_qp  # noqa: E402
