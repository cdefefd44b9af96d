"""Jordan symmetry reduction for doubly nonnegative SDPs."""

from .blockdiag import BlockDiagonalization, block_diagonalize, check_block_diagonalization
from .builders import build_qap_relaxation, build_theta_prime, er_graph, ev_bound
from .conic import ConicProblem
from .partition import Partition, admissible_subspace, certify_admissible
from .reduced import ReducedProblem, Solution, assemble_reduced, export_sdpa, lift, solve

__version__ = "0.1.0"

__all__ = [
    "BlockDiagonalization", "ConicProblem", "Partition", "ReducedProblem", "Solution", "admissible_subspace",
    "assemble_reduced", "block_diagonalize", "build_qap_relaxation", "build_theta_prime",
    "certify_admissible", "check_block_diagonalization", "er_graph", "ev_bound", "export_sdpa", "lift", "solve",
]
