"""Explicit commutator factorizations T = SU - US on sequence spaces.

The package builds operators as expression trees over a block
decomposition of the coordinates, factors them as commutators through
several routes (shift series, corner splitting, coarsened selection,
compact clustering, finite block models, similarity pipelines), and
attaches machine-checkable residual certificates to every witness.
"""

from .decomposition import (C1, LAMBDA_BOUND, SERIES_CONSTANT,
                            SHIFT_POWER_BOUND, CantorDecomposition,
                            CoarsenedDecomposition, DyadicDecomposition,
                            FiniteModel, InterleavedDecomposition,
                            PairingDecomposition, RelabeledDecomposition,
                            apply_left_shift, apply_partial_sum_proj,
                            apply_proj, apply_right_shift, block_of,
                            count_below, decomp_from_json,
                            decomp_from_payload, make_decomposition,
                            max_block, verify_shift_identities)
from .errors import (CommutantError, MarginError, OracleError, ParseError,
                     PreconditionError)
from .expr import (Add, BlockPairSwap, BlockParityProj, Compose, Identity,
                   LeftShift, NormCertificate, OperatorExpr, PartialSumProj,
                   Proj, RightShift, Scale, ShiftSeries, Sparse, add,
                   commutator_apply, commutator_residual, compose,
                   expr_from_json, expr_from_payload, is_block_preserving,
                   left_block_bound, left_shift, neumann_apply, norm_upper,
                   norm_upper_value, partial_sum_proj, proj,
                   right_block_bound, right_shift, shift_series)
from .factorize import (CommutatorWitness, DecayProfile, basis_probes,
                        coarsen_and_factor, compact_factor,
                        compact_side_factor, complement_proj, corner_factor,
                        easy_factor, ideal_inclusion_check, left_tail,
                        right_tail, select_blocks, select_report,
                        small_norm_block_basis, tail_profile,
                        witness_from_json)
from .finite import (Block2x2, assemble_direct_sum, block2x2_from_json,
                     geometric_iteration_bound, mat_norm,
                     shift_corner_factor, sylvester_dense_oracle,
                     sylvester_neumann, trace_obstruction)
from .generators import (GENERATORS, blocksparse_operator,
                         compactlike_operator, permutation_operator)
from .similarity import (Involution, SimilarityChain, certificate_from_json,
                         corner_shift_similarity, ell1_main_pipeline,
                         even_odd_swap_data, offdiag_transform,
                         preserve_subspace_heuristic, swap_involution)
from .sparse import (SparseOperator, op_add, op_apply, op_compose,
                     op_from_json, op_from_payload, op_norm_bound,
                     op_norm_exact, op_scale)
from .vectors import (SeqVector, iter_basis, probe_vectors, vec_from_json,
                      vec_norm)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
