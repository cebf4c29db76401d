"""Sampling, deconvolution and blind deconvolution of diffused graph signals."""

from .blind import (
    BlindProblem,
    BlindResult,
    MMOptions,
    blind_recover,
    blind_recover_subspace,
    metric_rmse_blind,
    rank_one_known_inputs,
    rank_one_plain,
    rank_one_subspace_known_inputs,
)
from .conic import ConeProgram, SolveResult, build_mm_sdp, build_weighted_l1, solve
from .errors import *  # noqa: F401,F403
from .filter_id import (
    FilterEstimate,
    KnownInputProblem,
    exponential_weights,
    identify_sparse_filter,
    identify_subspace_filter,
)
from .graph import (
    DiffusedSignal,
    Dictionary,
    GraphFilter,
    GraphShift,
    apply_filter,
    eigendecompose,
    filter_matrix,
    generate_graph,
    generate_problem_instance,
    lifted_operator_p,
    lifted_operator_t,
    shift_from_matrix,
    vandermonde,
)
from .recovery import (
    KnownFilterProblem,
    ObservationModel,
    RecoveryResult,
    localize_support,
    recover_l1,
    recover_reweighted,
    reduce_known_inputs,
    subspace_input_wrap,
)
from .sampling import (
    CoherenceReport,
    SelectionSet,
    coherence_rho,
    exhaustive_sample,
    greedy_sample,
    random_sample,
    spark_check,
)

__version__ = "0.1.0"
