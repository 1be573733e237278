"""Niche-weighted CMA-ES for multimodal optimization, with a tunable
composite benchmark generator and evaluation harness."""

from .benchmarks import (
    BASE_FUNCTIONS,
    GeneratedProblem,
    GenerationError,
    ProblemSpec,
    base_eval,
    composite_evaluator,
    dump_problem,
    instantiate_problem,
    load_problem,
    random_rotation,
    reference_table,
)
from .harness import (
    RunConfig,
    RunRecord,
    aggregate_records,
    emit_csv,
    emit_trace,
    read_csv,
    run_single,
    run_suite,
    suite_plan,
)
from .metrics import (
    DetectionReport,
    RunMetrics,
    epsilon_f,
    f1,
    match_peaks,
    overall_score,
    precision_recall,
)
from .niching import NicheSet, composite_fitness, hardness, niche_weights, niching_radius
from .solver import Archive, NichingCmaEs
from .strategy import (
    CmaParams,
    CmaState,
    Candidate,
    CovarianceDegenerateError,
    TerminationConfig,
    check_termination,
    derive_params,
    expected_norm,
    init_state,
    repair_covariance,
    sample_population,
    step,
)

__version__ = "0.1.0"
