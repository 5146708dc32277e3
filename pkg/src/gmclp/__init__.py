"""Exact solver for covering location problems with signed customer weights."""

from .bnc import (
    SETTINGS,
    SearchStats,
    SolveOptions,
    build_candidate_pairs,
    plain_root_bound,
    primal_round_heuristic,
    propagate_P4,
    select_branch_variable,
    separate_two_customer,
    solve_bnc,
)
from .ingest import (
    WeightScheme,
    assign_weights,
    compute_coverage_radius,
    coverage_from_distances,
    generate_planar,
    load_pmed,
    parse_coverage_file,
    pmed_skeleton,
    write_coverage_file,
)
from .lp import (
    LpMode,
    LpModel,
    build_lp_relaxation,
    coverage_slack,
    dominance_gap_lower_bound,
    evaluate_aggregated_relaxed_objective,
    evaluate_relaxed_objective,
    simplex_solve,
    write_lp_format,
)
from .model import (
    Customer,
    Instance,
    Solution,
    brute_force_solve,
    complete_x_from_y,
    evaluate_integer_objective,
    validate_instance,
)
from .presolve import (
    PresolveOptions,
    apply_P1,
    apply_P3,
    build_dominance_pairs,
    constraint_reduction,
    isomorphic_aggregate,
    presolve_pipeline,
    sign_split_aggregate,
    transitive_prune,
)

__version__ = "0.1.0"
