"""Class-imbalanced linear classification on high-dimensional Gaussian mixtures.

The package pairs exact margin-problem solvers (quadratic programs and
gradient descent) with closed-form approximations of their test errors, plus
the tuning formulas those approximations yield. See the README for the CLI
and the acceptance suite.
"""

from .instances import (
    Dataset,
    ProblemInstance,
    expected_kernel,
    kernel_concentration,
    kernel_matrix,
    load_dataset_csv,
    make_instance,
    sample_test,
    sample_train,
    save_dataset_csv,
)
from .qfunc import q_function, q_inverse
from .analytic import (
    AnalyticReport,
    ApproxCoefficients,
    ScoreStatistics,
    analytic_error_report,
    cdt_coefficients,
    class_error_mc,
    la_coefficients,
    ma_approximation_coefficients,
    ma_coefficients,
    ma_tightness_margin,
    mm_coefficients,
    pairwise_error,
    pairwise_matrix,
    per_class_errors_mc,
    reduced_kernel,
    reduced_qp_coefficients,
    score_statistics,
)
from .limits import (
    cdt_limit_statistics,
    la_limit_statistics,
    limit_score_statistics,
    ma_limit_statistics,
)
from .tuners import (
    LONGTAIL_10_LISTED,
    LONGTAIL_10_MODIFIED,
    cdt_failure_instance,
    cdt_limit_worst_error,
    exp_longtail_profile,
    geometric_profile,
    la_iota_star,
    ma_delta_star,
    wcelb_la,
    wcelb_la_opt,
    wcelb_ma,
    wcelb_ma_opt,
    wcelb_mm,
)
from .margin import (
    CertificationError,
    InfeasibleProblemError,
    KernelSolution,
    MarginProblem,
    Predictor,
    decision_scores,
    load_predictor_json,
    predict,
    save_predictor_json,
    solve_kernel,
    solve_primal,
    training_error,
)
from .gd import (
    DivergenceError,
    LossSpec,
    Trajectory,
    direction_cosine,
    gd_train,
    loss_value,
    save_trajectory_csv,
)
from .evaluation import (
    ErrorReport,
    evaluate,
    evaluate_scores,
    merge_reports,
    pairwise_empirical,
    sandwich_check,
    save_confusion_csv,
)
from .kernel_lab import (
    distance_from_theory,
    kernel_classify,
    load_features,
    rbf_cross,
    rbf_kernel,
    subsample_profile,
)

__version__ = "0.1.0"
