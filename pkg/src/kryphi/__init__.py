"""Krylov approximation of exp(tA)v and phi_p(tA)v with defect-based error control.

The package approximates the action of the matrix exponential and the
associated phi-functions in a polynomial Krylov subspace and provides the
full family of defect-based a-posteriori error bounds and estimates: the
defect integral and its quadrature, proven closed-form upper bounds, the
generalized-residual and effective-order estimates, accuracy criteria, the
small-time expansion machinery, and an adaptive substepping propagator.
"""

from .asymptotics import (
    AsymptoticExpansion,
    PowerSums,
    alpha_coeffs,
    asymptotic_defect_norm,
    avg_var_stats,
    effective_order_exact,
    kappa,
    log_asymptotic_defect_norm,
    power_sums,
    rho_coeffs,
)
from .bench import (
    ExperimentConfig,
    ResultRow,
    build_problem,
    emit_defect_trace,
    read_results_csv,
    run_experiment,
    write_results_csv,
)
from .estimators import (
    ESTIMATOR_NAMES,
    DefectEvaluation,
    DefectIntegral,
    ErrorEstimate,
    EstimatorUnavailableError,
    accuracy_criterion_1,
    accuracy_criterion_2,
    bound_exact_real,
    bound_factorial,
    bound_real_part,
    defect,
    defect_integral_quadrature,
    defect_log_abs,
    est_effective_order,
    est_generalized_residual,
    evaluate_defect,
    evaluate_estimator,
    quadrature_estimate,
    rho12_from_traces,
)
from .krylov import (
    KrylovDecomposition,
    OrthPolicy,
    arnoldi,
    decompose,
    decomposition_residual,
    lanczos,
    orthogonality_level,
)
from .linops import (
    LinearOperator,
    MatrixMarketError,
    SparseMatrixCSR,
    build_convection_diffusion_2d,
    build_laplacian_1d,
    build_schrodinger_double_well,
    dense_reference_phi,
    load_matrix_market,
    matvec,
    operator_from_matrix,
    save_matrix_market,
    scale_operator,
    to_dense,
)
from .quadrature import QuadratureResult, adaptive_gauss_kronrod
from .smalldense import (
    AugmentedHessenberg,
    NodeSet,
    corner_phi,
    dd_exp_scaled,
    divided_differences_exp,
    expm,
    phi_action,
    ritz_values,
)
from .stepper import (
    PropagationReport,
    StepControl,
    StepUnboundedError,
    SubStep,
    lucky_breakdown_check,
    propagate,
    solve_t_of_m,
    solve_t_of_m_detailed,
)

__version__ = "0.1.0"
