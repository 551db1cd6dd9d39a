"""Level-3 rough-path calculus for Gaussian Volterra processes.

Subpackages by concern: exact truncated tensor algebra, covariance models
and kernels with exact-law sampling, rough-path lifts and variation norms,
an RDE engine with controlled-path calculus, kernel-transform operators,
correction/decay experiments, and the CLI harness that persists results.
"""

from .tensor_algebra import (
    LieElement,
    TruncatedTensor,
    group_inverse,
    homogeneous_norm,
    lie_bracket,
    tensor_exp,
    tensor_log,
    tensor_mul,
    unit,
)
from .gaussian_model import (
    CovarianceModel,
    GridSample,
    VolterraKernel,
    brownian_kernel,
    brownian_motion,
    covariance,
    dyadic_grid,
    fbm,
    riemann_liouville,
    riemann_liouville_kernel,
    sample_paths,
)
from .rough_lift import (
    GridRoughPath,
    VariationReport,
    coarsen,
    greedy_count,
    lift_piecewise_linear,
    lift_values,
    p_variation,
    variation_2d,
)
from .rde_engine import (
    ControlledPath,
    FlowSolution,
    ScalarMap,
    VectorFieldSet,
    controlled_compose,
    controlled_from_driver,
    controlled_from_flow,
    controlled_field_of_flow,
    controlled_product,
    get_field,
    malliavin_kernel,
    rough_integral,
    scalar_map,
    solve_rde,
)
from .volterra_ops import (
    HolderGridFunction,
    TwoParamGridFunction,
    h1_inner,
    k_star,
    k_star_batch,
    k_star_tensor,
    step_approx_l2_error,
    young_2d,
)
from .correction_lab import (
    CorrectionBreakdown,
    DecayStudy,
    IsometryResult,
    compensated_level2_decay,
    correction_residual_study,
    correction_terms,
    isometry_check,
    level3_decay,
    skorohod_riemann,
    u_term_two_ways,
    verify_ito_formula,
)
from .cli_harness import ExperimentConfig, ResultRow, run, validate

__version__ = "0.1.0"
