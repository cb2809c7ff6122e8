"""Nonlocal perimeter energies on uniform grids.

Evaluate the pair-interaction total variation J(u) for even nonnegative
kernels (including fractional ones), certify minimizers through pair
calibrations, solve the boundary-datum minimization problem, and sweep the
concentration parameter of rescaled kernels against the anisotropic surface
tension of the local limit.
"""

from .calibration import (
    Calibration,
    CertificateReport,
    NormalConditionReport,
    antisymmetrize,
    certificate,
    check_divergence,
    check_normal_condition,
    halfspace_sign,
)
from .energy import (
    CoareaDecomposition,
    EnergyBreakdown,
    coarea_decompose,
    energy,
    get_engine,
    perimeter_K,
    truncate,
)
from .errors import NlperimError, NumericalError, SingularityError, ValidationError
from .gamma import (
    GammaSweepReport,
    J0_polyhedral,
    LimitNorm,
    cross_term_bound,
    cross_term_difference,
    gamma_sweep,
    halfspace_facet_in_ball,
    sigma_K,
    sigma_K_radial,
    unit_ball_measure,
)
from .grid import (
    Ball,
    Box,
    DomainSpec,
    Grid,
    ScalarField,
    constant_field,
    domain_ball,
    domain_box,
    field_from_values,
    indicator_halfspace,
    load_field_values,
    make_grid,
    random_admissible,
    save_field_csv,
    superlevel,
    symdiff_measure,
)
from .kernels import (
    FirstMomentReport,
    KernelSpec,
    SummabilityReport,
    check_summability,
    custom_kernel,
    eval_kernel,
    first_moment,
    fractional_kernel,
    indicator_kernel,
    radial_profile_kernel,
    rescale,
)
from .solve import (
    RoundResult,
    SolveOptions,
    SolveReport,
    minimize,
    monotonicity_defect,
    round_by_coarea,
    smoothed_energy,
    smoothed_gradient,
)

__version__ = "0.1.0"
