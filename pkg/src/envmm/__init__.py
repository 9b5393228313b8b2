"""Worst-case quadratic projection over covariance-dominated ensembles."""

from .covariance import (
    BlockCovariance,
    blockcov_from_csv,
    blockcov_to_csv,
    compress,
    dense_subset_check,
    loewner_dominates,
    order_spectrum,
    push_forward,
    quadratic_form,
)
from .cost_minimizer import (
    CostSplit,
    HSOperator,
    NoMinimizer,
    NormalEquationSystem,
    SolutionSet,
    assemble_normal_equations,
    coercivity_margin,
    cost,
    cost_decomposed,
    cost_difference_bound,
    gram_spectrum,
    hsop_from_csv,
    hsop_to_csv,
    residual_norm,
    solution_set,
    solve_coercive,
    solve_pseudoinverse,
    system_cost,
)
from .envelope import (
    ClosureReport,
    EnvelopeReport,
    closure_regression,
    fit_baseline,
    is_member,
    sample_dominated,
    verify_extremal,
)
from .errors import (
    BadConfig,
    BadGrid,
    BadTruncation,
    DegenerateSpec,
    EmbeddingNotPSD,
    EnvmmError,
    NotCoercive,
    ShapeMismatch,
    WrongDimension,
)
from .measure_ensemble import (
    BaselineEnsemble,
    BaselineSpec,
    MeasureSpace,
    SourceEnsemble,
    ValidationReport,
    cross_moment,
    ensemble_distance,
    ensemble_from_csv,
    ensemble_norm,
    ensemble_to_csv,
    second_moment,
    validate_baseline,
)
from .representation import (
    EllipticConfig,
    ObservedEnsemble,
    RepresentationOperator,
    TruncatedRepresentation,
    apply,
    build_elliptic_representation,
    green_apply,
    green_functional,
    observed_second_moments,
    project_coefficients,
    representation_norms,
    truncate,
    truncation_residual,
)
from .stationary import (
    CovarianceSequence,
    LTIModel,
    OracleReport,
    SpectralDensity,
    WienerSymbol,
    add_baseline_spectrum,
    circulant_matrix,
    circulant_oracle,
    lti_blocks,
    sequence_from_csv,
    sequence_to_csv,
    spectral_density,
    spectral_margins,
    spectrum_from_csv,
    spectrum_to_csv,
    wiener_symbol,
    wss_envelope_test,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
