"""Multifractal analysis of almost-multiplicative cylinder weights on
products of two full shifts, and of their projections to self-affine
Sierpinski carpets.

The package computes the two pressure functions of such a weight (the
Birkhoff pressure ``T`` and the Gibbs pressure ``beta``), their concave
conjugates (the multifractal spectra), local dimensions of the associated
Gibbs-like measures by exact tilted sampling, and geometric realizations on
the torus — each quantity along at least two independent routes so results
can be cross-verified.
"""

from .io_utils import TOOL_NAME, TOOL_VERSION
from .symbolic import (
    Ball,
    CapExceededError,
    CellSystem,
    DEFAULT_ENUMERATION_CAP,
    ProductWord,
    ball,
    depth_map,
)
from .weights import (
    AmEstimate,
    ConstantCellWeight,
    CylinderWeight,
    LetterRowWeight,
    MatrixCocycleWeight,
    RowSumRowWeight,
    ShiftedWeight,
    SkewProductWeight,
    UniformRowWeight,
    estimate_am_constant,
    make_constant_cell,
    make_matrix_cocycle,
    make_skew_product,
    normalize_to_gibbs,
    row_sum_log_any,
)
from .pressure import (
    Extrapolation,
    PressureCurve,
    closed_form_T,
    closed_form_beta,
    extrapolate_pressure,
    finite_T,
    finite_beta,
    finite_pressure,
    log_total_mass,
    pressure_curve,
    row_sum,
)
from .spectra import (
    Spectrum,
    birkhoff_spectrum_carpet,
    legendre,
    legendre_involution_check,
    lq_spectrum_empirical,
    mcmullen_dimension,
    support_dimension,
)
from .gibbs import (
    AuxiliaryWeight,
    McEstimate,
    SamplePath,
    VARIANT_PSI_Q,
    VARIANT_PSI_TILDE_Q,
    ball_mass,
    local_dimension_mc,
    make_auxiliary,
    sample_path,
)
from .carpet import (
    CarpetRender,
    P3Report,
    birkhoff_average_on_carpet,
    box_count_tau,
    carpet_digits,
    check_P1,
    check_P2,
    check_P3,
    p3_scan,
    project_numerators,
    project_point,
    render_measure,
    write_grid_csv,
    write_pgm16,
)
from .reference import (
    DEFAULT_DEPTH_SCHEDULE,
    default_config,
    default_q_grid,
    random_depth2_weight,
    reference_system,
    reference_weight,
    zero_potential_weight,
)
from .config import (
    ConfigError,
    ExperimentConfig,
    config_sha256,
    load_config,
    parse_config,
)
from .verify import CriterionResult, run_all

__version__ = TOOL_VERSION

__all__ = [
    "AmEstimate",
    "AuxiliaryWeight",
    "Ball",
    "CapExceededError",
    "CarpetRender",
    "CellSystem",
    "ConfigError",
    "ConstantCellWeight",
    "CriterionResult",
    "CylinderWeight",
    "DEFAULT_DEPTH_SCHEDULE",
    "DEFAULT_ENUMERATION_CAP",
    "ExperimentConfig",
    "Extrapolation",
    "LetterRowWeight",
    "MatrixCocycleWeight",
    "McEstimate",
    "P3Report",
    "PressureCurve",
    "ProductWord",
    "RowSumRowWeight",
    "SamplePath",
    "ShiftedWeight",
    "SkewProductWeight",
    "Spectrum",
    "TOOL_NAME",
    "TOOL_VERSION",
    "UniformRowWeight",
    "VARIANT_PSI_Q",
    "VARIANT_PSI_TILDE_Q",
    "ball",
    "ball_mass",
    "birkhoff_average_on_carpet",
    "birkhoff_spectrum_carpet",
    "box_count_tau",
    "carpet_digits",
    "check_P1",
    "check_P2",
    "check_P3",
    "closed_form_T",
    "closed_form_beta",
    "config_sha256",
    "default_config",
    "default_q_grid",
    "depth_map",
    "estimate_am_constant",
    "extrapolate_pressure",
    "finite_T",
    "finite_beta",
    "finite_pressure",
    "legendre",
    "legendre_involution_check",
    "load_config",
    "local_dimension_mc",
    "log_total_mass",
    "lq_spectrum_empirical",
    "make_auxiliary",
    "make_constant_cell",
    "make_matrix_cocycle",
    "make_skew_product",
    "mcmullen_dimension",
    "normalize_to_gibbs",
    "p3_scan",
    "parse_config",
    "pressure_curve",
    "project_numerators",
    "project_point",
    "random_depth2_weight",
    "reference_system",
    "reference_weight",
    "render_measure",
    "row_sum",
    "row_sum_log_any",
    "run_all",
    "sample_path",
    "support_dimension",
    "write_grid_csv",
    "write_pgm16",
    "zero_potential_weight",
]
