"""Numerics for sublinear G-expectations: G-heat solves, cylinder expectations,
path derivatives, Markovian G-BSDEs and scenario Monte Carlo."""

from .core import (
    CFLError,
    ConfigurationError,
    CylinderFunctional,
    DivergenceError,
    EtaContext,
    NumericsConfig,
    SpaceGrid,
    StepProcess,
    SublinearGenerator,
    TerminalFunction,
    TimePartition,
    default_domain,
    eval_generator,
)
from .cylinder import TensorBlowupError, conditional_g_expectation, g_expectation, g_mean_bounds
from .gbsde import (
    BsdeSolution,
    UnsupportedModeError,
    check_g_martingale,
    extract_bsde_processes,
    solve_markovian_gbsde,
    solve_wiener_bsde,
)
from .gheat import (
    MarkovDriver,
    ValueSurface,
    discrete_first_diff,
    discrete_second_diff,
    linear_heat_reference,
    solve_backward,
)
from .harness import CheckResult, corollary_check, example1_value, example2_value, example3_value
from .pathcalc import (
    CylinderPathProcess,
    Piece,
    a_g_operator,
    a_operator,
    d_t,
    d_x,
    d_x2,
    ito_residual,
    qn_process,
)
from .scenarios import (
    McConfig,
    PathBatch,
    SamplePath,
    Scenario,
    delta_n,
    estimate_expectation_lower,
    norm_h,
    norm_m,
    norm_m_tilde,
    norm_s,
    norm_w12p,
    norm_w_half,
    simulate,
)

__version__ = "0.1.0"
