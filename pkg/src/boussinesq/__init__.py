"""Spectral solver for ``u_tt - L u_tt + A u = f(u)`` on periodic boxes."""

from .errors import (BoussinesqError, ConfigError, GridError, MaxItersExceeded, NonFiniteError,
                     NotElliptic, SideMismatch)
from .grid import (EllipticForm, Field, SpectralGrid, gaussian, make_grid, norm, plane_mode,
                   set_threads, to_physical, to_spectral, transform, zeros)
from .operators import (KernelTable, OperatorSpec, build_kernel_table, cosine_kernel,
                        resolvent_bound_check, sine_kernel)
from .linear import (SolutionTrace, apply_initial_propagators, duhamel_term, solve_linear,
                     symbol_decay_check, verify_linear_estimates)
from .nonlinearity import NonlinearitySpec, coupled_quadratic, fbar, power, scalar_poly
from .fixedpoint import (ContinuationReport, SolveWindow, amplitude_M, apply_G,
                         contraction_probe, continue_solve, picard_solve, uniqueness_probe,
                         window_length, yT_norm)
from .checks import (InequalityReport, composition_norm_check, cosine_identity_check,
                     nirenberg_ratio)

__version__ = "0.1.0"

__all__ = [
    "BoussinesqError", "ConfigError", "GridError", "MaxItersExceeded", "NonFiniteError",
    "NotElliptic", "SideMismatch", "EllipticForm", "Field", "SpectralGrid", "gaussian",
    "make_grid", "norm", "plane_mode", "set_threads", "to_physical", "to_spectral", "transform",
    "zeros", "KernelTable", "OperatorSpec", "build_kernel_table", "cosine_kernel",
    "resolvent_bound_check", "sine_kernel", "SolutionTrace", "apply_initial_propagators",
    "duhamel_term", "solve_linear", "symbol_decay_check", "verify_linear_estimates",
    "NonlinearitySpec", "coupled_quadratic", "fbar", "power", "scalar_poly",
    "ContinuationReport", "SolveWindow", "amplitude_M", "apply_G", "contraction_probe",
    "continue_solve", "picard_solve", "uniqueness_probe", "window_length", "yT_norm",
    "InequalityReport", "composition_norm_check", "cosine_identity_check", "nirenberg_ratio",
]
