from .model import (
    HawkesParams,
    compensator,
    decayed_source_states,
    excitation_matrix,
    information_criteria,
    intensity,
    intensity_vector,
    log_likelihood,
    spectral_radius,
    total_intensity,
)
from .fitting import DEFAULT_BETA_GRID, FitConfig, FitResult, fit, fit_grid, write_grid_csv
from .estimator import HawkesExponentialEstimator

__all__ = [
    "HawkesParams",
    "FitConfig",
    "FitResult",
    "HawkesExponentialEstimator",
    "DEFAULT_BETA_GRID",
    "compensator",
    "decayed_source_states",
    "excitation_matrix",
    "information_criteria",
    "intensity",
    "intensity_vector",
    "log_likelihood",
    "spectral_radius",
    "total_intensity",
    "fit",
    "fit_grid",
    "write_grid_csv",
]
