"""Residual-energy curves, power-law exponents, extreme-value predictions and size collapse."""
from .evt import (
    BlockFit,
    EvtModel,
    GaussianMinimumModel,
    evt_asymptotic_median,
    evt_block_fit,
    evt_median,
    evt_min_cdf,
    evt_parameters,
    evt_residual_prediction,
    fit_gaussian,
)
from .fss import CollapseParams, FiniteSizeCollapse, fss_fit, fss_quality, fss_rescale
from .powerlaw import PowerLawFit, PowerLawRegressor, detect_window, fit_power_law
from .residual import ResidualCurve, bootstrap_ci, residual_energy

__all__ = [
    "BlockFit", "CollapseParams", "EvtModel", "FiniteSizeCollapse", "GaussianMinimumModel",
    "PowerLawFit", "PowerLawRegressor", "ResidualCurve", "bootstrap_ci", "detect_window",
    "evt_asymptotic_median", "evt_block_fit", "evt_median", "evt_min_cdf", "evt_parameters",
    "evt_residual_prediction", "fit_gaussian", "fit_power_law", "fss_fit", "fss_quality",
    "fss_rescale", "residual_energy",
]
