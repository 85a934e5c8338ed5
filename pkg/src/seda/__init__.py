"""Spectral-enhanced and regularized discriminant analysis in high dimensions."""

from .classify import (
    MulticlassModel,
    SedaModel,
    conditional_error,
    fit_corrected_seda,
    fit_multiclass,
    fit_rlda,
    fit_seda,
    fit_tuned_seda,
    load_model,
    save_model,
)
from .measures import SpectralMeasure, build_projected_measure, build_spectral_measure, solve_mp
from .spiked import SpikeConfig
from .theory import SearchConfig, ThetaParams, rlda_rate, seda_rate, tune_theta

__all__ = [
    "MulticlassModel", "SearchConfig", "SedaModel", "SpectralMeasure", "SpikeConfig", "ThetaParams",
    "build_projected_measure", "build_spectral_measure", "conditional_error", "fit_corrected_seda",
    "fit_multiclass", "fit_rlda", "fit_seda", "fit_tuned_seda", "load_model", "rlda_rate", "save_model",
    "seda_rate", "solve_mp", "tune_theta",
]
__version__ = "0.1.0"
