"""Differentially private synthetic data release on the unit cube."""

from .core import (BinGrid, Dataset, DomainError, HistogramDensity, PrivacyBudget, SeededRng,
                   check_rng, load_dataset, save_dataset)
from .estimators import (EmpiricalCdf, HistogramEstimator, NormalizedSeries, SeriesDensity,
                         SeriesEstimator, fit_histogram, fit_series, smooth_histogram)
from .exponential import McmcConfig
from .mechanisms import (ExponentialMeanMechanism, ExponentialMechanism, MechanismKind,
                         MechanismSpec, PerturbedHistogramMechanism, PerturbedSeriesMechanism,
                         PrivacyGateError, ReleaseReport, SmoothedHistogramMechanism,
                         plan_smoothed_histogram, release_exponential,
                         release_exponential_mean, release_perturbed_histogram,
                         release_perturbed_series, release_smoothed_histogram)
from .metrics import DistanceKind, ks_distance, sensitivity_bound

__all__ = [
    "BinGrid", "Dataset", "DomainError", "HistogramDensity", "PrivacyBudget", "SeededRng",
    "check_rng", "load_dataset", "save_dataset",
    "EmpiricalCdf", "HistogramEstimator", "NormalizedSeries", "SeriesDensity",
    "SeriesEstimator", "fit_histogram", "fit_series", "smooth_histogram",
    "McmcConfig",
    "ExponentialMeanMechanism", "ExponentialMechanism", "MechanismKind", "MechanismSpec",
    "PerturbedHistogramMechanism", "PerturbedSeriesMechanism", "PrivacyGateError",
    "ReleaseReport", "SmoothedHistogramMechanism", "plan_smoothed_histogram",
    "release_exponential", "release_exponential_mean", "release_perturbed_histogram",
    "release_perturbed_series", "release_smoothed_histogram",
    "DistanceKind", "ks_distance", "sensitivity_bound",
]
__version__ = "0.1.0"
