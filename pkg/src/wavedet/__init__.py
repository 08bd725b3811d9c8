"""Wavelet-feature SVM detection of a known chirp in white Gaussian noise."""
from .config import ExperimentConfig
from .detector import (IntegrationPipeline, ShiftBank, calibrate_threshold, detect, load_bundle, save_bundle,
                       sliding_scan, train_bank, train_integrator)
from .errors import (CalibrationError, ConfigurationError, DegenerateInputError, InvariantError,
                     ParameterError, TrainingError, WavedetError)
from .evaluation import (CorrelationMatrix, PerformanceCurve, RatesEstimate, complexity_report,
                         correlation_study, estimate_rates, performance_curve)
from .signal import Dataset, Domain, Label, NoiseSpec, PulseSpec, build_dataset, generate_awgn, generate_chirp
from .svm import KernelSpec, SvmModel, TrainConfig, train
from .wavelet import CoefficientPyramid, WaveletConfig, daubechies_filters, dwt, idwt

__version__ = "0.1.0"

__all__ = [
    "CalibrationError", "CoefficientPyramid", "ConfigurationError", "CorrelationMatrix", "Dataset",
    "DegenerateInputError", "Domain", "ExperimentConfig", "IntegrationPipeline", "InvariantError", "KernelSpec",
    "Label", "NoiseSpec", "ParameterError", "PerformanceCurve", "PulseSpec", "RatesEstimate", "ShiftBank",
    "SvmModel", "TrainConfig", "TrainingError", "WaveletConfig", "WavedetError", "build_dataset",
    "calibrate_threshold", "complexity_report", "correlation_study", "daubechies_filters", "detect", "dwt",
    "estimate_rates", "generate_awgn", "generate_chirp", "idwt", "load_bundle", "performance_curve",
    "save_bundle", "sliding_scan", "train", "train_bank", "train_integrator",
]
