"""Parameter privacy for sensor streams by model randomization.

A randomizer draws a pseudo parameter under a mutual-information budget and
a causal transform re-expresses the measurements so that their joint law is
the one indexed by the pseudo parameter.
"""

from .model_core import (ConditionalModel, ConfigurationError, IidModel, MarkovModel,
                         ModelHandle, ModelRegistry, ParameterPrior, build_model, get_model,
                         prior_entropy, register_model)
from .gauss_markov import (ComponentConditional, GaussMarkovModel, GmParameter,
                           PredictorState, component_conditional, predict_output,
                           simulate_path, simulate_paths, update_state)
from .transform import FilterSession, gaussian_cdf, gaussian_icdf, open_session, run_filter
from .randomizer import (DistortionMatrix, RandomizerPolicy, estimate_distortion_matrix,
                         mutual_information, solve_randomizer)
from .infotheory import PrivacyReport, data_processing_bound, fano_bound, privacy_report
from .adversary import (OccupancyEstimatorConfig, Pipeline, classify_theta, drift_statistic,
                        error_probability)

__version__ = "0.1.0"

__all__ = [
    "ConditionalModel",
    "ConfigurationError",
    "IidModel",
    "MarkovModel",
    "ModelHandle",
    "ModelRegistry",
    "ParameterPrior",
    "build_model",
    "get_model",
    "prior_entropy",
    "register_model",
    "ComponentConditional",
    "GaussMarkovModel",
    "GmParameter",
    "PredictorState",
    "component_conditional",
    "predict_output",
    "simulate_path",
    "simulate_paths",
    "update_state",
    "FilterSession",
    "gaussian_cdf",
    "gaussian_icdf",
    "open_session",
    "run_filter",
    "DistortionMatrix",
    "RandomizerPolicy",
    "estimate_distortion_matrix",
    "mutual_information",
    "solve_randomizer",
    "PrivacyReport",
    "data_processing_bound",
    "fano_bound",
    "privacy_report",
    "OccupancyEstimatorConfig",
    "Pipeline",
    "classify_theta",
    "drift_statistic",
    "error_probability",
]
