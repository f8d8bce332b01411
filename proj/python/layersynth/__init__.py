"""Interface synthesis and Monte Carlo validation for two-layer stochastic systems."""

import json

from ._layersynth import (
    AssumptionError,
    InputError,
    NumericError,
    SynthesisError,
    bundled_config,
    bundled_config_names,
    kalman_predictor,
    normalize_config,
    rho_of_lambda,
    simulate,
    synthesize,
    verify,
)

__all__ = [
    "AssumptionError",
    "InputError",
    "NumericError",
    "SynthesisError",
    "bundled_config",
    "bundled_config_names",
    "kalman_predictor",
    "load_design",
    "normalize_config",
    "rho_of_lambda",
    "simulate",
    "synthesize",
    "verify",
]


def load_design(design_json):
    """Parses a design JSON string into a dict."""
    return json.loads(design_json)
