"""Compile hybrid Bayesian networks into mixture-of-Gaussians networks and
run exact inference on the result."""

from .errors import (
    CompileError,
    EvidenceError,
    ExpressionError,
    FitError,
    InputError,
    MogBNError,
    ResourceError,
    UnsupportedError,
    ValidationFailure,
)
from .inference import build_mixture, condition, marginal_continuous, marginal_discrete, mixture_mode, posterior
from .mogfit import FitConfig, FitReport, GaussianMixture1D, fit
from .netmodel import HybridNetwork, MoGNetwork, load_network, parse_network, serialize_network
from .transforms import CompileOptions, CompileReport, compile_network

__version__ = "0.1.0"

__all__ = [
    "CompileError", "EvidenceError", "ExpressionError", "FitError", "InputError", "MogBNError",
    "ResourceError", "UnsupportedError", "ValidationFailure",
    "build_mixture", "condition", "marginal_continuous", "marginal_discrete", "mixture_mode", "posterior",
    "FitConfig", "FitReport", "GaussianMixture1D", "fit",
    "HybridNetwork", "MoGNetwork", "load_network", "parse_network", "serialize_network",
    "CompileOptions", "CompileReport", "compile_network",
]
