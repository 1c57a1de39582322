"""Simulation and verification toolkit for the 2D two-component log plasma."""

__version__ = "0.1.0"

from plasma2d.geometry import (
    DegenerateConfigurationError,
    NNDistances,
    SignedConfig,
    gale_shapley_match,
    nn_half_distances,
    rescale_blowup,
    truncation_kernel,
)

__all__ = [
    "DegenerateConfigurationError",
    "NNDistances",
    "SignedConfig",
    "gale_shapley_match",
    "nn_half_distances",
    "rescale_blowup",
    "truncation_kernel",
    "__version__",
]
