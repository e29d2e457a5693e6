"""Adversarial perturbations of random dimension-decreasing ReLU networks
found by gradient flow, plus the random-matrix checks behind them."""

__version__ = "0.1.0"

from .attack import AttackConfig, AttackResult, gd_attack, gradient_flow_attack, trajectory_gradient_floor
from .linalg import RngState, extremal_singular_values, gaussian_matrix, spectral_norm
from .relunet import (
    ActivationPattern,
    ForwardTrace,
    NetworkWeights,
    activation_pattern,
    forward,
    gradient_check,
    input_gradient,
    random_network,
)
from .surjectivity import estimate_c1c2, submatrix_sigma_k, tail_sum_mc, vershynin_check
from .typicality import example_typicality, weight_typicality

__all__ = [
    "ActivationPattern",
    "AttackConfig",
    "AttackResult",
    "ForwardTrace",
    "NetworkWeights",
    "RngState",
    "activation_pattern",
    "estimate_c1c2",
    "example_typicality",
    "extremal_singular_values",
    "forward",
    "gaussian_matrix",
    "gd_attack",
    "gradient_check",
    "gradient_flow_attack",
    "input_gradient",
    "random_network",
    "spectral_norm",
    "submatrix_sigma_k",
    "tail_sum_mc",
    "trajectory_gradient_floor",
    "vershynin_check",
    "weight_typicality",
]
