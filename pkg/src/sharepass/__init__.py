"""Threshold password authentication with hidden-abscissa Pedersen sharing."""

from .group import GroupParams, generate_params
from .shamir import lagrange_weights, reconstruct_at_zero, split

__version__ = "0.1.0"

__all__ = ["GroupParams", "generate_params", "lagrange_weights", "reconstruct_at_zero", "split"]
