"""Seasonal sea-ice concentration forecasting with selective state-space blocks."""

__version__ = "0.1.0"

from ._scan import backend_name
from .tensor import ParamStore, Tensor, adam_update, backward

__all__ = ["ParamStore", "Tensor", "adam_update", "backward", "backend_name", "__version__"]
