"""Bounded-coefficient arithmetic circuits for convolution and related
problems, certified spectral lower bounds, and Monte-Carlo checks of the
Gaussian estimates behind them."""

from .bounds import best_bound, circulant_best_bound
from .circuit import (
    Circuit,
    CircuitBuilder,
    CircuitError,
    CircuitParseError,
    audit_coefficients,
    evaluate,
    extract_linear_matrix,
    validate_structure,
)
from .generators import GENERATORS
from .probability import constants
from .spectral import circulant, circulant_spectrum, msv, svd

__version__ = "0.1.0"
