"""Covariance kernels from spectral densities.

Adaptive Gauss-Legendre / Gauss-Jacobi panel quadrature of the Fourier
integral ``K(r) = 2 int_0^inf S(w) cos(2 pi w r) dw`` with type-3 NUFFT
summation over many distances, tail truncation bounds, reference oracles
and Gaussian-process likelihood tools built on top.
"""

from .engine import (
    EvaluationRequest,
    KernelResult,
    evaluate_alpha_derivative,
    evaluate_kernel,
    evaluate_kernel_derivative,
)
from .errors import *  # noqa: F401,F403
from .models import MODEL_KINDS, make_model, normalize_amplitude

__version__ = "0.1.0"

__all__ = [
    "EvaluationRequest",
    "KernelResult",
    "evaluate_kernel",
    "evaluate_kernel_derivative",
    "evaluate_alpha_derivative",
    "MODEL_KINDS",
    "make_model",
    "normalize_amplitude",
]
