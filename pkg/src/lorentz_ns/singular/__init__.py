"""Riesz transforms, Leray projection, heat semigroup, CZ decomposition, solenoidal cutoff."""

from .cz import Cube, CZDecomposition, cz_decompose
from .heat import heat_kernel, heat_kernel_sample, heat_semigroup, kernel_convolve
from .riesz import (
    leray_project,
    riesz,
    riesz_vector,
    truncated_riesz,
    weak11_constant,
)
from .truncation import TruncationResult, solenoidal_truncate

__all__ = [
    "Cube", "CZDecomposition", "cz_decompose", "heat_kernel", "heat_kernel_sample",
    "heat_semigroup", "kernel_convolve", "leray_project", "riesz", "riesz_vector",
    "truncated_riesz", "weak11_constant", "TruncationResult", "solenoidal_truncate",
]
