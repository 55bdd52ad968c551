"""Spheroidal wave functions: eigenvalues, angle functions, radial functions."""
from __future__ import annotations

import numpy as np

from ._eigen import ModeCoefficients, ModeIndex, angle_s1, angle_table, class_matrix, norm_nmn, solve_mode
from ._radial import RadialEval, expected_wronskian, radial, radial_arrays, radial_at_disk


def wronskian_residual(coeffs: ModeCoefficients, xi) -> np.ndarray:
    """Relative deviation of ``R1 R2' - R1' R2`` from its exact value at each ``xi``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    return coeffs.radial.evaluate(xi)[4]


__all__ = [
    "ModeCoefficients",
    "ModeIndex",
    "RadialEval",
    "angle_s1",
    "angle_table",
    "class_matrix",
    "expected_wronskian",
    "norm_nmn",
    "radial",
    "radial_arrays",
    "radial_at_disk",
    "solve_mode",
    "wronskian_residual",
]
