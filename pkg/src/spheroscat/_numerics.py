"""Small numerical helpers shared across modules."""
from __future__ import annotations

import numpy as np


def compensated_sum(terms, axis=0):
    """Compensated (two-sum) summation of ``terms`` along ``axis``.

    Works on real or complex arrays; the loop runs over ``axis`` and is
    vectorised over the remaining dimensions.
    """
    terms = np.moveaxis(np.asarray(terms), axis, 0)
    if terms.shape[0] == 0:
        return np.zeros(terms.shape[1:], dtype=terms.dtype)
    if np.iscomplexobj(terms):
        return compensated_sum(terms.real) + 1j * compensated_sum(terms.imag)
    # pairwise two-sum: exact rounding errors of every addition go to comp
    s = terms.astype(float, copy=True)
    comp = np.zeros(s.shape[1:])
    while s.shape[0] > 1:
        if s.shape[0] % 2:
            s = np.concatenate([s, np.zeros((1,) + s.shape[1:])])
        a, b = s[0::2], s[1::2]
        new = a + b
        bp = new - a
        comp += np.sum((a - (new - bp)) + (b - bp), axis=0)
        s = new
    return s[0] + comp


def neumann_factor(m: int) -> float:
    """Azimuthal Fourier weight: 1 for m = 0, 2 otherwise."""
    return 1.0 if m == 0 else 2.0
