"""Empirical normal-score transform and its back-transform."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri


@dataclass(frozen=True)
class NormalScoreTable:
    sorted_z: np.ndarray
    scores: np.ndarray


def nscore_forward(values):
    """Map values to standard-normal quantiles of their ranks.

    The value of (1-based) rank ``r`` becomes ``Phi^{-1}((r - 0.5) / N)``.
    Ties are ranked by position in the input, so the map is deterministic.

    Returns
    -------
    y : ndarray
        Normal scores, in input order.
    table : NormalScoreTable
        Knots for :func:`nscore_inverse`.
    """
    z = np.asarray(values, dtype=float)
    if z.ndim != 1 or z.size < 2:
        raise ValueError("need a 1-d sample of at least two values")
    if not np.isfinite(z).all():
        raise ValueError("values must be finite")
    n = z.size
    order = np.argsort(z, kind="stable")
    p = (np.arange(1, n + 1) - 0.5) / n
    scores = ndtri(p)
    # enforce exact antisymmetry; ndtri is only symmetric to rounding
    half = n // 2
    scores[n - half:] = -scores[:half][::-1]
    if n % 2:
        scores[half] = 0.0
    y = np.empty(n)
    y[order] = scores
    sorted_z = z[order]
    sorted_z.setflags(write=False)
    scores.setflags(write=False)
    return y, NormalScoreTable(sorted_z, scores)


def nscore_inverse(y, table: NormalScoreTable):
    """Piecewise-linear back-transform; scores outside the table clamp to the sample extremes."""
    return np.interp(np.asarray(y, dtype=float), table.scores, table.sorted_z)
