"""Exponential semi-variogram model with nugget."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError

LN20 = math.log(20.0)


@dataclass(frozen=True)
class ExpVariogramParams:
    """Nugget ``c0``, partial sill ``sigma2`` and shape (range) parameter ``phi``."""

    nugget: float
    partial_sill: float
    shape: float

    def __post_init__(self):
        for name in ("nugget", "partial_sill", "shape"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")
            object.__setattr__(self, name, v)

    @property
    def sill(self) -> float:
        return self.nugget + self.partial_sill

    def as_array(self) -> np.ndarray:
        return np.array([self.nugget, self.partial_sill, self.shape])

    @classmethod
    def from_array(cls, a) -> "ExpVariogramParams":
        return cls(*(float(x) for x in a))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "ExpVariogramParams":
        return cls(d["nugget"], d["partial_sill"], d["shape"])


def _check_h(h):
    h = np.asarray(h, dtype=float)
    if np.any(h < 0) or np.any(np.isnan(h)):
        raise DomainError("distance must be >= 0")
    return h


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def eval_model(params: ExpVariogramParams, h):
    """Semi-variance at distance ``h``; exactly 0 at ``h == 0``."""
    h = _check_h(h)
    g = params.nugget + params.partial_sill * -np.expm1(-h / params.shape)
    return _scalar_or_array(np.where(h == 0, 0.0, g), h)


def model_covariance(params: ExpVariogramParams, h):
    """Covariance ``c0 + sigma2 - gamma(h)``: full sill at 0, ``sigma2 exp(-h/phi)`` beyond."""
    h = _check_h(h)
    c = np.where(h == 0, params.sill, params.partial_sill * np.exp(-h / params.shape))
    return _scalar_or_array(c, h)


def practical_range(params: ExpVariogramParams) -> float:
    """Distance at which the model reaches the nugget plus 95% of the partial sill."""
    return params.shape * LN20
