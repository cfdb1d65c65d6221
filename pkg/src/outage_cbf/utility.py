"""Fairness-parameterized rate utility (alpha-fair family)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError


@dataclass(frozen=True)
class UtilitySpec:
    """``beta`` = 0, 1, 2 gives weighted sum, geometric-mean and harmonic-mean rate."""

    beta: float = 0.0
    alpha: tuple = (0.5, 0.5)

    def __post_init__(self):
        a = np.asarray(self.alpha, float)
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")
        if np.any(a < 0) or np.any(a > 1) or abs(a.sum() - 1) > 1e-12:
            raise ValueError(f"alpha must lie in [0, 1] and sum to 1, got {self.alpha}")
        object.__setattr__(self, "alpha", tuple(float(x) for x in a))

    @classmethod
    def uniform(cls, K: int, beta: float = 0.0) -> "UtilitySpec":
        return cls(beta=beta, alpha=tuple(np.full(K, 1.0 / K)))

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.alpha)


def _check(spec, R):
    R = np.asarray(R, float)
    if R.shape[-1] != len(spec.alpha):
        raise ValueError(f"expected {len(spec.alpha)} rates, got shape {R.shape}")
    if spec.beta >= 1 and np.any(R <= 0):
        raise DomainError(f"utility with beta={spec.beta} needs strictly positive rates")
    return R


def utility_value(spec: UtilitySpec, R) -> np.ndarray:
    """Utility of a rate tuple; extra leading axes are broadcast over."""
    R = _check(spec, R)
    a, b = spec.weights, spec.beta
    if b == 1:
        return np.sum(a * np.log(R), axis=-1)
    return np.sum(a * R ** (1 - b), axis=-1) / (1 - b)


def utility_gradient(spec: UtilitySpec, R) -> np.ndarray:
    R = _check(spec, R)
    if spec.beta == 0:
        return np.broadcast_to(spec.weights, R.shape).copy()
    return spec.weights * R ** (-spec.beta)


def utility_hessian_diag(spec: UtilitySpec, R) -> np.ndarray:
    """Diagonal of the (separable) Hessian; nonpositive everywhere."""
    R = _check(spec, R)
    if spec.beta == 0:
        return np.zeros_like(R)
    return -spec.beta * spec.weights * R ** (-spec.beta - 1)
