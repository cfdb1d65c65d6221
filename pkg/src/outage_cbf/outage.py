"""Closed-form rate outage, Monte-Carlo outage, and outage-tight rates."""
from __future__ import annotations

import numpy as np

from .exceptions import DomainError, NumericFailure
from .model import BeamformerSet, ChannelSet, link_gains, rates_from_gains

LN2 = np.log(2.0)
R_MAX = 64.0
BISECT_ITERS = 200


def _log_survival(R, s, t, sigma2):
    """``ln Pr{no outage}`` given signal trace ``s`` and interference traces ``t``."""
    a = np.expm1(np.asarray(R, float) * LN2)
    s = np.asarray(s, float)
    t = np.asarray(t, float)
    return -a * sigma2 / s - np.sum(np.log1p(a[..., None] * t / s[..., None]), axis=-1)


def outage_from_traces(R, s, t, sigma2) -> np.ndarray:
    """Outage probability from traces; ``t`` has the interferers on its last axis."""
    s = np.asarray(s, float)
    if np.any(s <= 0):
        raise DomainError("signal trace must be positive")
    return -np.expm1(_log_survival(R, s, t, sigma2))


def closed_form_outage(bf: BeamformerSet, R: float, i: int, cs: ChannelSet) -> float:
    """Outage probability of user ``i`` at rate ``R`` under Rayleigh fading.

    Works for vector and matrix beamformers (the matrix form is the relaxed
    quadratic ``tr(W_k Q_ki)``). Links with an all-zero covariance contribute
    nothing.
    """
    if R < 0:
        raise ValueError("rate must be nonnegative")
    T = cs.traces(bf)
    s = T[i, i]
    if s <= 0:
        raise DomainError(f"signal power of user {i} is zero: beamformer orthogonal to Q_ii")
    others = [k for k in range(cs.K) if k != i and cs.link_active()[k, i]]
    return float(outage_from_traces(R, s, T[others, i], cs.sigma2[i]))


def empirical_outage(bf: BeamformerSet, R, cs: ChannelSet, n: int, seed: int = 0) -> np.ndarray:
    """Fraction of ``n`` channel draws whose instantaneous rate is below ``R_i``."""
    gains = link_gains(cs, bf, n, seed)
    r = rates_from_gains(gains, cs.sigma2)
    return np.mean(r < np.asarray(R, float), axis=0)


def tight_rate(s, t, sigma2, rho) -> np.ndarray:
    """Largest rate with outage exactly ``1 - rho``, elementwise over leading axes.

    Bracketed bisection in R on the log form of the outage equation; the
    bracket starts at [0, 1] and doubles up to 64 bits.
    """
    s = np.atleast_1d(np.asarray(s, float))
    t = np.asarray(t, float).reshape(s.shape + (-1,))
    sigma2 = np.broadcast_to(np.asarray(sigma2, float), s.shape)
    log_rho = np.log(np.broadcast_to(np.asarray(rho, float), s.shape))
    if np.any(s <= 0):
        raise DomainError("signal trace must be positive")

    def f(R):
        return log_rho - _log_survival(R, s, t, sigma2)

    lo = np.zeros_like(s)
    hi = np.ones_like(s)
    while True:
        pos = f(hi) > 0
        if pos.all():
            break
        if np.any(hi[~pos] >= R_MAX):
            raise NumericFailure("tight rate exceeds 64 bits: pathological instance")
        lo = np.where(pos, lo, hi)
        hi = np.where(pos, hi, 2 * hi)
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        done = (mid <= lo) | (mid >= hi)
        if done.all():
            break
        up = f(mid) > 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    # pick the endpoint with the smaller residual
    return np.where(np.abs(f(lo)) <= np.abs(f(hi)), lo, hi)


def rates_from_traces(T: np.ndarray, cs: ChannelSet) -> np.ndarray:
    """Tight rates from a link-trace table ``T[k, i]`` (exponentiated anchors work too)."""
    K = cs.K
    off = ~np.eye(K, dtype=bool)
    t = np.array([T[off[:, i], i] for i in range(K)]).reshape(K, K - 1)
    return tight_rate(np.diag(T).copy(), t, cs.sigma2, cs.rho)


def tighten_rates(bf: BeamformerSet, cs: ChannelSet) -> np.ndarray:
    """Per-user rates at which each outage constraint holds with equality."""
    return rates_from_traces(cs.traces(bf), cs)


def outage_residual(R, T: np.ndarray, cs: ChannelSet) -> np.ndarray:
    """Left side of the tight-rate equation minus one, per user."""
    K = cs.K
    off = ~np.eye(K, dtype=bool)
    t = np.array([T[off[:, i], i] for i in range(K)]).reshape(K, K - 1)
    return np.expm1(np.log(cs.rho) - _log_survival(R, np.diag(T), t, cs.sigma2))
