"""Estimator-style wrappers around the centralized and distributed solvers."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .dist import DistConfig, run_distributed
from .outage import tighten_rates
from .sca import SCAConfig, mrt_init, run_sca, zf_init
from .solver import SolverConfig
from .utility import UtilitySpec, utility_value
from .validation import check_beamformers, check_channel_set


class _BeamformerBase(BaseEstimator):
    def _spec(self, K: int) -> UtilitySpec:
        if self.alpha is None:
            return UtilitySpec.uniform(K, self.beta)
        return UtilitySpec(beta=self.beta, alpha=tuple(self.alpha))

    def _init(self, cs):
        if self.init == "mrt":
            return mrt_init(cs)
        if self.init == "zf":
            bf = zf_init(cs, blend=True)
            if bf is None:
                raise ValueError("zero-forcing initialization is infeasible for this instance")
            return bf
        return check_beamformers(self.init, cs)

    def _check_fitted(self):
        if not hasattr(self, "beamformers_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def predict(self, cs=None) -> np.ndarray:
        """Outage-tight rates of the fitted beamformers (on ``cs`` if given)."""
        self._check_fitted()
        if cs is None:
            return self.rates_.copy()
        return tighten_rates(self.beamformers_, check_channel_set(cs))

    def score(self, cs, y=None) -> float:
        """Utility of the fitted beamformers evaluated on ``cs``."""
        cs = check_channel_set(cs)
        return float(utility_value(self._spec(cs.K), self.predict(cs)))


class SCABeamformer(_BeamformerBase):
    """Centralized successive convex approximation.

    Parameters
    ----------
    beta : float
        Fairness exponent of the utility (0 sum rate, 1 proportional, 2 harmonic).
    alpha : sequence of float, optional
        Per-user weights; equal weights when omitted.
    init : {"mrt", "zf"} or BeamformerSet
    stop_rel : float
        Stop when the relative utility gain falls below this.
    max_iters : int
    randomization_count, seed : int
        Gaussian randomization controls, used only if a solution is not rank one.
    kkt_tol : float
        Tolerance of the inner barrier solver.

    Attributes
    ----------
    beamformers_ : BeamformerSet
    rates_ : ndarray
    utility_ : float
    trace_ : SCATrace
    n_iter_ : int
    """

    def __init__(self, beta=0.0, alpha=None, init="mrt", stop_rel=0.01, max_iters=50,
                 randomization_count=200, seed=0, kkt_tol=1e-8):
        self.beta = beta
        self.alpha = alpha
        self.init = init
        self.stop_rel = stop_rel
        self.max_iters = max_iters
        self.randomization_count = randomization_count
        self.seed = seed
        self.kkt_tol = kkt_tol

    def fit(self, cs, y=None):
        cs = check_channel_set(cs)
        cfg = SCAConfig(stop_rel=self.stop_rel, max_iters=self.max_iters,
                        randomization_count=self.randomization_count, seed=self.seed,
                        solver=SolverConfig(kkt_tol=self.kkt_tol))
        tr = run_sca(cs, self._spec(cs.K), self._init(cs), cfg)
        self.trace_ = tr
        self.beamformers_ = tr.beamformers
        self.rates_ = tr.rates
        self.utility_ = tr.utility
        self.n_iter_ = tr.iterations
        return self


class DistributedSCABeamformer(_BeamformerBase):
    """Round-robin distributed SCA with simulated message exchange.

    Parameters are those of :class:`SCABeamformer` with ``max_rounds`` in
    place of ``max_iters`` and an optional node ``order``.

    Attributes
    ----------
    beamformers_, rates_, utility_, trace_
    n_rounds_ : int
    overhead_ : dict
        Simulated message volume and the closed-form counts of each scheme.
    """

    def __init__(self, beta=0.0, alpha=None, init="mrt", stop_rel=0.01, max_rounds=30,
                 order=None, randomization_count=200, seed=0, kkt_tol=1e-8):
        self.beta = beta
        self.alpha = alpha
        self.init = init
        self.stop_rel = stop_rel
        self.max_rounds = max_rounds
        self.order = order
        self.randomization_count = randomization_count
        self.seed = seed
        self.kkt_tol = kkt_tol

    def fit(self, cs, y=None):
        cs = check_channel_set(cs)
        cfg = DistConfig(stop_rel=self.stop_rel, max_rounds=self.max_rounds, order=self.order,
                         randomization_count=self.randomization_count, seed=self.seed,
                         solver=SolverConfig(kkt_tol=self.kkt_tol))
        tr = run_distributed(cs, self._spec(cs.K), self._init(cs), cfg)
        self.trace_ = tr
        self.beamformers_ = tr.beamformers
        self.rates_ = tr.rates
        self.utility_ = tr.utility
        self.n_rounds_ = tr.rounds
        self.overhead_ = tr.overhead
        return self
