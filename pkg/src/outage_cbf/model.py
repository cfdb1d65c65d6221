"""Problem instances, Rayleigh channel sampling and the instantaneous rate.

Covariances are indexed ``Q[k, i]``: the channel from transmitter ``k`` to
receiver ``i``. All arrays are plain numpy; complex matrices are kept as
complex128 and re-symmetrized whenever an instance is constructed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10


def _rng(seed: int, *key: int) -> np.random.Generator:
    # Counter-based Philox stream keyed by (seed, *key); independent of call order.
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *[int(k) for k in key]])
    return np.random.Generator(np.random.Philox(ss))


def hermitize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


@dataclass
class ChannelSet:
    """One problem instance of the K-user MISO interference channel.

    Attributes
    ----------
    Q : complex array, shape (K, K, Nt, Nt)
        ``Q[k, i]`` is the covariance of the channel from transmitter k to
        receiver i.
    sigma2, P, eps : arrays of length K
        Noise powers, power budgets and outage tolerances.
    delta : float
        Floor on every link trace ``tr(W_i Q_ik)``.
    eta : float
        Cross-link strength the instance was generated with (annotation).
    """

    Q: np.ndarray
    sigma2: np.ndarray
    P: np.ndarray
    eps: np.ndarray
    delta: float = 1e-5
    eta: float = 1.0

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=complex)
        if Q.ndim != 4 or Q.shape[0] != Q.shape[1] or Q.shape[2] != Q.shape[3]:
            raise ValueError(f"Q must have shape (K, K, Nt, Nt), got {Q.shape}")
        self.Q = hermitize(Q)
        K = Q.shape[0]
        self.sigma2 = np.broadcast_to(np.asarray(self.sigma2, float), (K,)).copy()
        self.P = np.broadcast_to(np.asarray(self.P, float), (K,)).copy()
        self.eps = np.broadcast_to(np.asarray(self.eps, float), (K,)).copy()
        self.delta = float(self.delta)
        self.eta = float(self.eta)

    @property
    def K(self) -> int:
        return self.Q.shape[0]

    @property
    def Nt(self) -> int:
        return self.Q.shape[2]

    @property
    def rho(self) -> np.ndarray:
        return 1.0 - self.eps

    def link_active(self) -> np.ndarray:
        """Boolean (K, K) mask of links whose covariance is not exactly zero."""
        return np.any(self.Q != 0, axis=(2, 3))

    def floor_active(self) -> np.ndarray:
        """Mask of links ``[i, k]`` that carry the ``tr(W_i Q_ik) >= delta`` floor."""
        lam = np.linalg.eigvalsh(self.Q)[..., -1]
        return lam * self.P[:, None] >= 2 * self.delta

    def traces(self, bf: "BeamformerSet") -> np.ndarray:
        """``T[k, i] = tr(W_k Q_ki)`` for every link."""
        W = bf.as_matrices()
        return np.einsum("kab,kiba->ki", W, self.Q).real

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "Nt": self.Nt,
            "eta": self.eta,
            "delta": self.delta,
            "sigma2": self.sigma2.tolist(),
            "P": self.P.tolist(),
            "eps": self.eps.tolist(),
            "Q": complex_to_pairs(self.Q),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelSet":
        Q = pairs_to_complex(d["Q"])
        if Q.shape != (d["K"], d["K"], d["Nt"], d["Nt"]):
            raise ValueError(f"Q shape {Q.shape} does not match K={d['K']}, Nt={d['Nt']}")
        return cls(Q=Q, sigma2=d["sigma2"], P=d["P"], eps=d["eps"],
                   delta=d.get("delta", 1e-5), eta=d.get("eta", 1.0))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ChannelSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class BeamformerSet:
    """Per-transmitter beamformers, either vectors ``w_i`` or PSD matrices ``W_i``."""

    vectors: np.ndarray | None = None
    matrices: np.ndarray | None = None

    def __post_init__(self):
        if (self.vectors is None) == (self.matrices is None):
            raise ValueError("exactly one of vectors or matrices must be given")
        if self.vectors is not None:
            self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        else:
            self.matrices = hermitize(np.asarray(self.matrices, dtype=complex))

    @property
    def is_vector(self) -> bool:
        return self.vectors is not None

    @property
    def K(self) -> int:
        return len(self.vectors if self.is_vector else self.matrices)

    def as_matrices(self) -> np.ndarray:
        if self.is_vector:
            return np.einsum("ka,kb->kab", self.vectors, self.vectors.conj())
        return self.matrices

    def power(self) -> np.ndarray:
        if self.is_vector:
            return np.sum(np.abs(self.vectors) ** 2, axis=1)
        return np.trace(self.matrices, axis1=1, axis2=2).real

    def to_dict(self) -> dict:
        if self.is_vector:
            return {"w": complex_to_pairs(self.vectors)}
        return {"W": complex_to_pairs(self.matrices)}

    @classmethod
    def from_dict(cls, d: dict) -> "BeamformerSet":
        if "w" in d:
            return cls(vectors=pairs_to_complex(d["w"]))
        return cls(matrices=pairs_to_complex(d["W"]))


@dataclass
class ChannelDraws:
    """``n`` realizations stacked: ``h[d, k, i]`` is draw d of ``h_ki``."""

    h: np.ndarray = field(repr=False)

    def __len__(self):
        return self.h.shape[0]

    def __getitem__(self, d):
        return self.h[d]


def complex_to_pairs(A: np.ndarray) -> list:
    A = np.asarray(A, dtype=complex)
    return np.stack([A.real, A.imag], axis=-1).tolist()


def pairs_to_complex(lst) -> np.ndarray:
    arr = np.asarray(lst, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def generate_channel_set(K: int, Nt: int, eta: float = 0.5, rank: int | None = None,
                         seed: int = 0, *, sigma2: float = 0.1, P: float = 1.0,
                         eps: float = 0.1, delta: float = 1e-5) -> ChannelSet:
    """Random covariances ``Q_ki = A A^H`` with A an Nt x rank standard complex Gaussian.

    Direct links are scaled to unit maximum eigenvalue and cross links to ``eta``.
    Each link uses its own random stream, so ``Q_ki`` depends only on
    ``(seed, k, i)``.
    """
    rank = Nt if rank is None else rank
    if not 1 <= rank <= Nt:
        raise ValueError(f"rank must lie in [1, Nt={Nt}], got {rank}")
    if not 0 < eta <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    Q = np.empty((K, K, Nt, Nt), dtype=complex)
    for k in range(K):
        for i in range(K):
            g = _rng(seed, 0, k, i)
            A = (g.standard_normal((Nt, rank)) + 1j * g.standard_normal((Nt, rank))) / np.sqrt(2)
            M = hermitize(A @ A.conj().T)
            scale = 1.0 if k == i else eta
            Q[k, i] = M * (scale / np.linalg.eigvalsh(M)[-1])
    return ChannelSet(Q=Q, sigma2=np.full(K, sigma2), P=np.full(K, P),
                      eps=np.full(K, eps), delta=delta, eta=eta)


def generate_scalar_channel_set(K: int, seed: int = 0, eta_range=(0.1, 1.0), *,
                                sigma2: float = 0.1, P: float = 1.0, eps: float = 0.1,
                                delta: float = 1e-5) -> ChannelSet:
    """Single-antenna instance with unit direct gains and uniform random cross gains.

    With Nt = 1 the eigenvalue normalization of :func:`generate_channel_set`
    leaves nothing random, so cross gains are drawn from ``eta_range`` instead.
    """
    lo, hi = eta_range
    if not 0 < lo <= hi <= 1:
        raise ValueError("eta_range must satisfy 0 < lo <= hi <= 1")
    g = _rng(seed, 3).uniform(lo, hi, (K, K))
    np.fill_diagonal(g, 1.0)
    return ChannelSet(Q=g[:, :, None, None].astype(complex), sigma2=np.full(K, sigma2),
                      P=np.full(K, P), eps=np.full(K, eps), delta=delta, eta=hi)


def covariance_factor(Q: np.ndarray) -> np.ndarray:
    """``L`` with ``L L^H = Q`` from the eigendecomposition, tiny negative modes clamped."""
    lam, U = np.linalg.eigh(hermitize(Q))
    if lam[0] < -PSD_TOL * max(1.0, abs(lam[-1])):
        raise ValueError(f"covariance is not PSD (min eigenvalue {lam[0]:.3e})")
    return U * np.sqrt(np.clip(lam, 0.0, None))


def _link_draws(L: np.ndarray, n: int, seed: int, k: int, i: int) -> np.ndarray:
    g = _rng(seed, 1, k, i)
    Nt = L.shape[0]
    G = (g.standard_normal((n, Nt)) + 1j * g.standard_normal((n, Nt))) / np.sqrt(2)
    return G @ L.T


def sample_channels(cs: ChannelSet, n: int, seed: int = 0) -> ChannelDraws:
    """Draw ``n`` independent realizations of every ``h_ki ~ CN(0, Q_ki)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    K, Nt = cs.K, cs.Nt
    h = np.empty((n, K, K, Nt), dtype=complex)
    for k in range(K):
        for i in range(K):
            h[:, k, i] = _link_draws(covariance_factor(cs.Q[k, i]), n, seed, k, i)
    return ChannelDraws(h)


def link_gains(cs: ChannelSet, bf: BeamformerSet, n: int, seed: int = 0) -> np.ndarray:
    """``|h_ki^H w_k|^2`` for n draws, shape (n, K, K), without storing the channels.

    Uses the same streams as :func:`sample_channels`.
    """
    if not bf.is_vector:
        raise ValueError("link gains need vector beamformers")
    out = np.empty((n, cs.K, cs.K))
    for k in range(cs.K):
        for i in range(cs.K):
            h = _link_draws(covariance_factor(cs.Q[k, i]), n, seed, k, i)
            out[:, k, i] = np.abs(h.conj() @ bf.vectors[k]) ** 2
    return out


def rates_from_gains(gains: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    """Rates from gain arrays ``g[..., k, i] = |h_ki^H w_k|^2``."""
    sig = np.diagonal(gains, axis1=-2, axis2=-1)
    interf = gains.sum(axis=-2) - sig
    return np.log2(1.0 + sig / (interf + sigma2))


def instantaneous_rate(draw, bf: BeamformerSet, cs: ChannelSet) -> np.ndarray:
    """Instantaneous achievable rates (bits/channel use) for one draw ``h[k, i]``.

    Interference is treated as noise. A stack of draws with a leading axis
    is also accepted and yields one rate row per draw.
    """
    if not bf.is_vector:
        raise ValueError("instantaneous rate needs vector beamformers")
    h = np.asarray(draw)
    gains = np.abs(np.einsum("...kia,ka->...ki", h.conj(), bf.vectors)) ** 2
    return rates_from_gains(gains, cs.sigma2)
