"""Log-barrier interior-point method for small smooth convex programs with PSD blocks.

A :class:`ConvexProgram` maximizes a concave objective subject to smooth convex
inequalities ``g_j(x) <= 0``, linear inequalities ``A x <= b`` and Hermitian
PSD blocks. Hermitian matrices are stored as Nt^2 real coordinates in an
orthonormal basis (see :func:`herm_vec`), so ``tr(W Q) = herm_vec(W) @ herm_vec(Q)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .exceptions import InfeasibleStartError

logger = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)


@lru_cache(maxsize=None)
def _herm_index(Nt: int):
    iu = np.triu_indices(Nt, 1)
    return np.arange(Nt), iu


def herm_vec(W: np.ndarray) -> np.ndarray:
    """Real coordinates of a Hermitian matrix: diagonal, then sqrt2*Re and sqrt2*Im of the upper triangle."""
    W = np.asarray(W)
    Nt = W.shape[-1]
    d, (r, c) = _herm_index(Nt)
    up = W[..., r, c]
    return np.concatenate([W[..., d, d].real, SQRT2 * up.real, SQRT2 * up.imag], axis=-1)


def herm_mat(v: np.ndarray, Nt: int) -> np.ndarray:
    v = np.asarray(v, float)
    d, (r, c) = _herm_index(Nt)
    m = len(r)
    W = np.zeros(v.shape[:-1] + (Nt, Nt), dtype=complex)
    W[..., d, d] = v[..., :Nt]
    up = (v[..., Nt:Nt + m] + 1j * v[..., Nt + m:]) / SQRT2
    W[..., r, c] = up
    W[..., c, r] = up.conj()
    return W


@lru_cache(maxsize=None)
def herm_basis(Nt: int) -> np.ndarray:
    """Orthonormal basis matrices, shape (Nt^2, Nt, Nt)."""
    return herm_mat(np.eye(Nt * Nt), Nt)


def logdet_hessian(Winv: np.ndarray) -> np.ndarray:
    """Hessian of ``-log det W`` in herm_vec coordinates."""
    B = herm_basis(Winv.shape[0])
    X = Winv @ B @ Winv
    return herm_vec(X)


# ---------------------------------------------------------------------------
# constraint and objective families


@dataclass
class SoftplusSum:
    """``g(u) = c0 + l.u + sum_r softplus(M[r].u + c[r])`` on ``u = x[idx]``."""

    idx: np.ndarray
    l: np.ndarray
    M: np.ndarray
    c: np.ndarray
    c0: float
    name: str = ""
    tag: str = ""

    def value(self, u):
        return self.c0 + self.l @ u + np.sum(np.logaddexp(0.0, self.M @ u + self.c))

    def grad(self, u):
        s = _sigmoid(self.M @ u + self.c)
        return self.l + s @ self.M

    def hess(self, u):
        s = _sigmoid(self.M @ u + self.c)
        return (self.M.T * (s * (1 - s))) @ self.M


@dataclass
class ExpAffine:
    """``g(u) = exp(m.u + c) + l.u + d`` on ``u = x[idx]``."""

    idx: np.ndarray
    m: np.ndarray
    c: float
    l: np.ndarray
    d: float = 0.0
    name: str = ""
    tag: str = ""

    def value(self, u):
        return np.exp(self.m @ u + self.c) + self.l @ u + self.d

    def grad(self, u):
        return np.exp(self.m @ u + self.c) * self.m + self.l

    def hess(self, u):
        return np.exp(self.m @ u + self.c) * np.outer(self.m, self.m)


@dataclass
class SmoothFn:
    """Arbitrary smooth function of ``x[idx]`` given by callables."""

    idx: np.ndarray
    f: Callable
    df: Callable
    d2f: Callable
    name: str = ""
    tag: str = ""

    def value(self, u):
        return self.f(u)

    def grad(self, u):
        return self.df(u)

    def hess(self, u):
        return self.d2f(u)


def _sigmoid(a):
    return np.exp(-np.logaddexp(0.0, -a))


@dataclass
class ConvexProgram:
    """maximize ``objective(x)`` s.t. ``g_j(x) <= 0``, ``A x <= b``, PSD blocks.

    ``objective`` must be concave and each nonlinear ``g_j`` convex. Constraint
    order everywhere (values, duals, names) is nonlinear first, then linear.
    """

    n: int
    objective: object
    nonlinear: list = field(default_factory=list)
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    lin_names: list = field(default_factory=list)
    lin_tags: list = field(default_factory=list)
    blocks: list = field(default_factory=list)
    block_names: list = field(default_factory=list)
    layout: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.A is None:
            self.A = np.zeros((0, self.n))
            self.b = np.zeros(0)
        self.A = np.atleast_2d(np.asarray(self.A, float)).reshape(-1, self.n)
        self.b = np.asarray(self.b, float).reshape(-1)

    @property
    def m(self) -> int:
        return len(self.nonlinear) + len(self.b)

    @property
    def names(self) -> list:
        return [c.name for c in self.nonlinear] + list(self.lin_names)

    @property
    def tags(self) -> list:
        return [c.tag for c in self.nonlinear] + list(self.lin_tags)

    @property
    def barrier_degree(self) -> int:
        return self.m + sum(nt for _, nt in self.blocks)

    def values(self, x) -> np.ndarray:
        nl = [c.value(x[c.idx]) for c in self.nonlinear]
        return np.concatenate([nl, self.A @ x - self.b])

    def jacobian(self, x) -> np.ndarray:
        J = np.zeros((self.m, self.n))
        for j, c in enumerate(self.nonlinear):
            J[j, c.idx] += c.grad(x[c.idx])
        J[len(self.nonlinear):] = self.A
        return J

    def matrices(self, x) -> list:
        return [herm_mat(x[idx], nt) for idx, nt in self.blocks]

    def objective_value(self, x) -> float:
        return float(self.objective.value(x[self.objective.idx]))

    def objective_grad(self, x) -> np.ndarray:
        g = np.zeros(self.n)
        g[self.objective.idx] = self.objective.grad(x[self.objective.idx])
        return g

    def min_slack(self, x) -> float:
        """Most violated residual (max over g_j and -lambda_min of each block)."""
        vals = [np.max(self.values(x), initial=-np.inf)]
        vals += [-np.linalg.eigvalsh(W)[0] for W in self.matrices(x)]
        return float(max(vals))


# ---------------------------------------------------------------------------
# solver


@dataclass
class SolverConfig:
    kkt_tol: float = 1e-8
    barrier_mu: float = 10.0
    newton_max: int = 50
    t0: float = 1.0
    ls_alpha: float = 0.25
    ls_beta: float = 0.5
    max_centerings: int = 60
    newton_tol: float = 1e-10

    def __post_init__(self):
        if self.barrier_mu <= 1:
            raise ValueError("barrier_mu must exceed 1")
        for name in ("kkt_tol", "newton_max", "t0", "ls_alpha", "ls_beta", "max_centerings"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Solution:
    x: np.ndarray
    duals: np.ndarray
    psd_duals: list
    kkt_residual: float
    status: str
    objective: float
    t: float = 0.0
    newton_steps: int = 0

    def dual(self, prog: ConvexProgram, name: str) -> float:
        return float(self.duals[prog.names.index(name)])


class _Barrier:
    def __init__(self, prog: ConvexProgram):
        self.p = prog

    def value(self, x, t):
        p = self.p
        u = x[p.objective.idx]
        f0 = -p.objective.value(u)
        if not np.isfinite(f0):
            return np.inf
        psi = t * f0
        for c in p.nonlinear:
            g = c.value(x[c.idx])
            if not g < 0:
                return np.inf
            psi -= np.log(-g)
        r = p.A @ x - p.b
        if np.any(r >= 0):
            return np.inf
        psi -= np.sum(np.log(-r))
        for idx, nt in p.blocks:
            try:
                L = np.linalg.cholesky(herm_mat(x[idx], nt))
            except np.linalg.LinAlgError:
                return np.inf
            psi -= 2 * np.sum(np.log(np.diag(L).real))
        return psi if np.isfinite(psi) else np.inf

    def derivs(self, x, t):
        p = self.p
        n = p.n
        grad = np.zeros(n)
        H = np.zeros((n, n))
        oi = p.objective.idx
        u = x[oi]
        grad[oi] -= t * p.objective.grad(u)
        H[np.ix_(oi, oi)] -= t * p.objective.hess(u)
        for c in p.nonlinear:
            ui = x[c.idx]
            g = c.value(ui)
            dg = c.grad(ui)
            grad[c.idx] += dg / -g
            H[np.ix_(c.idx, c.idx)] += np.outer(dg, dg) / g ** 2 + c.hess(ui) / -g
        if len(p.b):
            r = p.A @ x - p.b
            grad += p.A.T @ (1.0 / -r)
            H += (p.A.T / r ** 2) @ p.A
        for idx, nt in p.blocks:
            Winv = np.linalg.inv(herm_mat(x[idx], nt))
            Winv = 0.5 * (Winv + Winv.conj().T)
            grad[idx] -= herm_vec(Winv)
            H[np.ix_(idx, idx)] += logdet_hessian(Winv)
        return grad, H


def _newton_direction(grad, H):
    d = np.sqrt(np.clip(np.diag(H), 1e-300, None))
    Hs = H / np.outer(d, d)
    gs = grad / d
    ridge = 0.0
    for _ in range(8):
        try:
            cf = sla.cho_factor(Hs + ridge * np.eye(len(d)), check_finite=True)
            return -sla.cho_solve(cf, gs) / d
        except (np.linalg.LinAlgError, ValueError):
            ridge = 1e-10 if ridge == 0 else ridge * 100
    return -gs / d


def duals_at(prog: ConvexProgram, x, t):
    """Central-path duals corrected by one (unapplied) Newton step.

    Near the boundary the slack ``-g_j`` is known only to float spacing of x,
    so ``1/(t * -g_j)`` alone is accurate to ~1e-7. Linearizing the duals
    along the Newton step dx restores stationarity to second order in dx.
    """
    grad, H = _Barrier(prog).derivs(x, t)
    dx = _newton_direction(grad, H)
    g = prog.values(x)
    J = prog.jacobian(x)
    lam = (1.0 + (J @ dx) / -g) / (t * -g)
    Z = []
    for idx, nt in prog.blocks:
        Winv = np.linalg.inv(herm_mat(x[idx], nt))
        z = (Winv - Winv @ herm_mat(dx[idx], nt) @ Winv) / t
        Z.append(0.5 * (z + z.conj().T))
    return lam, Z


def kkt_residual(prog: ConvexProgram, x, duals, psd_duals=None) -> float:
    """Max-norm KKT residual: stationarity, primal violation and complementarity.

    The Lagrangian is ``-U(x) + sum_j duals_j g_j(x) - sum_i tr(Z_i W_i)``.
    """
    x = np.asarray(x, float)
    lam = np.asarray(duals, float)
    mats = prog.matrices(x)
    if psd_duals is None:
        psd_duals = [np.zeros_like(W) for W in mats]
    stat = -prog.objective_grad(x) + prog.jacobian(x).T @ lam
    for (idx, _), Z in zip(prog.blocks, psd_duals):
        stat[idx] -= herm_vec(Z)
    g = prog.values(x)
    viol = max([np.max(g, initial=0.0), 0.0] + [-np.linalg.eigvalsh(W)[0] for W in mats])
    comp = np.max(np.abs(lam * g), initial=0.0)
    for W, Z in zip(mats, psd_duals):
        comp = max(comp, abs(np.trace(Z @ W).real))
    return float(max(np.max(np.abs(stat), initial=0.0), viol, comp))


def solve_barrier(prog: ConvexProgram, start, cfg: SolverConfig | None = None,
                  verbosity: int = 0) -> Solution:
    """Barrier method from a strictly feasible ``start``.

    Each centering runs damped Newton with backtracking on
    ``t * (-U) + barrier``; t grows by ``barrier_mu`` until
    ``barrier_degree / t <= kkt_tol / 10``. Duals come from the central path:
    ``lambda_j = 1 / (t * -g_j)`` and ``Z_i = W_i^{-1} / t``.
    """
    cfg = cfg or SolverConfig()
    bar = _Barrier(prog)
    x = np.array(start, dtype=float)
    t = cfg.t0
    if not np.isfinite(bar.value(x, t)):
        raise InfeasibleStartError("start point is not strictly feasible")
    steps = 0
    gap_target = cfg.kkt_tol / 10
    for centering in range(cfg.max_centerings):
        psi = bar.value(x, t)
        dec = np.inf
        for _ in range(cfg.newton_max):
            grad, H = bar.derivs(x, t)
            dx = _newton_direction(grad, H)
            slope = grad @ dx
            if not np.isfinite(slope) or slope >= 0:
                dg = np.maximum(np.diag(H), 1e-300)
                dx, slope = -grad / dg, -(grad ** 2 / dg).sum()
            dec = -slope / 2
            if dec <= cfg.newton_tol or np.all(x + dx == x):
                break
            if dec < 1e-2:
                # quadratic region: take the full step whenever it stays feasible;
                # Armijo cannot resolve decreases below the float spacing of psi
                new = bar.value(x + dx, t)
                if np.isfinite(new):
                    x, psi = x + dx, new
                    steps += 1
                    continue
            s = 1.0
            new = bar.value(x + s * dx, t)
            while not np.isfinite(new) or new > psi + cfg.ls_alpha * s * slope:
                s *= cfg.ls_beta
                if s < 1e-16:
                    break
                new = bar.value(x + s * dx, t)
            if s < 1e-16:
                break
            x = x + s * dx
            psi = new
            steps += 1
        if verbosity >= 2:
            logger.info("centering %d t=%.3e obj=%.10g decrement=%.3e", centering, t,
                        prog.objective_value(x), dec)
        if prog.barrier_degree / t <= gap_target:
            break
        t *= cfg.barrier_mu
    lam, Z = duals_at(prog, x, t)
    res = kkt_residual(prog, x, lam, Z)
    status = "optimal" if res <= cfg.kkt_tol else "max-iter"
    return Solution(x=x, duals=lam, psd_duals=Z, kkt_residual=res, status=status,
                    objective=prog.objective_value(x), t=t, newton_steps=steps)
