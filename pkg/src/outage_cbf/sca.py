"""Centralized successive convex approximation, initializers and rank-one recovery."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .approx import (
    anchor_point,
    build_central_subproblem,
    build_original_program,
    compute_anchor,
    feasible_interior_point,
    unpack,
)
from .model import BeamformerSet, ChannelSet, _rng, covariance_factor
from .outage import tight_rate, tighten_rates
from .solver import SolverConfig, herm_mat, herm_vec, kkt_residual, solve_barrier
from .utility import UtilitySpec, utility_value

logger = logging.getLogger(__name__)

RANK_TOL = 1e-6


@dataclass
class SCAConfig:
    stop_rel: float = 0.01
    max_iters: int = 50
    theta: float = 1e-3
    randomization_count: int = 200
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    verbosity: int = 0


@dataclass
class SCATrace:
    """Per-iteration records plus the final matrix and vector solutions."""

    records: list
    W: np.ndarray
    rates_matrix: np.ndarray
    beamformers: BeamformerSet
    rates: np.ndarray
    utility: float
    ranks: list
    randomized: bool
    program: object = None
    solution: object = None
    spec: UtilitySpec | None = None
    W_relaxed: np.ndarray | None = None

    @property
    def utilities(self) -> np.ndarray:
        return np.array([r["utility"] for r in self.records])

    @property
    def iterations(self) -> int:
        return len(self.records) - 1

    @property
    def final_gaps(self) -> tuple:
        last = self.records[-1]
        return last["gap_x"], last["gap_y"]

    def stationarity(self) -> float:
        """KKT residual of the last subproblem's primal-dual pair against the unrestricted problem."""
        return original_kkt_residual(self.program, self.solution)


def original_kkt_residual(prog, sol) -> float:
    cs, spec = prog.meta["cs"], prog.meta["spec"]
    orig = build_original_program(cs, spec, free=prog.meta["free"], xbar=prog.meta["xbar"])
    by_name = dict(zip(prog.names, sol.duals))
    duals = np.array([by_name[nm] for nm in orig.names])
    return kkt_residual(orig, sol.x, duals, sol.psd_duals)


def _phase_fix(v: np.ndarray) -> np.ndarray:
    """Rotate so the first nonzero entry is real and positive."""
    v = np.asarray(v, dtype=complex)
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if len(nz):
        j = nz[0]
        v = v * np.exp(-1j * np.angle(v[j]))
        v[j] = abs(v[j])
    return v


def principal_vector(Q: np.ndarray) -> np.ndarray:
    """Unit principal eigenvector of a Hermitian matrix.

    A repeated top eigenvalue is resolved by projecting the lowest-index
    coordinate vector with a nonzero component onto the top eigenspace, so
    the choice does not depend on the basis LAPACK returns.
    """
    lam, U = np.linalg.eigh(Q)
    V = U[:, lam >= lam[-1] - 1e-12 * max(1.0, abs(lam[-1]))]
    if V.shape[1] == 1:
        return _phase_fix(V[:, 0])
    rows = np.sum(np.abs(V) ** 2, axis=1)
    j = int(np.flatnonzero(rows > 1e-12)[0])
    v = V @ V[j].conj()
    return _phase_fix(v / np.linalg.norm(v))


def mrt_init(cs: ChannelSet) -> BeamformerSet:
    """Full-power maximum-ratio transmission along each direct link's principal eigenvector."""
    return BeamformerSet(vectors=np.array(
        [np.sqrt(cs.P[i]) * principal_vector(cs.Q[i, i]) for i in range(cs.K)]))


def zf_init(cs: ChannelSet, blend: bool = True) -> BeamformerSet | None:
    """Zero-forcing beamformers, or None when some null space is empty.

    With ``blend`` the ZF direction is mixed with MRT (weights 0, 0.01, 0.1)
    until every interference-floor constraint holds, so the result can seed SCA.
    """
    K, Nt = cs.K, cs.Nt
    floor = cs.floor_active()
    out = []
    for i in range(K):
        S = sum((cs.Q[i, k] for k in range(K) if k != i), np.zeros((Nt, Nt), complex))
        lam, U = np.linalg.eigh(S)
        N = U[:, lam <= 1e-10 * max(1.0, lam[-1])]
        if N.shape[1] == 0:
            return None
        lp, V = np.linalg.eigh(N.conj().T @ cs.Q[i, i] @ N)
        if lp[-1] <= 1e-10:
            return None
        w_zf = _phase_fix(N @ V[:, -1])
        if not blend:
            out.append(np.sqrt(cs.P[i]) * w_zf)
            continue
        w_mrt = principal_vector(cs.Q[i, i])
        w_mrt = w_mrt * np.exp(1j * np.angle(np.vdot(w_mrt, w_zf)))
        for kappa in (0.0, 0.01, 0.1):
            w = (1 - kappa) * w_zf + kappa * w_mrt
            w = np.sqrt(cs.P[i]) * w / np.linalg.norm(w)
            if all(np.vdot(w, cs.Q[i, k] @ w).real >= cs.delta for k in range(K) if floor[i, k]):
                break
        else:
            return None
        out.append(w)
    return BeamformerSet(vectors=np.array(out))


# ---------------------------------------------------------------------------
# rank-one recovery


def numerical_rank(W: np.ndarray, tol: float = RANK_TOL) -> int:
    lam = np.linalg.eigvalsh(W)
    return int(np.sum(lam > tol * max(lam[-1], 0.0))) if lam[-1] > 0 else 0


def _null_space(rows, r: int) -> np.ndarray:
    """Orthonormal basis (as rows) of Hermitian coordinates orthogonal to ``rows``."""
    if not rows:
        return np.eye(r * r)
    M = np.array(rows).reshape(-1, r * r)
    norms = np.linalg.norm(M, axis=1)
    M = M[norms > 0] / norms[norms > 0, None]  # scale-free: tiny W must not look rank deficient
    if len(M) == 0:
        return np.eye(r * r)
    _, sv, Vt = np.linalg.svd(M)
    return Vt[np.sum(sv > 1e-10 * sv[0]):]


def rank_reduce(W: np.ndarray, objective: np.ndarray, caps, tol: float = 1e-8,
                rank_tol: float = RANK_TOL, max_steps: int = 100):
    """Purify a PSD solution of a trace-capped program to low rank.

    ``caps`` is a list of ``(A, lo, hi)``: each functional ``tr(W A)`` is kept
    inside its bounds. Moves ``W = V V^H -> V (I - s D) V^H`` along Hermitian
    ``D`` in the null space of the active functionals until the rank
    satisfies r^2 <= #active. Directions that also keep ``tr(W objective)``
    fixed are preferred; otherwise the sign is chosen so it never decreases.

    Returns ``(W_reduced, info)``; ``info["stalled"]`` flags a null space with
    no usable direction, in which case the input is returned.
    """
    W = 0.5 * (W + W.conj().T)
    info = {"rank_in": numerical_rank(W, rank_tol), "stalled": False, "steps": 0}
    if info["rank_in"] <= 1:
        info["rank_out"] = info["rank_in"]
        return W, info
    mats = [A for A, _, _ in caps]

    def factor(W):
        lam, U = np.linalg.eigh(W)
        # only round-off is dropped here so each step removes exactly one direction
        keep = lam > 1e-12 * lam[-1]
        return U[:, keep] * np.sqrt(lam[keep])

    V = factor(W)
    cur = V @ V.conj().T
    for step in range(max_steps):
        r = V.shape[1]
        vals = np.array([np.trace(cur @ A).real for A in mats])
        active = []
        for j, (A, lo, hi) in enumerate(caps):
            scale = max(1.0, abs(vals[j]))
            if (hi is not None and hi - vals[j] <= 1e-7 * scale) or \
               (lo is not None and vals[j] - lo <= 1e-7 * scale):
                active.append(j)
        if r == 1 or r * r <= len(active):
            break
        rows = [herm_vec(V.conj().T @ mats[j] @ V) for j in active]
        # prefer directions that also leave the objective unchanged
        nul = _null_space(rows + [herm_vec(V.conj().T @ objective @ V)], r)
        if len(nul) == 0:
            nul = _null_space(rows, r)
        if len(nul) == 0:
            info["stalled"] = True
            break
        D = herm_mat(nul[0], r)
        o = np.trace(V.conj().T @ objective @ V @ D).real
        if o > 0:
            D = -D
        lmax = np.linalg.eigvalsh(D)[-1]
        s = 1.0 / lmax if lmax > 1e-14 else np.inf
        for j, (A, lo, hi) in enumerate(caps):
            if j in active:
                continue
            d = np.trace(V.conj().T @ A @ V @ D).real
            if hi is not None and d < 0:
                s = min(s, (hi - vals[j]) / -d)
            if lo is not None and d > 0:
                s = min(s, (vals[j] - lo) / d)
        if not np.isfinite(s):
            info["stalled"] = True
            break
        s = max(s, 0.0)
        Wn = V @ (np.eye(r) - s * D) @ V.conj().T
        Wn = 0.5 * (Wn + Wn.conj().T)
        V = factor(Wn)
        cur = V @ V.conj().T
        info["steps"] = step + 1
    if info["stalled"] and V.shape[1] == info["rank_in"]:
        info["rank_out"] = info["rank_in"]
        return W, info
    info["rank_out"] = V.shape[1]
    return cur, info


def extract_vector(W: np.ndarray) -> np.ndarray:
    lam, U = np.linalg.eigh(W)
    return _phase_fix(U[:, -1]) * np.sqrt(max(lam[-1], 0.0))


def _candidate_traces(cands: np.ndarray, cs: ChannelSet) -> np.ndarray:
    # cands (C, K, Nt) -> T[c, k, i] = w_k^H Q_ki w_k
    return np.einsum("cka,kiab,ckb->cki", cands.conj(), cs.Q, cands).real


def gaussian_randomize(W: np.ndarray, cs: ChannelSet, spec: UtilitySpec, count: int = 200,
                       seed: int = 0):
    """Draw ``w_i ~ CN(0, W_i)`` candidates and keep the best outage-tight utility.

    Candidates above the power budget are scaled down to it. Candidates that
    break an interference floor are discarded; if all are, each ``W_i`` is
    truncated to its principal eigen-pair instead. Returns ``(BeamformerSet, rates)``.
    """
    W = np.asarray(W)
    K, Nt = cs.K, cs.Nt
    principal = BeamformerSet(vectors=np.array([extract_vector(Wk) for Wk in W]))
    if all(numerical_rank(Wk) <= 1 for Wk in W):
        return principal, tighten_rates(principal, cs)
    g = _rng(seed, 2)
    G = (g.standard_normal((count, K, Nt)) + 1j * g.standard_normal((count, K, Nt))) / np.sqrt(2)
    L = np.array([covariance_factor(Wk) for Wk in W])
    cands = np.einsum("kab,ckb->cka", L, G)
    pw = np.sum(np.abs(cands) ** 2, axis=2)
    cands *= np.sqrt(np.minimum(1.0, cs.P / np.maximum(pw, 1e-300)))[:, :, None]
    T = _candidate_traces(cands, cs)
    floor = cs.floor_active()
    ok = np.all((T >= cs.delta) | ~floor[None], axis=(1, 2))
    ok &= np.all(np.diagonal(T, axis1=1, axis2=2) > 0, axis=1)
    if not ok.any():
        return principal, tighten_rates(principal, cs)
    T = T[ok]
    off = ~np.eye(K, dtype=bool)
    s = np.diagonal(T, axis1=1, axis2=2)
    t = np.stack([T[:, off[:, i], i] for i in range(K)], axis=1)
    R = tight_rate(s, t, cs.sigma2[None, :], cs.rho[None, :])
    u = utility_value(spec, R)
    best = int(np.argmax(u))
    return BeamformerSet(vectors=cands[ok][best]), R[best]


# ---------------------------------------------------------------------------
# main loop


def _caps_for(prog, sol, cs: ChannelSet, i: int):
    """Trace caps of the per-transmitter problem that the SCA solution fixes."""
    pt = unpack(prog, sol.x)
    xbar = prog.meta["xbar"]
    active, floor = cs.link_active(), cs.floor_active()
    caps = [(np.eye(cs.Nt), None, cs.P[i])]
    for k in range(cs.K):
        if k == i:
            continue
        hi = None
        if active[i, k]:
            hi = np.exp(xbar[i, k]) * (pt["x"][(i, k)] - xbar[i, k] + 1)
        lo = cs.delta if floor[i, k] else None
        if hi is not None or lo is not None:
            caps.append((cs.Q[i, k], lo, hi))
    return caps


def finalize(W, caps_list, cs: ChannelSet, spec: UtilitySpec, count: int, seed: int):
    """Rank reduction followed by eigen-extraction or Gaussian randomization."""
    reduced, ranks = [], []
    for i, Wi in enumerate(W):
        Wr, info = rank_reduce(Wi, cs.Q[i, i], caps_list[i])
        reduced.append(Wr)
        ranks.append(info)
    reduced = np.array(reduced)
    randomized = not all(numerical_rank(Wr) <= 1 for Wr in reduced)
    bf, rates = gaussian_randomize(reduced, cs, spec, count=count, seed=seed)
    return reduced, ranks, randomized, bf, rates


def run_sca(cs: ChannelSet, spec: UtilitySpec, init: BeamformerSet | None = None,
            cfg: SCAConfig | None = None) -> SCATrace:
    """Successive convex approximation from ``init`` (MRT by default).

    Each iteration tightens the rates at the current beamformers, linearizes
    at the resulting anchor, solves the convex restriction, and stops once
    the relative utility gain drops below ``cfg.stop_rel``.
    """
    cfg = cfg or SCAConfig()
    init = init or mrt_init(cs)
    W = init.as_matrices()
    Rt = tighten_rates(init, cs)
    U = float(utility_value(spec, Rt))
    records = [{"n": 0, "utility": U, "rates": Rt.copy(), "gap_x": np.nan, "gap_y": np.nan,
                "status": "init", "kkt": np.nan}]
    prog = sol = None
    for n in range(1, cfg.max_iters + 1):
        anchor = compute_anchor(BeamformerSet(matrices=W), Rt, cs)
        prog = build_central_subproblem(cs, anchor, spec)
        start = feasible_interior_point(prog, anchor_point(prog, W, Rt), theta=cfg.theta)
        sol = solve_barrier(prog, start, cfg.solver, verbosity=cfg.verbosity)
        pt = unpack(prog, sol.x)
        W = np.array([pt["W"][k] for k in range(cs.K)])
        Rt = tighten_rates(BeamformerSet(matrices=W), cs)
        U_new = float(utility_value(spec, Rt))
        gx = max((abs(v - anchor.xbar[kj]) for kj, v in pt["x"].items() if kj[0] != kj[1]),
                 default=0.0)
        gy = float(np.max(np.abs(pt["y"] - anchor.ybar)))
        records.append({"n": n, "utility": U_new, "rates": Rt.copy(), "rates_hat": pt["R"].copy(),
                        "gap_x": gx, "gap_y": gy, "status": sol.status, "kkt": sol.kkt_residual})
        if cfg.verbosity:
            logger.info("iter %d U=%.8g gap_x=%.2e gap_y=%.2e %s", n, U_new, gx, gy, sol.status)
        done = abs(U_new - U) / max(abs(U), 1e-300) < cfg.stop_rel
        U = U_new
        if done:
            break
    caps = [_caps_for(prog, sol, cs, i) for i in range(cs.K)]
    reduced, ranks, randomized, bf, rates = finalize(W, caps, cs, spec,
                                                     cfg.randomization_count, cfg.seed)
    return SCATrace(records=records, W=reduced, rates_matrix=Rt, beamformers=bf, rates=rates,
                    utility=float(utility_value(spec, rates)), ranks=ranks,
                    randomized=randomized, program=prog, solution=sol, spec=spec,
                    W_relaxed=W)
