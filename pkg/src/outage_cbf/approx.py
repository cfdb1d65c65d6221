"""Linearization anchors and the convex restrictions solved at each SCA step.

One builder covers both program shapes: the centralized subproblem frees every
transmitter, the per-node subproblem of the round-robin scheme frees a single
transmitter and treats every other link as a published constant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exceptions import DomainError, InfeasibleAnchorError, InfeasibleStartError
from .model import BeamformerSet, ChannelSet
from .solver import ConvexProgram, ExpAffine, SmoothFn, SoftplusSum, herm_mat, herm_vec
from .utility import UtilitySpec, utility_gradient, utility_hessian_diag, utility_value

LN2 = np.log(2.0)
# ConvexProgram tags that belong to the restriction proper (R >= 0 is a variable bound)
CENSUS_TAGS = ("b", "c", "c2", "d", "e", "P", "delta")


@dataclass
class Anchor:
    """Linearization point: ``xbar[k, i] = ln tr(W_k Q_ki)``, ``ybar_i = ln(2^R_i - 1)``.

    Links with an all-zero covariance carry ``-inf``.
    """

    xbar: np.ndarray
    ybar: np.ndarray

    @property
    def zbar(self) -> np.ndarray:
        return np.exp(self.ybar - np.diag(self.xbar))


def compute_anchor(bf: BeamformerSet, Rt, cs: ChannelSet) -> Anchor:
    Rt = np.asarray(Rt, float)
    if np.any(Rt <= 0):
        raise DomainError("anchor rates must be positive")
    T = cs.traces(bf)
    active = cs.link_active()
    floor = cs.floor_active()
    low = active & (T < cs.delta * (1 - 1e-12)) & floor
    if np.any(low) or np.any(T[active] <= 0):
        k, i = np.argwhere(low | (active & (T <= 0)))[0]
        raise InfeasibleAnchorError(f"tr(W_{k} Q_{k}{i}) = {T[k, i]:.3e} is below delta")
    xbar = np.full(T.shape, -np.inf)
    xbar[active] = np.log(T[active])
    return Anchor(xbar=xbar, ybar=np.log(np.expm1(Rt * LN2)))


def first_order_gap(kind: str, anchor: float, point: float) -> float:
    """``f(point)`` minus the tangent of ``f`` at ``anchor``; f is exp or log2(1 + e^y)."""
    d = point - anchor
    if kind == "exp":
        return float(np.exp(anchor) * np.expm1(d) - np.exp(anchor) * d)
    if kind == "softplus-rate":
        f = np.logaddexp(0.0, point) - np.logaddexp(0.0, anchor)
        return float((f - _sigmoid(anchor) * d) / LN2)
    raise ValueError(f"unknown kind {kind!r}")


def _sigmoid(a):
    return np.exp(-np.logaddexp(0.0, -a))


def rate_tangent(ybar, y):
    """First-order lower bound of ``log2(1 + e^y)`` at ``ybar``."""
    return (np.logaddexp(0.0, ybar) + _sigmoid(ybar) * (y - ybar)) / LN2


class UtilityObjective:
    def __init__(self, idx, spec: UtilitySpec):
        self.idx = np.asarray(idx)
        self.spec = spec

    def value(self, R):
        try:
            return float(utility_value(self.spec, R))
        except DomainError:
            return -np.inf

    def grad(self, R):
        return utility_gradient(self.spec, R)

    def hess(self, R):
        return np.diag(utility_hessian_diag(self.spec, R))


def _active_links(cs: ChannelSet, xbar, free) -> np.ndarray:
    """Link mask built from local CDI for free transmitters and from the
    shared log-traces (finite entries) for everyone else."""
    act = np.isfinite(np.asarray(xbar, float))
    for k in free:
        act[k] = np.any(cs.Q[k] != 0, axis=(1, 2))
    return act


class _Layout:
    def __init__(self, cs: ChannelSet, free, active):
        K, nn = cs.K, cs.Nt * cs.Nt
        self.free = sorted(free)
        self.W, self.x = {}, {}
        n = 0
        for k in self.free:
            self.W[k] = np.arange(n, n + nn)
            n += nn
        for k in self.free:
            for j in range(K):
                if active[k, j] or k == j:
                    self.x[(k, j)] = n
                    n += 1
        self.R = np.arange(n, n + K)
        self.y = np.arange(n + K, n + 2 * K)
        self.z = np.arange(n + 2 * K, n + 3 * K)
        self.n = n + 3 * K

    def as_dict(self):
        return {"W": self.W, "x": self.x, "R": self.R, "y": self.y, "z": self.z,
                "free": self.free}


def _build(cs: ChannelSet, xbar, ybar, spec: UtilitySpec, free, original=False):
    """Shared constructor for the restricted (or, with ``original``, the unrestricted) program."""
    K, Nt = cs.K, cs.Nt
    xbar = np.asarray(xbar, float)
    ybar = np.asarray(ybar, float)
    if len(spec.alpha) != K:
        raise ValueError("utility weights do not match K")
    free = sorted(free)
    active = _active_links(cs, xbar, free)
    L = _Layout(cs, free, active)
    # only the free transmitters' own covariance rows are read
    qv = {k: herm_vec(cs.Q[k]) for k in free}
    floor = {k: np.linalg.eigvalsh(cs.Q[k])[:, -1] * cs.P[k] >= 2 * cs.delta for k in free}
    nonlinear, A, b, names, tags = [], [], [], [], []

    def xref(k, j):
        """('var', index) or ('const', value) for the log-trace of link k -> j."""
        if (k, j) in L.x:
            return "var", L.x[(k, j)]
        return "const", xbar[k, j]

    for j in range(K):
        # (b) outage constraint in log form
        sign, xjj = xref(j, j)
        idx = [L.z[j], L.y[j]] + ([xjj] if sign == "var" else [])
        terms = []
        for k in range(K):
            if k == j or not active[k, j]:
                continue
            s, xk = xref(k, j)
            if s == "var" and xk not in idx:
                idx.append(xk)
            terms.append((s, xk))
        pos = {v: p for p, v in enumerate(idx)}
        M = np.zeros((len(terms), len(idx)))
        c = np.zeros(len(terms))
        for r, (s, xk) in enumerate(terms):
            M[r, pos[L.y[j]]] = 1.0
            if s == "var":
                M[r, pos[xk]] += 1.0
            else:
                c[r] += xk
            if sign == "var":
                M[r, pos[xjj]] -= 1.0
            else:
                c[r] -= xjj
        l = np.zeros(len(idx))
        l[0] = cs.sigma2[j]
        nonlinear.append(SoftplusSum(np.array(idx), l, M, c, float(np.log(cs.rho[j])),
                                     name=f"b[{j}]", tag="b"))
        # (e) exp(y_j - x_jj) <= z_j
        if sign == "var":
            nonlinear.append(ExpAffine(np.array([L.y[j], xjj, L.z[j]]), np.array([1.0, -1.0, 0.0]),
                                       0.0, np.array([0.0, 0.0, -1.0]), name=f"e[{j}]", tag="e"))
        else:
            nonlinear.append(ExpAffine(np.array([L.y[j], L.z[j]]), np.array([1.0, 0.0]), -xjj,
                                       np.array([0.0, -1.0]), name=f"e[{j}]", tag="e"))

    def row():
        return np.zeros(L.n)

    for k in L.free:
        # (c2) exp(x_kk) <= tr(W_k Q_kk)
        idx = np.concatenate([[L.x[(k, k)]], L.W[k]])
        nonlinear.append(ExpAffine(idx, np.eye(len(idx))[0], 0.0,
                                   np.concatenate([[0.0], -qv[k][k]]), name=f"c2[{k}]", tag="c2"))
        # (c) tr(W_k Q_kj) <= e^xbar (x_kj - xbar + 1)
        for j in range(K):
            if j == k or not active[k, j]:
                continue
            xi = L.x[(k, j)]
            if original:
                idx = np.concatenate([[xi], L.W[k]])
                q = qv[k][j]
                nonlinear.append(SmoothFn(
                    idx,
                    lambda u, q=q: q @ u[1:] - np.exp(u[0]),
                    lambda u, q=q: np.concatenate([[-np.exp(u[0])], q]),
                    lambda u: _corner(-np.exp(u[0]), len(u)),
                    name=f"c[{k},{j}]", tag="c"))
            else:
                r = row()
                r[L.W[k]] = qv[k][j]
                e = np.exp(xbar[k, j])
                r[xi] = -e
                A.append(r)
                b.append(e * (1 - xbar[k, j]))
                names.append(f"c[{k},{j}]")
                tags.append("c")
    for j in range(K):
        # (d) R_j <= tangent of log2(1 + e^y) at ybar_j
        if original:
            idx = np.array([L.R[j], L.y[j]])
            nonlinear.append(SmoothFn(
                idx,
                lambda u: u[0] - np.logaddexp(0.0, u[1]) / LN2,
                lambda u: np.array([1.0, -_sigmoid(u[1]) / LN2]),
                lambda u: _corner(-_sigmoid(u[1]) * (1 - _sigmoid(u[1])) / LN2, 2, pos=1),
                name=f"d[{j}]", tag="d"))
        else:
            slope = _sigmoid(ybar[j]) / LN2
            r = row()
            r[L.R[j]] = 1.0
            r[L.y[j]] = -slope
            A.append(r)
            b.append(np.logaddexp(0.0, ybar[j]) / LN2 - slope * ybar[j])
            names.append(f"d[{j}]")
            tags.append("d")
    eye = herm_vec(np.eye(Nt))
    for k in L.free:
        r = row()
        r[L.W[k]] = eye
        A.append(r)
        b.append(cs.P[k])
        names.append(f"P[{k}]")
        tags.append("P")
        for j in range(K):
            if floor[k][j]:
                r = row()
                r[L.W[k]] = -qv[k][j]
                A.append(r)
                b.append(-cs.delta)
                names.append(f"delta[{k},{j}]")
                tags.append("delta")
    for j in range(K):
        r = row()
        r[L.R[j]] = -1.0
        A.append(r)
        b.append(0.0)
        names.append(f"R>=0[{j}]")
        tags.append("nonneg")
    return ConvexProgram(
        n=L.n, objective=UtilityObjective(L.R, spec), nonlinear=nonlinear,
        A=np.array(A).reshape(-1, L.n), b=np.array(b), lin_names=names, lin_tags=tags,
        blocks=[(L.W[k], Nt) for k in L.free], block_names=[f"W[{k}]" for k in L.free],
        layout=L.as_dict(),
        meta={"xbar": xbar, "ybar": ybar, "spec": spec, "cs": cs, "free": L.free,
              "original": original})


def _corner(v, n, pos=0):
    H = np.zeros((n, n))
    H[pos, pos] = v
    return H


def build_central_subproblem(cs: ChannelSet, anchor: Anchor, spec: UtilitySpec) -> ConvexProgram:
    """Convex restriction with every transmitter's beamformer free."""
    if not (np.all(np.isfinite(anchor.ybar))
            and np.all(np.isfinite(anchor.xbar[cs.link_active()]))):
        raise InfeasibleAnchorError("anchor has non-finite entries")
    return _build(cs, anchor.xbar, anchor.ybar, spec, range(cs.K))


def build_local_subproblem(i: int, cs: ChannelSet, shared_xbar, ybar, spec: UtilitySpec) -> ConvexProgram:
    """Per-node restriction: only ``W_i`` and the scalars are free.

    Only ``cs.Q[i, :]`` is read; links of other transmitters enter through
    ``shared_xbar`` alone.
    """
    return _build(cs, shared_xbar, ybar, spec, [i])


def build_original_program(cs: ChannelSet, spec: UtilitySpec, free=None, xbar=None) -> ConvexProgram:
    """The unrestricted reformulation: ``tr(W Q) <= e^x`` and ``R <= log2(1 + e^y)``.

    Nonconvex, so it is only used to evaluate KKT residuals; its variables and
    constraint names line up with the restricted programs.
    """
    free = range(cs.K) if free is None else free
    xbar = np.zeros((cs.K, cs.K)) if xbar is None else xbar
    return _build(cs, xbar, np.zeros(cs.K), spec, free, original=True)


def build_cap_program(Q_obj, caps, P: float) -> ConvexProgram:
    """max ``tr(W Q_obj)`` s.t. ``lo_k <= tr(W A_k) <= hi_k``, ``tr(W) <= P``, W PSD.

    ``caps`` is a list of ``(A_k, lo_k, hi_k)``; ``lo``/``hi`` may be None.
    """
    Nt = Q_obj.shape[0]
    n = Nt * Nt
    q = herm_vec(Q_obj)
    A, b, names = [herm_vec(np.eye(Nt))], [P], ["P"]
    for k, (Ak, lo, hi) in enumerate(caps):
        a = herm_vec(Ak)
        if hi is not None:
            A.append(a)
            b.append(hi)
            names.append(f"cap[{k}]")
        if lo is not None:
            A.append(-a)
            b.append(-lo)
            names.append(f"floor[{k}]")
    obj = SmoothFn(np.arange(n), lambda u: q @ u, lambda u: q.copy(), lambda u: np.zeros((n, n)))
    return ConvexProgram(n=n, objective=obj, A=np.array(A), b=np.array(b), lin_names=names,
                         lin_tags=[nm.split("[")[0] for nm in names],
                         blocks=[(np.arange(n), Nt)], block_names=["W"])


# ---------------------------------------------------------------------------
# points


def pack(prog: ConvexProgram, W, R, x, y, z) -> np.ndarray:
    """Flatten a point. ``W`` is indexable by transmitter, ``x`` by (k, j)."""
    lay = prog.layout
    v = np.zeros(prog.n)
    for k, idx in lay["W"].items():
        v[idx] = herm_vec(W[k])
    for kj, p in lay["x"].items():
        v[p] = x[kj]
    v[lay["R"]] = R
    v[lay["y"]] = y
    v[lay["z"]] = z
    return v


def unpack(prog: ConvexProgram, v) -> dict:
    lay = prog.layout
    Nt = prog.blocks[0][1] if prog.blocks else 0
    return {
        "W": {k: herm_mat(v[idx], Nt) for k, idx in lay["W"].items()},
        "x": {kj: float(v[p]) for kj, p in lay["x"].items()},
        "R": np.asarray(v[lay["R"]]),
        "y": np.asarray(v[lay["y"]]),
        "z": np.asarray(v[lay["z"]]),
    }


def anchor_point(prog: ConvexProgram, W, Rt) -> np.ndarray:
    """The point (W, R~, xbar, ybar, zbar) that makes the restriction tight at its anchor."""
    xbar, ybar = prog.meta["xbar"], prog.meta["ybar"]
    x = {kj: xbar[kj] for kj in prog.layout["x"]}
    return pack(prog, W, Rt, x, ybar, np.exp(ybar - np.diag(xbar)))


def feasible_interior_point(prog: ConvexProgram, point, theta: float = 1e-3,
                            shrink_steps: int = 20) -> np.ndarray:
    """Push an anchor-consistent (boundary) point strictly inside the feasible set.

    ``W_k <- (1 - theta) W_k + theta P_k/(2 Nt) I``; the log-trace variables are
    then re-derived from the perturbed traces with a slack proportional to
    theta, y is lowered until the outage constraint holds with margin, and R
    sits just below its tangent bound. theta is divided by 10 on failure.
    With ``theta = 0`` the input point is returned unchanged.
    """
    if theta == 0:
        return np.array(point, dtype=float)
    cs: ChannelSet = prog.meta["cs"]
    xbar, ybar = prog.meta["xbar"], prog.meta["ybar"]
    pt = unpack(prog, point)
    for _ in range(shrink_steps + 1):
        try:
            v = _interior(prog, cs, pt, xbar, ybar, theta)
        except (ValueError, FloatingPointError):
            v = None
        if v is not None and prog.min_slack(v) < 0:
            return v
        theta /= 10
    raise InfeasibleStartError("could not build a strictly feasible start")


def _interior(prog, cs, pt, xbar, ybar, theta):
    K, Nt = cs.K, cs.Nt
    lay = prog.layout
    W = {k: (1 - theta) * Wk + theta * cs.P[k] / (2 * Nt) * np.eye(Nt) for k, Wk in pt["W"].items()}
    xval = {}
    for (k, j) in lay["x"]:
        T = np.trace(W[k] @ cs.Q[k, j]).real
        if k == j:
            xval[(k, j)] = np.log(T) - theta
        else:
            xval[(k, j)] = xbar[k, j] - 1 + T / np.exp(xbar[k, j]) + theta

    def xl(k, j):
        return xval[(k, j)] if (k, j) in xval else xbar[k, j]

    active = _active_links(cs, xbar, lay["free"])
    y = np.empty(K)
    z = np.empty(K)
    R = np.empty(K)
    for j in range(K):
        xjj = xl(j, j)
        cross = np.array([xl(k, j) for k in range(K) if k != j and active[k, j]])
        target = -theta * min(1.0, -np.log(cs.rho[j]))

        def lhs(yy):
            return (np.log(cs.rho[j]) + cs.sigma2[j] * np.exp(yy - xjj) * (1 + theta)
                    + np.sum(np.logaddexp(0.0, cross - xjj + yy)) - target)

        if theta == 0:
            y[j] = ybar[j]
        else:
            hi = ybar[j] + 1.0
            lo = ybar[j] - 1.0
            while lhs(lo) > 0:
                lo -= 2 * (hi - lo)
                if lo < ybar[j] - 200:
                    raise ValueError("outage constraint cannot be made strict")
            while lhs(hi) < 0:
                hi += 1.0
            y[j] = brentq(lhs, lo, hi, xtol=1e-14, rtol=1e-15)
        z[j] = np.exp(y[j] - xjj) * (1 + theta)
        tan = rate_tangent(ybar[j], y[j])
        if tan <= 0:
            raise ValueError("rate bound is not positive")
        R[j] = tan * (1 - theta)
    return pack(prog, W, R, xval, y, z)
