"""Baselines, brute-force oracles and experiment sweeps with CSV/SVG output."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .approx import build_cap_program
from .dist import DistConfig, run_distributed
from .exceptions import OutageCBFError
from .model import BeamformerSet, ChannelSet, generate_channel_set
from .outage import closed_form_outage, tight_rate, tighten_rates
from .sca import SCAConfig, extract_vector, mrt_init, run_sca, zf_init
from .solver import herm_mat, herm_vec, solve_barrier
from .utility import UtilitySpec, utility_value

logger = logging.getLogger(__name__)

METHODS = ("sca", "dist", "mrt", "zf", "exhaustive", "oracle")


@dataclass
class BaselineResult:
    rates: np.ndarray
    utility: float
    beamformers: BeamformerSet | None = None
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# exhaustive search over interference caps (K = 2)


def cap_grid(delta: float, top: float, M: int) -> np.ndarray:
    """Geometric levels ``delta * (top/delta)^(m/M)``, m = 1..M; grids for M and 2M are nested."""
    m = np.arange(1, M + 1)
    return delta * (top / delta) ** (m / M)


def _cap_start(A: np.ndarray, lo, hi: float, P: float) -> np.ndarray:
    """Strictly feasible PSD start for one cross-link cap and the power budget."""
    Nt = A.shape[0]
    lam, U = np.linalg.eigh(A)
    target = np.sqrt(lo * hi) if lo is not None else 0.5 * hi
    trA = max(np.trace(A).real, 1e-300)
    a = min(P / (4 * Nt), 0.5 * target / trA)
    b = (target - a * trA) / lam[-1]
    u = U[:, -1:]
    return a * np.eye(Nt) + b * (u @ u.conj().T)


def solve_cap(Q_obj, A, lo, hi, P, cfg=None):
    """Best signal trace for one transmitter under ``lo <= tr(W A) <= hi`` and ``tr W <= P``."""
    prog = build_cap_program(Q_obj, [(A, lo, hi)], P)
    sol = solve_barrier(prog, herm_vec(_cap_start(A, lo, hi, P)), cfg)
    W = herm_mat(sol.x, Q_obj.shape[0])
    return float(np.trace(W @ Q_obj).real), W


def exhaustive_search(cs: ChannelSet, spec: UtilitySpec, M: int = 64, cfg=None) -> BaselineResult:
    """Grid search over the two interference caps of a two-user system.

    For every cap ``I_ik`` on the nested geometric grid the cap program of
    transmitter i is solved once; each grid pair then yields tight rates with
    signal from the cap program and interference equal to the peer's cap.
    """
    if cs.K != 2:
        raise ValueError("exhaustive search is only supported for K = 2")
    floor = cs.floor_active()
    sig, Ws, grids = [], [], []
    for i in range(2):
        k = 1 - i
        A = cs.Q[i, k]
        top = cs.P[i] * np.linalg.eigvalsh(A)[-1]
        if top <= cs.delta:
            raise ValueError(f"link {i}->{k} is too weak for a cap grid")
        g = cap_grid(cs.delta, top, M)
        lo = cs.delta if floor[i, k] else None
        res = [solve_cap(cs.Q[i, i], A, lo, h, cs.P[i], cfg) for h in g]
        sig.append(np.array([r[0] for r in res]))
        Ws.append([r[1] for r in res])
        grids.append(g)
    # a indexes I_01 (transmitter 0's cap), b indexes I_10
    s0 = np.broadcast_to(sig[0][:, None], (M, M))
    s1 = np.broadcast_to(sig[1][None, :], (M, M))
    t0 = np.broadcast_to(grids[1][None, :], (M, M))
    t1 = np.broadcast_to(grids[0][:, None], (M, M))
    R0 = tight_rate(s0, t0[..., None], cs.sigma2[0], cs.rho[0])
    R1 = tight_rate(s1, t1[..., None], cs.sigma2[1], cs.rho[1])
    R = np.stack([R0, R1], axis=-1)
    U = utility_value(spec, R)
    a, b = np.unravel_index(int(np.argmax(U)), U.shape)
    W = np.array([Ws[0][a], Ws[1][b]])
    return BaselineResult(rates=R[a, b].copy(), utility=float(U[a, b]),
                          beamformers=BeamformerSet(vectors=np.array([extract_vector(w) for w in W])),
                          info={"caps": (grids[0][a], grids[1][b]), "W": W, "M": M})


def power_grid_oracle(cs: ChannelSet, spec: UtilitySpec, grid: int = 200) -> BaselineResult:
    """Brute force over single-antenna powers ``p_i in {P_i m / grid}``, m = 1..grid.

    Each axis also carries the smallest power meeting that transmitter's
    interference floors, where corner optima of sum-rate-like utilities sit.
    """
    if cs.Nt != 1:
        raise ValueError("power grid oracle needs Nt = 1")
    if cs.K > 3:
        raise ValueError("power grid oracle refuses K > 3")
    K = cs.K
    q = cs.Q[:, :, 0, 0].real
    floor = cs.floor_active()
    axes = []
    for i in range(K):
        ax = cs.P[i] * np.arange(1, grid + 1) / grid
        need = [cs.delta / q[i, k] for k in range(K) if floor[i, k] and q[i, k] > 0]
        if need and max(need) < ax[0]:
            ax = np.concatenate([[max(need) * (1 + 1e-9)], ax])
        axes.append(ax)
    p = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, K)
    T = p[:, :, None] * q[None]  # T[g, k, i] = p_k q_ki
    ok = np.all((T >= cs.delta) | ~floor[None], axis=(1, 2))
    off = ~np.eye(K, dtype=bool)
    s = np.diagonal(T, axis1=1, axis2=2)
    t = np.stack([T[:, off[:, i], i] for i in range(K)], axis=1)
    R = tight_rate(s, t, cs.sigma2[None, :], cs.rho[None, :])
    U = np.where(ok, utility_value(spec, R), -np.inf)
    g = int(np.argmax(U))
    bf = BeamformerSet(vectors=np.sqrt(p[g]).astype(complex)[:, None])
    return BaselineResult(rates=R[g].copy(), utility=float(U[g]), beamformers=bf,
                          info={"powers": p[g].copy(), "grid": grid})


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class ExperimentConfig:
    """One sweep: ``axis`` is ``"eta"`` or ``"snr_db"`` (1/sigma^2 in dB) over ``values``."""

    n_instances: int = 20
    seed: int = 0
    axis: str = "eta"
    values: tuple = (0.2, 0.5, 0.8)
    K: int = 2
    Nt: int = 4
    rank: int | None = None
    beta: float = 0.0
    alpha: tuple | None = None
    methods: tuple = ("sca", "mrt")
    M: int = 32
    eta: float = 0.5
    snr_db: float = 10.0
    eps: float = 0.1
    stop_rel: float = 0.01
    max_iters: int = 50
    n_jobs: int = 1
    out_dir: str | None = None

    def __post_init__(self):
        self.values = tuple(float(v) for v in self.values)
        self.methods = tuple(self.methods)
        if self.alpha is not None:
            self.alpha = tuple(float(a) for a in self.alpha)
        if self.axis not in ("eta", "snr_db"):
            raise ValueError("axis must be 'eta' or 'snr_db'")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if "exhaustive" in self.methods and self.K != 2:
            raise ValueError("exhaustive search is only allowed for K = 2")
        if "oracle" in self.methods and self.Nt != 1:
            raise ValueError("the power-grid oracle needs Nt = 1")
        if self.n_instances < 1 or self.K < 1 or self.Nt < 1:
            raise ValueError("n_instances, K and Nt must be positive")

    @property
    def spec(self) -> UtilitySpec:
        if self.alpha is None:
            return UtilitySpec.uniform(self.K, self.beta)
        return UtilitySpec(beta=self.beta, alpha=self.alpha)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls(**json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def instance(self, value: float, j: int) -> ChannelSet:
        eta = value if self.axis == "eta" else self.eta
        snr = value if self.axis == "snr_db" else self.snr_db
        return generate_channel_set(self.K, self.Nt, eta=eta, rank=self.rank, seed=self.seed + j,
                                    sigma2=10 ** (-snr / 10), eps=self.eps)


def verify_solution(bf: BeamformerSet, rates, cs: ChannelSet) -> bool:
    """Power within budget and closed-form outage within target at the reported rates."""
    if np.any(bf.power() > cs.P + 1e-9) or np.any(np.asarray(rates) < 0):
        return False
    return all(closed_form_outage(bf, rates[i], i, cs) <= cs.eps[i] + 1e-6 for i in range(cs.K))


def run_method(method: str, cs: ChannelSet, spec: UtilitySpec, cfg: ExperimentConfig | None = None):
    """Run one method on one instance; returns ``(utility, rates, beamformers)``."""
    stop = cfg.stop_rel if cfg else 0.01
    iters = cfg.max_iters if cfg else 50
    if method == "sca":
        tr = run_sca(cs, spec, cfg=SCAConfig(stop_rel=stop, max_iters=iters))
        return tr.utility, tr.rates, tr.beamformers
    if method == "dist":
        tr = run_distributed(cs, spec, cfg=DistConfig(stop_rel=stop))
        return tr.utility, tr.rates, tr.beamformers
    if method in ("mrt", "zf"):
        bf = mrt_init(cs) if method == "mrt" else zf_init(cs, blend=False)
        if bf is None:
            raise ValueError("zero-forcing is infeasible for this instance")
        R = tighten_rates(bf, cs)
        return float(utility_value(spec, R)), R, bf
    if method == "exhaustive":
        res = exhaustive_search(cs, spec, cfg.M if cfg else 64)
    elif method == "oracle":
        res = power_grid_oracle(cs, spec)
    else:
        raise ValueError(f"unknown method {method!r}")
    return res.utility, res.rates, res.beamformers


def _instance_job(args):
    cfg, value, j = args
    cs = cfg.instance(value, j)
    out = {}
    for m in cfg.methods:
        try:
            u, R, bf = run_method(m, cs, cfg.spec, cfg)
            ok = np.isfinite(u) and verify_solution(bf, R, cs)
            out[m] = u if ok else None
        except (OutageCBFError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            logger.warning("%s failed on %s=%g instance %d: %s", m, cfg.axis, value, j, exc)
            out[m] = None
    return value, j, out


def run_sweep(cfg: ExperimentConfig):
    """Run every method on every instance of every sweep point.

    Returns the summary rows; when ``cfg.out_dir`` is set also writes
    ``summary.csv``, ``chart.svg`` and ``config.json`` there.
    """
    jobs = [(cfg, v, j) for v in cfg.values for j in range(cfg.n_instances)]
    if cfg.n_jobs > 1:
        with ProcessPoolExecutor(cfg.n_jobs) as ex:
            results = list(ex.map(_instance_job, jobs))
    else:
        results = [_instance_job(a) for a in jobs]
    rows = []
    for v in cfg.values:
        for m in cfg.methods:
            us = [r[2][m] for r in results if r[0] == v]
            good = [u for u in us if u is not None]
            n = len(good)
            mean = math.fsum(good) / n if n else float("nan")
            var = math.fsum((u - mean) ** 2 for u in good) / (n - 1) if n > 1 else 0.0
            rows.append({"sweep_value": v, "method": m, "mean_utility": mean,
                         "stderr": math.sqrt(var / n) if n else float("nan"),
                         "n_instances": n, "failures": len(us) - n})
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.csv").write_text(summary_csv(rows))
        (out / "chart.svg").write_text(svg_chart(rows, xlabel=cfg.axis, ylabel="utility",
                                                 title=f"K={cfg.K} Nt={cfg.Nt} beta={cfg.beta} "
                                                       f"n={cfg.n_instances}"))
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    return rows


SUMMARY_COLUMNS = ("sweep_value", "method", "mean_utility", "stderr", "n_instances", "failures")


def summary_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in SUMMARY_COLUMNS])
    return buf.getvalue()


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def svg_chart(rows, xlabel="x", ylabel="y", title="", width=640, height=420) -> str:
    """Self-contained SVG line chart, one polyline per method, with error bars."""
    series = {}
    for r in rows:
        if np.isfinite(r["mean_utility"]):
            series.setdefault(r["method"], []).append((r["sweep_value"], r["mean_utility"],
                                                       r["stderr"]))
    pts = [p for s in series.values() for p in s]
    left, right, top, bottom = 70, 130, 40, 50
    pw, ph = width - left - right, height - top - bottom
    if pts:
        xs = [p[0] for p in pts]
        ys = [p[1] - p[2] for p in pts] + [p[1] + p[2] for p in pts]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
    else:
        x0 = y0 = 0.0
        x1 = y1 = 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def X(v):
        return left + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return top + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle">{title}</text>',
           f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for t in np.linspace(x0, x1, 5):
        out.append(f'<text x="{X(t):.1f}" y="{top + ph + 16}" text-anchor="middle">{t:.3g}</text>')
    for t in np.linspace(y0, y1, 5):
        out.append(f'<text x="{left - 6}" y="{Y(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{ylabel}</text>')
    for c, (name, s) in enumerate(series.items()):
        col = _COLORS[c % len(_COLORS)]
        s = sorted(s)
        poly = " ".join(f"{X(x):.1f},{Y(y):.1f}" for x, y, _ in s)
        out.append(f'<polyline points="{poly}" fill="none" stroke="{col}" stroke-width="2"/>')
        for x, y, e in s:
            out.append(f'<circle cx="{X(x):.1f}" cy="{Y(y):.1f}" r="3" fill="{col}"/>')
            if e > 0:
                out.append(f'<line x1="{X(x):.1f}" y1="{Y(y - e):.1f}" x2="{X(x):.1f}" '
                           f'y2="{Y(y + e):.1f}" stroke="{col}"/>')
        ly = top + 16 * c + 8
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" '
                   f'stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 38}" y="{ly + 4}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
