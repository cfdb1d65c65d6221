"""Round-robin distributed SCA over a simulated error-free broadcast bus."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .approx import anchor_point, build_local_subproblem, feasible_interior_point, unpack
from .exceptions import InfeasibleStartError, NumericFailure
from .model import BeamformerSet, ChannelSet
from .outage import rates_from_traces
from .sca import SCAConfig, _caps_for, finalize, mrt_init, original_kkt_residual
from .solver import solve_barrier
from .utility import UtilitySpec, utility_value

logger = logging.getLogger(__name__)

SCHEMES = ("alg2", "cdi-exchange", "control-center")


def overhead_count(K: int, Nt: int, N: int, scheme: str = "alg2") -> int:
    """Real values exchanged by each coordination scheme.

    ``alg2``: every transmitter sends K log-traces to K-1 peers per round.
    ``cdi-exchange``: every transmitter sends its K covariances to all peers.
    ``control-center``: K^2 covariances up, K beamformers plus rates down.
    """
    if min(K, Nt, N) < 1:
        raise ValueError("K, Nt and N must be positive")
    if scheme == "alg2":
        return K * K * (K - 1) * N
    if scheme == "cdi-exchange":
        return K * K * (K - 1) * Nt * Nt
    if scheme == "control-center":
        return K * K * Nt * Nt + K * (2 * Nt + 1)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


@dataclass(frozen=True)
class Message:
    round: int
    sender: int
    payload: tuple

    def __post_init__(self):
        if not all(isinstance(v, float) for v in self.payload):
            raise TypeError("payload must be real scalars")


@dataclass
class DistConfig:
    stop_rel: float = 0.01
    max_rounds: int = 30
    theta: float = 1e-3
    randomization_count: int = 200
    seed: int = 0
    order: tuple | None = None
    solver: object = None
    verbosity: int = 0


class NodeState:
    """One transmitter: its own covariance row, beamformer and a table of received log-traces.

    The node builds programs from a channel view in which every covariance
    it does not own is zero; cross-link information arrives only through
    :meth:`receive`.
    """

    def __init__(self, i: int, Q_row: np.ndarray, sigma2, P, eps, delta: float, W: np.ndarray,
                 foreign: np.ndarray | None = None):
        K = Q_row.shape[0]
        self.i = i
        # ``foreign`` fills the rows the node does not own; they must never be read
        Q = np.zeros((K,) + Q_row.shape, complex) if foreign is None else np.array(foreign, complex)
        Q[i] = Q_row
        self.view = ChannelSet(Q=Q, sigma2=sigma2, P=P, eps=eps, delta=delta)
        self.W = W
        self.table = np.full((K, K), -np.inf)
        self.table_round = np.full(K, -1)
        self.staleness = np.array([1 if k > i else 0 for k in range(K)])
        self.failed = False
        self.program = None
        self.solution = None
        self._refresh_own()

    def _refresh_own(self):
        Q = self.view.Q[self.i]
        T = np.einsum("ab,jba->j", self.W, Q).real
        active = np.any(Q != 0, axis=(1, 2))
        self.table[self.i] = np.where(active, np.log(np.where(active, np.maximum(T, 1e-300), 1.0)),
                                      -np.inf)

    def publish(self, n: int) -> Message:
        self.table_round[self.i] = n
        return Message(round=n, sender=self.i, payload=tuple(float(v) for v in self.table[self.i]))

    def receive(self, msg: Message):
        if msg.sender == self.i:
            return
        if len(msg.payload) != self.table.shape[0]:
            raise ValueError("payload length must equal K")
        self.table[msg.sender] = msg.payload
        self.table_round[msg.sender] = msg.round

    def current_rates(self) -> np.ndarray:
        return rates_from_traces(np.exp(self.table), self.view)

    def step(self, spec: UtilitySpec, cfg: DistConfig):
        """Solve the local restriction once; on failure keep the previous beamformer."""
        Rt = self.current_rates()
        ybar = np.log(np.expm1(Rt * np.log(2.0)))
        used = self.table_round.copy()
        try:
            prog = build_local_subproblem(self.i, self.view, self.table.copy(), ybar, spec)
            start = feasible_interior_point(prog, anchor_point(prog, {self.i: self.W}, Rt),
                                            theta=cfg.theta)
            sol = solve_barrier(prog, start, cfg.solver)
        except (InfeasibleStartError, NumericFailure, np.linalg.LinAlgError) as exc:
            logger.warning("node %d failed: %s", self.i, exc)
            self.failed = True
            return {"status": "failed", "kkt": np.nan, "used_rounds": used}
        self.program, self.solution = prog, sol
        self.W = unpack(prog, sol.x)["W"][self.i]
        self._refresh_own()
        return {"status": sol.status, "kkt": sol.kkt_residual, "used_rounds": used}


@dataclass
class DistTrace:
    records: list
    messages: list
    overhead: dict
    W: np.ndarray
    beamformers: BeamformerSet
    rates: np.ndarray
    utility: float
    rounds: int
    failed: bool
    nodes: list = field(repr=False, default_factory=list)
    randomized: bool = False

    @property
    def utilities(self) -> np.ndarray:
        return np.array([r["utility"] for r in self.records])

    def round_utilities(self) -> np.ndarray:
        """Utility after the last node of each round (round 0 is the initial point)."""
        out = {}
        for r in self.records:
            out[r["n"]] = r["utility"]
        return np.array([out[n] for n in sorted(out)])

    def stationarity(self) -> float:
        """Largest per-node KKT residual of the last local solves against the unrestricted problem."""
        return max(original_kkt_residual(nd.program, nd.solution) for nd in self.nodes
                   if nd.program is not None)


def run_distributed(cs: ChannelSet, spec: UtilitySpec, init: BeamformerSet | None = None,
                    cfg: DistConfig | None = None, _foreign=None) -> DistTrace:
    """Gauss-Seidel distributed SCA: nodes 1..K each solve their local restriction once per round.

    After every local solve the node broadcasts its K log-traces; peers
    solving later in the round see the fresh values, earlier ones see them
    next round. Stops when the round-over-round relative utility gain drops
    below ``cfg.stop_rel`` or after ``cfg.max_rounds`` rounds.
    """
    cfg = cfg or DistConfig()
    init = init or mrt_init(cs)
    K = cs.K
    order = tuple(cfg.order) if cfg.order is not None else tuple(range(K))
    if sorted(order) != list(range(K)):
        raise ValueError("order must be a permutation of range(K)")
    W0 = init.as_matrices()
    nodes = [NodeState(i, cs.Q[i].copy(), cs.sigma2, cs.P, cs.eps, cs.delta, W0[i], _foreign)
             for i in range(K)]
    messages = []

    def broadcast(msg):
        messages.append(msg)
        for nd in nodes:
            nd.receive(msg)

    for nd in nodes:
        broadcast(nd.publish(0))
    R0 = nodes[0].current_rates()
    U_prev = float(utility_value(spec, R0))
    records = [{"n": 0, "i": -1, "utility": U_prev, "rates": R0, "status": "init",
                "kkt": np.nan, "used_rounds": None}]
    failed = False
    n = 0
    for n in range(1, cfg.max_rounds + 1):
        for i in order:
            nd = nodes[i]
            rec = nd.step(spec, cfg)
            failed |= nd.failed
            broadcast(nd.publish(n))
            Rt = nd.current_rates()
            rec.update(n=n, i=i, utility=float(utility_value(spec, Rt)), rates=Rt)
            records.append(rec)
            if cfg.verbosity:
                logger.info("round %d node %d U=%.8g %s", n, i, rec["utility"], rec["status"])
        U = records[-1]["utility"]
        done = abs(U - U_prev) / max(abs(U_prev), 1e-300) < cfg.stop_rel
        U_prev = U
        if done:
            break
    W = np.array([nd.W for nd in nodes])
    caps = [_caps_for(nd.program, nd.solution, nd.view, nd.i) if nd.program is not None
            else [(np.eye(cs.Nt), None, cs.P[nd.i])] for nd in nodes]
    reduced, _, randomized, bf, rates = finalize(W, caps, cs, spec, cfg.randomization_count,
                                                 cfg.seed)
    sent = sum(1 for m in messages if m.round >= 1)
    overhead = {
        "rounds": n,
        "simulated": sent * K * (K - 1),
        "initial": sum(1 for m in messages if m.round == 0) * K * (K - 1),
        **{s: overhead_count(K, cs.Nt, max(n, 1), s) for s in SCHEMES},
    }
    return DistTrace(records=records, messages=messages, overhead=overhead, W=reduced,
                     beamformers=bf, rates=rates, utility=float(utility_value(spec, rates)),
                     rounds=n, failed=failed, nodes=nodes, randomized=randomized)
