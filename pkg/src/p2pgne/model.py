"""Prosumer cost model: objectives, pseudo-gradient, and its curvature bounds.

Each prosumer controls a decision vector laid out as

    (p_gen, p_ch, p_dis, p_mg, p_tr[j] for j in ascending neighbor order)

of dimension 4 + N_i. Costs are quadratic: generation, storage wear,
a grid charge that couples all prosumers through the total grid draw,
and pairwise trading fees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, TimeOutOfRangeError
from .graph import TradingGraph


@dataclass(frozen=True)
class ProsumerParams:
    """Static parameters of one prosumer.

    Trade arrays are indexed like the prosumer's ascending neighbor list.
    ``a_tr`` is the platform fee coefficient; the network requires it to
    be the same for every prosumer (validated at scenario load).
    ``p_mg_bound`` is the individual cap M on |p_mg|, needed so the local
    feasible set is bounded.
    """

    a_gen: float
    b_gen: float
    p_gen_min: float
    p_gen_max: float
    a_ch: float
    a_dis: float
    p_ch_max: float
    p_dis_max: float
    eta_ch: float
    eta_dis: float
    e_cap: float
    soc_min: float
    soc_max: float
    soc0: float
    p_mg_bound: float
    trade_min: np.ndarray
    trade_max: np.ndarray
    trade_price: np.ndarray
    a_tr: float

    @property
    def n_neighbors(self) -> int:
        return len(self.trade_price)

    def validate(self, label: str = "prosumer"):
        """Collect invariant violations as human-readable strings."""
        bad = []
        if not self.a_gen > 0:
            bad.append(f"{label}: a_gen must be > 0, got {self.a_gen}")
        if not self.a_ch > 0:
            bad.append(f"{label}: a_ch must be > 0, got {self.a_ch}")
        if not self.a_dis > 0:
            bad.append(f"{label}: a_dis must be > 0, got {self.a_dis}")
        if not self.a_tr > 0:
            bad.append(f"{label}: a_tr must be > 0, got {self.a_tr}")
        if self.p_gen_min > self.p_gen_max:
            bad.append(f"{label}: p_gen_min > p_gen_max")
        if self.p_ch_max < 0 or self.p_dis_max < 0:
            bad.append(f"{label}: charge/discharge limits must be >= 0")
        if not (0 < self.eta_ch <= 1 and 0 < self.eta_dis <= 1):
            bad.append(f"{label}: efficiencies must lie in (0, 1]")
        if not self.e_cap > 0:
            bad.append(f"{label}: e_cap must be > 0")
        if not (0 < self.soc_min < self.soc_max < 1):
            bad.append(f"{label}: need 0 < soc_min < soc_max < 1")
        if not (self.soc_min <= self.soc0 <= self.soc_max):
            bad.append(f"{label}: soc0 outside [soc_min, soc_max]")
        if self.p_mg_bound < 0:
            bad.append(f"{label}: p_mg_bound must be >= 0")
        k = self.n_neighbors
        if len(self.trade_min) != k or len(self.trade_max) != k:
            bad.append(f"{label}: trade limit arrays must match neighbor count {k}")
        else:
            if np.any(np.asarray(self.trade_min) > 0):
                bad.append(f"{label}: trade_min entries must be <= 0")
            if np.any(np.asarray(self.trade_max) < 0):
                bad.append(f"{label}: trade_max entries must be >= 0")
        if np.any(np.asarray(self.trade_price) <= 0):
            bad.append(f"{label}: trade prices must be > 0")
        return bad


@dataclass(frozen=True)
class MarketSchedule:
    """Time-varying data of the game: grid price curve and loads.

    ``c_mg`` has length T; ``loads`` is (N, T). ``dt_hours`` is the market
    interval, used by the storage dynamics.
    """

    c_mg: np.ndarray
    loads: np.ndarray
    p_mg_min: float
    p_mg_max: float
    dt_hours: float

    @property
    def horizon(self) -> int:
        return len(self.c_mg)

    def price(self, t: int) -> float:
        """Grid cost coefficient at 1-based time t."""
        if not 1 <= t <= self.horizon:
            raise TimeOutOfRangeError(f"t={t} outside 1..{self.horizon}")
        return float(self.c_mg[t - 1])

    def load(self, i: int, t: int) -> float:
        if not 1 <= t <= self.horizon:
            raise TimeOutOfRangeError(f"t={t} outside 1..{self.horizon}")
        return float(self.loads[i - 1, t - 1])

    def validate(self):
        bad = []
        if np.any(np.asarray(self.c_mg) <= 0):
            bad.append("grid cost series must be positive everywhere")
        if self.p_mg_min > self.p_mg_max:
            bad.append("aggregate grid bounds must satisfy p_mg_min <= p_mg_max")
        if self.loads.ndim != 2 or self.loads.shape[1] != self.horizon:
            bad.append(
                f"loads must be (N, T={self.horizon}), got {self.loads.shape}"
            )
        if not self.dt_hours > 0:
            bad.append("dt_hours must be positive")
        return bad


class DecisionLayout:
    """Index bookkeeping for the stacked decision vector.

    Blocks are concatenated in prosumer order; inside a block the order is
    (p_gen, p_ch, p_dis, p_mg, trades ascending by neighbor id).
    """

    PG, PC, PD, PMG = 0, 1, 2, 3

    def __init__(self, graph: TradingGraph):
        self.graph = graph
        self.n_prosumers = graph.n
        self.block_sizes = [4 + graph.degree(i) for i in range(1, graph.n + 1)]
        self.offsets = np.concatenate(([0], np.cumsum(self.block_sizes)))
        self.n = int(self.offsets[-1])
        self.idx_pg = np.array([self.offsets[i] + self.PG for i in range(graph.n)])
        self.idx_pc = self.idx_pg + 1
        self.idx_pd = self.idx_pg + 2
        self.idx_pmg = self.idx_pg + 3
        # flat trade coordinate tables: owner i, neighbor j, global index
        owners, nbrs, idxs = [], [], []
        for i in range(1, graph.n + 1):
            base = self.offsets[i - 1] + 4
            for k, j in enumerate(graph.neighbors(i)):
                owners.append(i)
                nbrs.append(j)
                idxs.append(base + k)
        self.trade_owner = np.array(owners, dtype=int)
        self.trade_neighbor = np.array(nbrs, dtype=int)
        self.trade_index = np.array(idxs, dtype=int)
        # balance row coefficients (1, -1, 1, 1, 1...) per block, flattened
        sign = np.ones(self.n)
        sign[self.idx_pc] = -1.0
        self.balance_sign = sign
        self.owner_of_coord = np.empty(self.n, dtype=int)
        for i in range(graph.n):
            self.owner_of_coord[self.offsets[i]:self.offsets[i + 1]] = i + 1

    def block(self, i: int) -> slice:
        """Slice of prosumer i's block (1-based i)."""
        return slice(int(self.offsets[i - 1]), int(self.offsets[i]))

    def size(self, i: int) -> int:
        return self.block_sizes[i - 1]

    def trade_slice(self, i: int) -> slice:
        return slice(int(self.offsets[i - 1]) + 4, int(self.offsets[i]))


@dataclass
class Decision:
    """One prosumer's decision; trades follow the ascending neighbor order."""

    p_gen: float
    p_ch: float
    p_dis: float
    p_mg: float
    p_tr: np.ndarray

    @classmethod
    def zeros(cls, n_neighbors: int) -> "Decision":
        return cls(0.0, 0.0, 0.0, 0.0, np.zeros(n_neighbors))

    @classmethod
    def from_array(cls, arr) -> "Decision":
        arr = np.asarray(arr, dtype=float)
        if arr.size < 4:
            raise DimensionMismatchError(f"decision needs >= 4 entries, got {arr.size}")
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]), arr[4:].copy())

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.p_gen, self.p_ch, self.p_dis, self.p_mg], self.p_tr))

    @property
    def dim(self) -> int:
        return 4 + len(self.p_tr)


class StackedDecision:
    """Full-network decision profile backed by one flat vector."""

    def __init__(self, layout: DecisionLayout, values=None):
        self.layout = layout
        if values is None:
            self.values = np.zeros(layout.n)
        else:
            values = np.asarray(values, dtype=float)
            if values.shape != (layout.n,):
                raise DimensionMismatchError(
                    f"expected flat vector of length {layout.n}, got {values.shape}"
                )
            self.values = values.copy()

    @classmethod
    def from_decisions(cls, layout: DecisionLayout, decisions) -> "StackedDecision":
        decisions = list(decisions)
        if len(decisions) != layout.n_prosumers:
            raise DimensionMismatchError(
                f"expected {layout.n_prosumers} decisions, got {len(decisions)}"
            )
        out = cls(layout)
        for i, dec in enumerate(decisions, start=1):
            if dec.dim != layout.size(i):
                raise DimensionMismatchError(
                    f"prosumer {i}: decision dim {dec.dim} != layout {layout.size(i)}"
                )
            out.values[layout.block(i)] = dec.as_array()
        return out

    def decision(self, i: int) -> Decision:
        return Decision.from_array(self.values[self.layout.block(i)])

    def set_decision(self, i: int, dec: Decision):
        self.values[self.layout.block(i)] = dec.as_array()

    def copy(self) -> "StackedDecision":
        return StackedDecision(self.layout, self.values)


@dataclass(frozen=True)
class CostBreakdown:
    f_gen: float
    f_ess: float
    f_mg: float
    f_tr: float
    total: float


def cost_components(i, t, x: StackedDecision, params, schedule: MarketSchedule) -> CostBreakdown:
    """Per-component cost of prosumer i at time t given the full profile x.

    The grid term is the prosumer's proportional share of the quadratic
    network grid charge, c_t * p_mg_i * sum_j p_mg_j, so the shares add
    up to the network total exactly.
    """
    p = params[i - 1]
    dec = x.decision(i)
    if len(dec.p_tr) != len(p.trade_price):
        raise DimensionMismatchError(
            f"prosumer {i}: {len(dec.p_tr)} trades vs {len(p.trade_price)} neighbors"
        )
    c_t = schedule.price(t)
    mg_total = float(x.values[x.layout.idx_pmg].sum())
    f_gen = p.a_gen * dec.p_gen**2 + p.b_gen * dec.p_gen
    f_ess = p.a_ch * dec.p_ch**2 + p.a_dis * dec.p_dis**2
    f_mg = c_t * dec.p_mg * mg_total
    f_tr = float(np.sum(p.a_tr * dec.p_tr**2 + np.asarray(p.trade_price) * dec.p_tr))
    return CostBreakdown(f_gen, f_ess, f_mg, f_tr, f_gen + f_ess + f_mg + f_tr)


def pseudo_gradient(t, x: StackedDecision, params, schedule: MarketSchedule) -> np.ndarray:
    """Stack of each prosumer's own-block gradient of its own cost."""
    lay = x.layout
    if len(params) != lay.n_prosumers:
        raise DimensionMismatchError(
            f"{len(params)} parameter sets vs {lay.n_prosumers} prosumers"
        )
    c_t = schedule.price(t)
    v = x.values
    out = np.empty(lay.n)
    a_gen = np.array([p.a_gen for p in params])
    b_gen = np.array([p.b_gen for p in params])
    a_ch = np.array([p.a_ch for p in params])
    a_dis = np.array([p.a_dis for p in params])
    out[lay.idx_pg] = 2.0 * a_gen * v[lay.idx_pg] + b_gen
    out[lay.idx_pc] = 2.0 * a_ch * v[lay.idx_pc]
    out[lay.idx_pd] = 2.0 * a_dis * v[lay.idx_pd]
    mg = v[lay.idx_pmg]
    out[lay.idx_pmg] = c_t * (mg + mg.sum())
    for i, p in enumerate(params, start=1):
        sl = lay.trade_slice(i)
        out[sl] = 2.0 * p.a_tr * v[sl] + np.asarray(p.trade_price)
    return out


def partial_gradient(i, t, xi: Decision, others: StackedDecision, params,
                     schedule: MarketSchedule) -> np.ndarray:
    """Prosumer i's own-cost gradient evaluated at (xi, others).

    ``others`` supplies the rest of the profile (block i is ignored), which
    lets callers plug in a local estimate instead of the true decisions.
    Only the grid component reads the other blocks.
    """
    p = params[i - 1]
    if len(xi.p_tr) != len(p.trade_price):
        raise DimensionMismatchError(
            f"prosumer {i}: {len(xi.p_tr)} trades vs {len(p.trade_price)} neighbors"
        )
    c_t = schedule.price(t)
    lay = others.layout
    mg_others = float(others.values[lay.idx_pmg].sum()) - float(
        others.values[lay.idx_pmg[i - 1]]
    )
    grad = np.empty(4 + len(xi.p_tr))
    grad[0] = 2.0 * p.a_gen * xi.p_gen + p.b_gen
    grad[1] = 2.0 * p.a_ch * xi.p_ch
    grad[2] = 2.0 * p.a_dis * xi.p_dis
    grad[3] = c_t * (2.0 * xi.p_mg + mg_others)
    grad[4:] = 2.0 * p.a_tr * xi.p_tr + np.asarray(p.trade_price)
    return grad


@dataclass(frozen=True)
class MonotonicityConstants:
    """Curvature bounds of the pseudo-gradient.

    ``eta`` is the strong-monotonicity modulus. ``theta`` follows the
    conventional max formula with an N * max-price grid term; the actual
    largest eigenvalue of the grid coupling block is (N + 1) * max-price,
    so ``theta_star = max(theta, (N + 1) * max-price)`` is the certified
    Lipschitz constant and the one used in assertions.
    """

    eta: float
    theta: float
    theta_star: float


def monotonicity_constants(params, schedule: MarketSchedule) -> MonotonicityConstants:
    if len(params) == 0:
        raise DimensionMismatchError("need at least one prosumer")
    n = len(params)
    a_gen = [p.a_gen for p in params]
    a_ch = [p.a_ch for p in params]
    a_dis = [p.a_dis for p in params]
    a_tr = params[0].a_tr
    c_lo = float(np.min(schedule.c_mg))
    c_hi = float(np.max(schedule.c_mg))
    eta = min(2 * min(a_gen), 2 * min(a_ch), 2 * min(a_dis), c_lo, 2 * a_tr)
    theta = max(2 * max(a_gen), 2 * max(a_ch), 2 * max(a_dis), n * c_hi, 2 * a_tr)
    theta_star = max(theta, (n + 1) * c_hi)
    return MonotonicityConstants(eta=eta, theta=theta, theta_star=theta_star)


def affine_map(t, params, schedule: MarketSchedule, layout: DecisionLayout):
    """Matrix/offset pair (M, q) with pseudo_gradient(x) = M x + q.

    M is symmetric positive definite: diagonal 2*a_gen / 2*a_ch / 2*a_dis /
    2*a_tr blocks, and the grid columns couple through c_t * (I + 11^T).
    """
    c_t = schedule.price(t)
    n = layout.n
    M = np.zeros((n, n))
    q = np.zeros(n)
    for i, p in enumerate(params, start=1):
        M[layout.idx_pg[i - 1], layout.idx_pg[i - 1]] = 2.0 * p.a_gen
        M[layout.idx_pc[i - 1], layout.idx_pc[i - 1]] = 2.0 * p.a_ch
        M[layout.idx_pd[i - 1], layout.idx_pd[i - 1]] = 2.0 * p.a_dis
        q[layout.idx_pg[i - 1]] = p.b_gen
        sl = layout.trade_slice(i)
        M[sl, sl] = np.eye(layout.graph.degree(i)) * 2.0 * p.a_tr
        q[sl] = np.asarray(p.trade_price)
    mg = layout.idx_pmg
    M[np.ix_(mg, mg)] = c_t * (np.eye(len(params)) + np.ones((len(params), len(params))))
    return M, q
