"""Distributed online equilibrium tracker over round-synchronous messaging.

Every round t applies, per prosumer and in this order:

  (a) primal:    x+ = (1-rho) x + rho * P_chi( x - rho * [grad_i(x, est)
                      + gamma * (A_i' lam + G_i' mu) + c * sum_j (x - est_j_of_i)] )
  (b) estimate:  est+ = est - c rho sum_j w_ij (est - est_j); own block = x+
  (c) lambda:    lam+ = max( beta * sum_{j in N_i u {i}} (w_ij/w0) lam_j
                      + rho * [A_i (2 x+ - x) - b_i], 0 )
  (d) mu:        mu+  = beta * mu + rho * [G_i (2 x+ - x) - load_i(t)]

All neighbor reads use round-t snapshots, so prosumers can update in any
order (or in parallel) without changing the result.

The dual behavior is controlled by ``fading_duals``. With
``fading_duals=True``, gamma = rho(t), beta = 1 - rho(t) and the lambda
drive is the prosumer's own coupling share A_i (2 x+ - x) - b_i: the dual
force on the primal fades with the learning rate and the multipliers forget
at the same rate. That damped variant admits the closed-form
estimation-error and dual-norm envelopes checked in :mod:`p2pgne.metrics`,
but its multipliers settle at (scaled) constraint violations rather than at
the shadow prices, so its fixed point drifts away from the variational
equilibrium as the step decays. The default ``fading_duals=False`` uses
gamma = beta = 1 and drives every multiplier copy with the prosumer's
estimate of the aggregate violation (assembled from its own extrapolated
row values, the neighbors' reciprocal trades, and its full-profile
estimate): duals act at full strength, integrate a common signal, and the
frozen-game fixed point is exactly the variational equilibrium (see
``examples/04_frozen_game_convergence.py``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import (
    ChiProjector,
    ConstraintBlocks,
    LocalFeasibleSet,
    local_feasible_set,
    project_chi,
    soc_step,
)
from .errors import (
    EmptyFeasibleSetError,
    InfeasibleSoCError,
    MissingNeighborMessageError,
    StepOutOfRangeError,
)
from .game import Game
from .model import Decision, StackedDecision, partial_gradient


# -- step-size schedule ---------------------------------------------------------


@dataclass(frozen=True)
class StepSchedule:
    """Nonincreasing learning-rate sequence, values in (0, 1).

    Power form: rho(t) = gain * (b / (a t + b)) ** alpha with gain in (0, 1],
    a, b > 0 and alpha in (0, 1/2). Alternatively an explicit table; indices
    past the table end hold its last value (frozen-mode solves can run far
    beyond the market horizon).
    """

    gain: float = 0.0
    a: float = 0.0
    b: float = 0.0
    alpha: float = 0.0
    table: tuple = ()

    @classmethod
    def power(cls, gain, a, b, alpha) -> "StepSchedule":
        if not 0.0 < gain <= 1.0:
            raise StepOutOfRangeError(f"gain must be in (0,1], got {gain}")
        if a <= 0 or b <= 0:
            raise StepOutOfRangeError(f"need a, b > 0, got a={a}, b={b}")
        if not 0.0 < alpha < 0.5:
            raise StepOutOfRangeError(f"alpha must be in (0, 1/2), got {alpha}")
        return cls(gain=float(gain), a=float(a), b=float(b), alpha=float(alpha))

    @classmethod
    def from_table(cls, values) -> "StepSchedule":
        values = tuple(float(v) for v in values)
        if not values:
            raise StepOutOfRangeError("empty step table")
        if any(not 0.0 < v < 1.0 for v in values):
            raise StepOutOfRangeError("table steps must lie in (0,1)")
        if any(values[k + 1] > values[k] + 1e-15 for k in range(len(values) - 1)):
            raise StepOutOfRangeError("table steps must be nonincreasing")
        return cls(table=values)

    def rho(self, t: int) -> float:
        if t < 1:
            raise StepOutOfRangeError(f"rounds are 1-based, got t={t}")
        if self.table:
            return self.table[min(t, len(self.table)) - 1]
        return self.gain * (self.b / (self.a * t + self.b)) ** self.alpha

    def rho_array(self, T: int) -> np.ndarray:
        return np.array([self.rho(t) for t in range(1, T + 1)])


# -- per-prosumer state and messages ---------------------------------------------


@dataclass
class ProsumerState:
    """Everything prosumer i carries between rounds."""

    x: Decision
    estimate: StackedDecision  # full-profile estimate; own block tied to x
    lam: np.ndarray
    mu: float
    soc: float


@dataclass(frozen=True)
class RoundMessage:
    """Snapshot a prosumer broadcasts to its neighbors at the top of a round."""

    sender: int
    estimate: np.ndarray  # the sender's full-profile estimate
    lam: np.ndarray


def _neighbor_messages(i, graph, msgs):
    """Messages of exactly the neighbors of i, in ascending sender order."""
    by_sender = {m.sender: m for m in msgs}
    out = []
    for j in graph.neighbors(i):
        if j not in by_sender:
            raise MissingNeighborMessageError(f"prosumer {i} missing message from {j}")
        out.append(by_sender[j])
    return out


def _check_rho(rho):
    if not 0.0 < rho < 1.0:
        raise StepOutOfRangeError(f"step must lie in (0,1), got {rho}")


# -- the four round updates -------------------------------------------------------


def step_primal(i, t, state: ProsumerState, msgs, params, schedule, rho,
                blocks: ConstraintBlocks, fset: LocalFeasibleSet, c,
                fading_duals=False) -> Decision:
    """Update (a): damped projected gradient with dual and consensus forcing.

    The consensus term pulls the prosumer's decision toward what its
    neighbors currently believe that decision is.
    """
    _check_rho(rho)
    use = _neighbor_messages(i, state.estimate.layout.graph, msgs)
    x_arr = state.x.as_array()
    lay = state.estimate.layout
    grad = partial_gradient(i, t, state.x, state.estimate, params, schedule)
    dual_force = blocks.a_mat.T @ state.lam + blocks.g_row * state.mu
    cons = np.zeros_like(x_arr)
    for msg in use:
        cons += x_arr - msg.estimate[lay.block(i)]
    cons *= c
    gamma = rho if fading_duals else 1.0
    inner = x_arr - rho * (grad + gamma * dual_force + cons)
    proj = project_chi(Decision.from_array(inner), fset)
    return Decision.from_array((1.0 - rho) * x_arr + rho * proj.as_array())


def step_estimate(i, t, state: ProsumerState, msgs, c, rho,
                  x_new: Decision) -> StackedDecision:
    """Update (b): weighted-neighbor averaging of the full-profile estimate.

    The own block is pinned to the freshly computed decision afterwards.
    """
    _check_rho(rho)
    lay = state.estimate.layout
    graph = lay.graph
    use = _neighbor_messages(i, graph, msgs)
    est = state.estimate.values.copy()
    acc = np.zeros_like(est)
    for msg in use:
        acc += graph.weight(i, msg.sender) * (est - msg.estimate)
    est -= c * rho * acc
    est[lay.block(i)] = x_new.as_array()
    return StackedDecision(lay, est)


def step_dual_lambda(i, t, state: ProsumerState, msgs, blocks: ConstraintBlocks,
                     rho, graph, x_new: Decision, fading_duals=False) -> np.ndarray:
    """Update (c): consensus-mixed multiplier ascent, clipped at zero.

    With ``fading_duals=True`` the drive is the prosumer's own coupling
    share A_i (2 x+ - x) - b_i and the mixed multiplier is damped by
    (1 - rho). Each agent then integrates a different signal, so the
    multiplier copies settle with a step-proportional spread around the
    average violation instead of at the shadow prices.

    The persistent default instead drives every copy with the agent's
    estimate of the aggregate violation sum_j g_j: its own row values are
    extrapolated (2 x+ - x), the reciprocal trades come from the neighbors'
    snapshots, and the other grid draws come from the agent's own
    full-profile estimate. All copies then integrate asymptotically the
    same signal and the common fixed point satisfies complementarity for
    the aggregate constraint exactly.
    """
    _check_rho(rho)
    use = _neighbor_messages(i, graph, msgs)
    mix = (graph.weight(i, i) / graph.w0) * state.lam
    for msg in use:
        mix += (graph.weight(i, msg.sender) / graph.w0) * msg.lam
    v = 2.0 * x_new.as_array() - state.x.as_array()
    if fading_duals:
        drive = blocks.a_mat @ v - blocks.b_vec
        return np.maximum((1.0 - rho) * mix + rho * drive, 0.0)
    drive = _aggregate_drive(i, state, use, blocks, v)
    return np.maximum(mix + rho * drive, 0.0)


def _aggregate_drive(i, state, neighbor_msgs, blocks, v):
    """Estimated aggregate coupling violation, one value per coupling row."""
    lay = state.estimate.layout
    graph = lay.graph
    m = blocks.m
    drive = np.zeros(m)
    est = state.estimate.values
    mg_total = float(est[lay.idx_pmg].sum()) - float(est[lay.idx_pmg[i - 1]]) + v[3]
    p_lo = -blocks.b_vec[0] * graph.n  # recover the aggregate bounds
    p_hi = blocks.b_vec[1] * graph.n
    drive[0] = p_lo - mg_total
    drive[1] = mg_total - p_hi
    by_sender = {msg.sender: msg for msg in neighbor_msgs}
    for k, j in enumerate(graph.neighbors(i)):
        msg = by_sender[j]
        pos = graph.neighbors(j).index(i)
        recip = float(msg.estimate[lay.offsets[j - 1] + 4 + pos])
        pair = v[4 + k] + recip
        lo, hi = (i, j) if i < j else (j, i)
        drive[2 + graph.edge_row(lo, hi)] = pair
        drive[2 + graph.edge_row(hi, lo)] = -pair
    return drive


def step_dual_mu(i, t, state: ProsumerState, rho, blocks: ConstraintBlocks,
                 load_t, x_new: Decision, fading_duals=False) -> float:
    """Update (d): balance-residual integrator."""
    _check_rho(rho)
    drive = float(
        blocks.g_row @ (2.0 * x_new.as_array() - state.x.as_array())
    ) - float(load_t)
    beta = (1.0 - rho) if fading_duals else 1.0
    return beta * state.mu + rho * drive


# -- reference round (message-passing semantics, used by tests) --------------------


def reference_round(game: Game, t, rho, states, fading_duals=False,
                    advance_soc=True):
    """One round driven purely through per-prosumer states and messages.

    This is the executable definition of the round semantics; the vectorized
    engine must reproduce it. Returns (new_states, played_decisions).
    """
    graph = game.graph
    c = graph.coupling_gain
    msgs = [
        RoundMessage(
            sender=i,
            estimate=states[i - 1].estimate.values.copy(),
            lam=states[i - 1].lam.copy(),
        )
        for i in range(1, graph.n + 1)
    ]
    fsets = []
    for i in range(1, graph.n + 1):
        try:
            fsets.append(
                local_feasible_set(game.params[i - 1], states[i - 1].soc,
                                   game.market.dt_hours)
            )
        except EmptyFeasibleSetError as exc:
            raise InfeasibleSoCError(str(exc)) from exc
    new_states, played = [], []
    for i in range(1, graph.n + 1):
        st = states[i - 1]
        inbox = [m for m in msgs if m.sender in graph.neighbors(i)]
        x_new = step_primal(
            i, t, st, inbox, game.params, game.market, rho,
            game.blocks[i - 1], fsets[i - 1], c, fading_duals,
        )
        est_new = step_estimate(i, t, st, inbox, c, rho, x_new)
        lam_new = step_dual_lambda(
            i, t, st, inbox, game.blocks[i - 1], rho, graph, x_new, fading_duals
        )
        mu_new = step_dual_mu(
            i, t, st, rho, game.blocks[i - 1], game.market.load(i, t), x_new,
            fading_duals,
        )
        act = project_chi(x_new, fsets[i - 1])
        soc_new = st.soc
        if advance_soc:
            soc_new = soc_step(st.soc, act.p_ch, act.p_dis, game.params[i - 1],
                               game.market.dt_hours)
        new_states.append(ProsumerState(x=x_new, estimate=est_new, lam=lam_new,
                                        mu=mu_new, soc=soc_new))
        played.append(act)
    return new_states, played


def initial_states(game: Game, init="zeros", seed=None):
    """Feasible start: x(1) = P_chi(0) (or a seeded random feasible point),
    estimates zero except the pinned own block, multipliers zero."""
    rng = np.random.default_rng(seed)
    lay = game.layout
    socs = game.initial_socs()
    fsets = game.feasible_sets(socs)
    states = []
    m = game.blocks[0].m
    for i in range(1, game.n_prosumers + 1):
        if init == "zeros":
            raw = Decision.zeros(game.graph.degree(i))
        elif init == "random":
            fs = fsets[i - 1]
            raw = Decision(
                p_gen=rng.uniform(*fs.pg_box),
                p_ch=rng.uniform(0.0, max(game.params[i - 1].p_ch_max, 0.0)),
                p_dis=rng.uniform(0.0, max(game.params[i - 1].p_dis_max, 0.0)),
                p_mg=rng.uniform(*fs.pmg_box),
                p_tr=np.array([rng.uniform(lo, hi) for lo, hi in fs.tr_boxes]),
            )
        else:
            raise ValueError(f"unknown init mode {init!r}")
        x0 = project_chi(raw, fsets[i - 1])
        est = StackedDecision(lay)
        est.values[lay.block(i)] = x0.as_array()
        states.append(
            ProsumerState(x=x0, estimate=est, lam=np.zeros(m), mu=0.0,
                          soc=float(socs[i - 1]))
        )
    return states


# -- vectorized engine --------------------------------------------------------------


class _EngineIndex:
    """Precomputed index tables for the flat-array engine."""

    def __init__(self, game: Game):
        lay = game.layout
        graph = game.graph
        n, N = lay.n, graph.n
        self.a_gen = np.array([p.a_gen for p in game.params])
        self.b_gen = np.array([p.b_gen for p in game.params])
        self.a_ch = np.array([p.a_ch for p in game.params])
        self.a_dis = np.array([p.a_dis for p in game.params])
        self.a_tr = game.params[0].a_tr
        self.prices = np.concatenate(
            [np.asarray(p.trade_price, dtype=float) for p in game.params]
        ) if lay.trade_index.size else np.zeros(0)
        W = np.asarray(graph.weights)
        self.W_mix = W / graph.w0
        self.W_off = W.copy()
        np.fill_diagonal(self.W_off, 0.0)
        self.off_deg = self.W_off.sum(axis=1)
        self.adj = (self.W_off > 0).astype(float)
        self.deg = np.array([graph.degree(i) for i in range(1, N + 1)], dtype=float)
        # per trade coordinate: rows of the +1 / -1 edge entries in A_i
        rp, rm = [], []
        for i, j in zip(lay.trade_owner, lay.trade_neighbor):
            lo, hi = (i, j) if i < j else (j, i)
            rp.append(2 + graph.edge_row(lo, hi))
            rm.append(2 + graph.edge_row(hi, lo))
        self.row_plus = np.array(rp, dtype=int)
        self.row_minus = np.array(rm, dtype=int)
        self.trade_pros = lay.trade_owner - 1
        # flat index of the reciprocal trade coordinate (j -> i) per (i -> j)
        flat_of = {
            (i, j): idx
            for i, j, idx in zip(lay.trade_owner, lay.trade_neighbor, lay.trade_index)
        }
        self.recip = np.array(
            [flat_of[(j, i)] for i, j in zip(lay.trade_owner, lay.trade_neighbor)],
            dtype=int,
        )
        self.p_mg_min = game.market.p_mg_min
        self.p_mg_max = game.market.p_mg_max
        self.b0 = np.array([blk.b_vec[0] for blk in game.blocks])
        self.b1 = np.array([blk.b_vec[1] for blk in game.blocks])
        self.owner0 = lay.owner_of_coord - 1
        # scatter map that pins own blocks inside the estimate matrix
        self.own_rows = self.owner0
        self.own_cols = np.arange(n)
        self.eta_ch = np.array([p.eta_ch for p in game.params])
        self.inv_eta_dis = np.array([1.0 / p.eta_dis for p in game.params])
        self.e_cap = np.array([p.e_cap for p in game.params])
        self.m = game.blocks[0].m

    def gradient(self, lay, c_t, X, XBAR):
        """Own-cost gradients at (own block, estimated others), flat."""
        out = np.empty(lay.n)
        out[lay.idx_pg] = 2.0 * self.a_gen * X[lay.idx_pg] + self.b_gen
        out[lay.idx_pc] = 2.0 * self.a_ch * X[lay.idx_pc]
        out[lay.idx_pd] = 2.0 * self.a_dis * X[lay.idx_pd]
        est_mg = XBAR[:, lay.idx_pmg]  # row i: i's estimates of all grid draws
        out[lay.idx_pmg] = c_t * (X[lay.idx_pmg] + est_mg.sum(axis=1))
        if lay.trade_index.size:
            out[lay.trade_index] = 2.0 * self.a_tr * X[lay.trade_index] + self.prices
        return out

    def dual_force(self, lay, LAM, MU):
        """A_i' lam_i + G_i' mu_i for every prosumer, flat."""
        out = lay.balance_sign * MU[self.owner0]
        out[lay.idx_pmg] += LAM[:, 1] - LAM[:, 0]
        if lay.trade_index.size:
            out[lay.trade_index] += (
                LAM[self.trade_pros, self.row_plus]
                - LAM[self.trade_pros, self.row_minus]
            )
        return out

    def coupling_drive(self, lay, V):
        """Own coupling share A_i v_i - b_i per prosumer, shape (N, m)."""
        N = len(self.b0)
        out = np.zeros((N, self.m))
        vm = V[lay.idx_pmg]
        out[:, 0] = -vm - self.b0
        out[:, 1] = vm - self.b1
        if lay.trade_index.size:
            vt = V[lay.trade_index]
            out[self.trade_pros, self.row_plus] = vt
            out[self.trade_pros, self.row_minus] = -vt
        return out

    def aggregate_drive(self, lay, X, XBAR, V):
        """Estimated aggregate violation per prosumer, shape (N, m)."""
        N = len(self.b0)
        out = np.zeros((N, self.m))
        mg_total = XBAR[:, lay.idx_pmg].sum(axis=1) - X[lay.idx_pmg] + V[lay.idx_pmg]
        out[:, 0] = self.p_mg_min - mg_total
        out[:, 1] = mg_total - self.p_mg_max
        if lay.trade_index.size:
            pair = V[lay.trade_index] + X[self.recip]
            out[self.trade_pros, self.row_plus] = pair
            out[self.trade_pros, self.row_minus] = -pair
        return out

    def balance(self, lay, V):
        return np.bincount(self.owner0, weights=lay.balance_sign * V,
                           minlength=len(self.b0))


@dataclass
class Trajectory:
    """Online run log. States are indexed 1..T+1; round t produces state t+1.

    ``x`` holds the raw iterates, ``played`` the feasibility-restored actions
    actually executed (and used for the state of charge and for regret).
    """

    rho: np.ndarray          # (T,)
    x: np.ndarray            # (T+1, n)
    played: np.ndarray       # (T, n)
    soc: np.ndarray          # (T+1, N)
    lam: np.ndarray          # (T+1, N, m)
    mu: np.ndarray           # (T+1, N)
    est_err: np.ndarray      # (T+1, N) estimation-error norms
    lam_norm: np.ndarray     # (T+1, N)
    fading_duals: bool
    estimates: np.ndarray | None = None  # (T+1, N, n) when recorded

    @property
    def T(self) -> int:
        return len(self.rho)


@dataclass
class FrozenResult:
    """Fixed-environment solve: final state and convergence report."""

    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    iterations: int
    converged: bool
    step_norms: np.ndarray
    x_history: np.ndarray | None = None  # (iterations, n) when recorded


def _est_err_norms(lay, X, XBAR):
    """Norm over j of (j's estimate of block i) - x_i, for every i."""
    diffs = XBAR - X[None, :]
    out = np.empty(lay.n_prosumers)
    for i in range(1, lay.n_prosumers + 1):
        out[i - 1] = np.linalg.norm(diffs[:, lay.block(i)])
    return out


def run_horizon(game: Game, steps: StepSchedule, mode="online", *,
                fading_duals=False, init="zeros", seed=None,
                frozen_t=1, frozen_tol=1e-9, frozen_max_iter=200_000,
                frozen_history=False, record_estimates=False):
    """Run the tracker over the market horizon, or iterate one frozen round.

    ``mode="online"`` performs one round per market interval; the executed
    action is the projection of the new iterate onto the current local set,
    and the state of charge advances with the executed action.

    ``mode="frozen"`` pins the environment at interval ``frozen_t`` (price,
    loads, state of charge) and iterates until the sup-norm step drops below
    ``frozen_tol`` or the iteration cap is reached. Used to validate the
    static behavior against the centralized oracle.
    """
    if mode not in ("online", "frozen"):
        raise ValueError(f"unknown mode {mode!r}")
    lay = game.layout
    N, n = game.n_prosumers, lay.n
    idx = _EngineIndex(game)
    c = game.graph.coupling_gain

    try:
        states = initial_states(game, init=init, seed=seed)
    except EmptyFeasibleSetError as exc:
        raise InfeasibleSoCError(f"initialization: {exc}") from exc
    X = np.concatenate([st.x.as_array() for st in states])
    XBAR = np.stack([st.estimate.values.copy() for st in states])
    LAM = np.zeros((N, idx.m))
    MU = np.zeros(N)
    SOC = game.initial_socs().astype(float)

    if mode == "frozen":
        c_t = game.market.price(frozen_t)
        loads_t = game.market.loads[:, frozen_t - 1].astype(float)
        try:
            proj = game.chi_projector(SOC)
        except EmptyFeasibleSetError as exc:
            raise InfeasibleSoCError(str(exc)) from exc
        step_norms = []
        history = [] if frozen_history else None
        converged = False
        k = 0
        for k in range(1, frozen_max_iter + 1):
            rho = steps.rho(k)
            _check_rho(rho)
            X, XBAR, LAM, MU, dstep = _engine_round(
                game, idx, lay, c, c_t, loads_t, rho, proj, X, XBAR, LAM, MU,
                fading_duals,
            )
            step_norms.append(dstep)
            if frozen_history:
                history.append(X.copy())
            if dstep < frozen_tol:
                converged = True
                break
        return FrozenResult(
            x=X, lam=LAM, mu=MU, iterations=k, converged=converged,
            step_norms=np.array(step_norms),
            x_history=np.array(history) if frozen_history else None,
        )

    T = game.horizon
    rho_arr = steps.rho_array(T)
    traj = Trajectory(
        rho=rho_arr,
        x=np.zeros((T + 1, n)),
        played=np.zeros((T, n)),
        soc=np.zeros((T + 1, N)),
        lam=np.zeros((T + 1, N, idx.m)),
        mu=np.zeros((T + 1, N)),
        est_err=np.zeros((T + 1, N)),
        lam_norm=np.zeros((T + 1, N)),
        fading_duals=fading_duals,
        estimates=np.zeros((T + 1, N, n)) if record_estimates else None,
    )
    traj.x[0] = X
    traj.soc[0] = SOC
    traj.est_err[0] = _est_err_norms(lay, X, XBAR)
    if record_estimates:
        traj.estimates[0] = XBAR

    for t in range(1, T + 1):
        rho = rho_arr[t - 1]
        _check_rho(rho)
        c_t = game.market.price(t)
        loads_t = game.market.loads[:, t - 1].astype(float)
        try:
            fsets = game.feasible_sets(SOC)
        except EmptyFeasibleSetError as exc:
            raise InfeasibleSoCError(f"round {t}: {exc}") from exc
        proj = ChiProjector(lay, fsets)
        X, XBAR, LAM, MU, _ = _engine_round(
            game, idx, lay, c, c_t, loads_t, rho, proj, X, XBAR, LAM, MU,
            fading_duals,
        )
        act = proj(X)
        SOC = SOC + (game.market.dt_hours / idx.e_cap) * (
            idx.eta_ch * act[lay.idx_pc] - idx.inv_eta_dis * act[lay.idx_pd]
        )
        traj.x[t] = X
        traj.played[t - 1] = act
        traj.soc[t] = SOC
        traj.lam[t] = LAM
        traj.mu[t] = MU
        traj.est_err[t] = _est_err_norms(lay, X, XBAR)
        traj.lam_norm[t] = np.linalg.norm(LAM, axis=1)
        if record_estimates:
            traj.estimates[t] = XBAR
    return traj


def _engine_round(game, idx: _EngineIndex, lay, c, c_t, loads_t, rho, proj,
                  X, XBAR, LAM, MU, fading_duals):
    """One vectorized round; mirrors reference_round exactly."""
    gamma = rho if fading_duals else 1.0
    beta = (1.0 - rho) if fading_duals else 1.0
    grad = idx.gradient(lay, c_t, X, XBAR)
    dualf = idx.dual_force(lay, LAM, MU)
    # consensus pull toward what the neighbors believe this decision is
    nb_est = idx.adj @ XBAR
    cons = np.empty(lay.n)
    for i in range(1, lay.n_prosumers + 1):
        blk = lay.block(i)
        cons[blk] = idx.deg[i - 1] * X[blk] - nb_est[i - 1, blk]
    cons *= c
    inner = X - rho * (grad + gamma * dualf + cons)
    XN = (1.0 - rho) * X + rho * proj(inner)

    XBARN = XBAR - c * rho * (idx.off_deg[:, None] * XBAR - idx.W_off @ XBAR)
    XBARN[idx.own_rows, idx.own_cols] = XN

    V = 2.0 * XN - X
    if fading_duals:
        drive = idx.coupling_drive(lay, V)
    else:
        drive = idx.aggregate_drive(lay, X, XBAR, V)
    LAMN = np.maximum(beta * (idx.W_mix @ LAM) + rho * drive, 0.0)
    MUN = beta * MU + rho * (idx.balance(lay, V) - loads_t)
    dstep = float(np.max(np.abs(XN - X)))
    return XN, XBARN, LAMN, MUN, dstep
