"""Dynamic regret, feasible-set bounds, and the tracking inequality margins.

The two runtime inequalities checked here are closed-form envelopes for the
damped-dual variant of the tracker:

  estimation error:  ||e_i(t)|| <= eps^(t-1) ||e_i(1)||
                                   + 2 sqrt(N) k1 * sum_k eps^k rho(t-k-1)
  dual norms:        sqrt(rho(t)) ||lam_i(t)|| <= 3 sqrt(N) k2
                     sqrt(rho(t)) |mu_i(t)|    <= 3 sqrt(N) k5

where eps is the consensus contraction factor and k1/k2/k5 are suprema over
the (time-invariant superset of the) local feasible sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientDataError,
    LengthMismatchError,
    UnboundedSetError,
)
from .game import Game
from .model import StackedDecision, cost_components
from .oracle import OracleSequence
from .solver import Trajectory


@dataclass(frozen=True)
class KappaBounds:
    """Suprema over the local feasible sets, maxed over prosumers.

    kappa1: decision norm; kappa2: coupling-share norm ||A_i x_i - b_i||;
    kappa3: own-cost gradient norm; kappa4: operator norm of A_i;
    kappa5: balance residual |G_i x_i - load|; kappa6: operator norm of G_i.

    The charge/discharge polygon moves with the state of charge, so the
    suprema are taken over the full charge/discharge box, a superset of
    every reachable polygon; the bounds stay valid along any trajectory.
    """

    kappa1: float
    kappa2: float
    kappa3: float
    kappa4: float
    kappa5: float
    kappa6: float

    per_prosumer: tuple = ()


def kappa_bounds(game: Game) -> KappaBounds:
    """Compute the six suprema by per-coordinate vertex enumeration."""
    lay = game.layout
    N = game.n_prosumers
    c_hi = float(np.max(game.market.c_mg))
    mg_caps = np.array([p.p_mg_bound for p in game.params])
    per = []
    for i, p in enumerate(game.params, start=1):
        for name, v in (("p_gen_min", p.p_gen_min), ("p_gen_max", p.p_gen_max),
                        ("p_mg_bound", p.p_mg_bound)):
            if not np.isfinite(v):
                raise UnboundedSetError(f"prosumer {i}: {name} is not finite")
        if not (np.all(np.isfinite(p.trade_min)) and np.all(np.isfinite(p.trade_max))):
            raise UnboundedSetError(f"prosumer {i}: trade bounds must be finite")
        blk = game.blocks[i - 1]
        tr_sq = np.maximum(np.asarray(p.trade_min) ** 2, np.asarray(p.trade_max) ** 2)
        k1 = np.sqrt(
            max(p.p_gen_min**2, p.p_gen_max**2)
            + p.p_ch_max**2 + p.p_dis_max**2 + p.p_mg_bound**2 + tr_sq.sum()
        )
        # ||A_i x_i - b_i||: the two grid rows are convex in p_mg (max at an
        # endpoint); each trade enters two edge rows with opposite signs
        b0, b1 = blk.b_vec[0], blk.b_vec[1]
        mg_rows = max(
            (-s * p.p_mg_bound - b0) ** 2 + (s * p.p_mg_bound - b1) ** 2
            for s in (-1.0, 1.0)
        )
        k2 = np.sqrt(mg_rows + 2.0 * tr_sq.sum())
        grad_g = max(abs(2 * p.a_gen * p.p_gen_min + p.b_gen),
                     abs(2 * p.a_gen * p.p_gen_max + p.b_gen))
        grad_mg = c_hi * (2 * p.p_mg_bound + float(mg_caps.sum() - mg_caps[i - 1]))
        grad_tr = sum(
            max(abs(2 * p.a_tr * lo + d), abs(2 * p.a_tr * hi + d)) ** 2
            for lo, hi, d in zip(p.trade_min, p.trade_max, p.trade_price)
        )
        k3 = np.sqrt(
            grad_g**2 + (2 * p.a_ch * p.p_ch_max) ** 2
            + (2 * p.a_dis * p.p_dis_max) ** 2 + grad_mg**2 + grad_tr
        )
        k4 = float(np.linalg.norm(blk.a_mat, 2))
        bal_hi = (p.p_gen_max + p.p_dis_max + p.p_mg_bound
                  + float(np.sum(p.trade_max)))
        bal_lo = (p.p_gen_min - p.p_ch_max - p.p_mg_bound
                  + float(np.sum(p.trade_min)))
        loads_i = game.market.loads[i - 1]
        k5 = max(bal_hi - float(np.min(loads_i)), float(np.max(loads_i)) - bal_lo)
        k6 = float(np.linalg.norm(blk.g_row))
        per.append((k1, k2, k3, k4, k5, k6))
    arr = np.array(per)
    return KappaBounds(*(float(v) for v in arr.max(axis=0)), per_prosumer=tuple(per))


@dataclass(frozen=True)
class TrackingConstants:
    """Constants of the tracking analysis, computed (not fitted).

    ``vartheta_lambda`` / ``vartheta_mu`` are suprema of the oracle's
    multiplier norms over the horizon; pi1..pi3 only bound intermediate
    sums of the analysis and are reported, never asserted.
    """

    eta: float
    theta: float
    theta_star: float
    epsilon: float
    vartheta_lambda: float
    vartheta_mu: float
    delta_lambda: float
    delta_mu: float
    pi1: float
    pi2: float
    pi3: float


def tracking_constants(game: Game, epsilon: float, kappas: KappaBounds,
                       oracle_seq: OracleSequence) -> TrackingConstants:
    mono = game.monotonicity()
    N = game.n_prosumers
    c = game.graph.coupling_gain
    rtN = np.sqrt(N)
    vtl = oracle_seq.vartheta_lambda
    vtm = oracle_seq.vartheta_mu
    dl = kappas.kappa4 * (3 * rtN * kappas.kappa2 + vtl)
    dm = kappas.kappa6 * (3 * rtN * kappas.kappa5 + vtm)
    th = mono.theta
    pi1 = N * (dl + dm) ** 2 + 4 * N * (kappas.kappa1 + kappas.kappa3) * (dl + dm) \
        + 4 * N * kappas.kappa3**2
    pi2 = 2 * rtN * (c + th) * (2 * kappas.kappa1 + 2 * kappas.kappa3 + dl + dm)
    pi3 = N * c**2 + rtN * c + rtN * c * th**2 + th**2
    return TrackingConstants(
        eta=mono.eta, theta=th, theta_star=mono.theta_star, epsilon=epsilon,
        vartheta_lambda=vtl, vartheta_mu=vtm, delta_lambda=dl, delta_mu=dm,
        pi1=pi1, pi2=pi2, pi3=pi3,
    )


@dataclass
class EnvelopeMargins:
    """Slack (bound minus observed) of the runtime inequalities.

    ``est_slack`` covers states 2..T+1 (rows) per prosumer (cols);
    ``lam_slack`` / ``mu_slack`` cover states 1..T+1; state T+1 pairs with
    the last in-horizon step size.
    """

    est_slack: np.ndarray
    lam_slack: np.ndarray
    mu_slack: np.ndarray

    @property
    def min_est(self) -> float:
        return float(self.est_slack.min()) if self.est_slack.size else np.inf

    @property
    def min_lam(self) -> float:
        return float(self.lam_slack.min())

    @property
    def min_mu(self) -> float:
        return float(self.mu_slack.min())


def envelope_margins(traj: Trajectory, game: Game, kappas: KappaBounds,
                     epsilon: float) -> EnvelopeMargins:
    """Evaluate both envelopes along a recorded trajectory."""
    N = game.n_prosumers
    rtN = np.sqrt(N)
    T = traj.T
    rho = traj.rho
    e1 = traj.est_err[0]  # ||e_i(1)||
    est_slack = np.zeros((T, N))
    S = 0.0
    for s in range(2, T + 2):
        S = epsilon * S + rho[s - 2]
        bound = epsilon ** (s - 1) * e1 + 2.0 * rtN * kappas.kappa1 * S
        est_slack[s - 2] = bound - traj.est_err[s - 1]
    rho_ext = np.concatenate([rho, [rho[-1]]])
    lam_cap = 3.0 * rtN * kappas.kappa2
    mu_cap = 3.0 * rtN * kappas.kappa5
    lam_slack = lam_cap - np.sqrt(rho_ext)[:, None] * traj.lam_norm
    mu_slack = mu_cap - np.sqrt(rho_ext)[:, None] * np.abs(traj.mu)
    return EnvelopeMargins(est_slack=est_slack, lam_slack=lam_slack,
                           mu_slack=mu_slack)


@dataclass
class RegretReport:
    """Per-prosumer dynamic regret against the equilibrium sequence.

    ``cumulative[i-1, t-1]`` is R_i(t); ``average`` is R_i(t)/t. Individual
    per-round terms can be negative (the tracker's action need not be
    feasible for the coupled set), and are reported as-is.
    ``bound_curve`` is the growth envelope sqrt(t ((Phi_t + 1)/rho(t)^2
    + sum_{s<=t} sqrt(rho(s)))) up to its unknown leading constant.
    """

    per_step: np.ndarray
    cumulative: np.ndarray
    average: np.ndarray
    path_length: float
    bound_curve: np.ndarray


def regret(traj: Trajectory, oseq: OracleSequence, game: Game) -> RegretReport:
    """Exact regret of the played actions versus the equilibrium sequence."""
    T = traj.T
    if oseq.x_star.shape[0] != T:
        raise LengthMismatchError(
            f"trajectory has {T} rounds, oracle sequence {oseq.x_star.shape[0]}"
        )
    N = game.n_prosumers
    lay = game.layout
    per_step = np.zeros((N, T))
    for t in range(1, T + 1):
        star = StackedDecision(lay, oseq.x_star[t - 1])
        mixed = star.copy()
        for i in range(1, N + 1):
            mixed.values[:] = star.values
            mixed.values[lay.block(i)] = traj.played[t - 1][lay.block(i)]
            j_play = cost_components(i, t, mixed, game.params, game.market).total
            j_star = cost_components(i, t, star, game.params, game.market).total
            per_step[i - 1, t - 1] = j_play - j_star
    cumulative = np.cumsum(per_step, axis=1)
    tgrid = np.arange(1, T + 1, dtype=float)
    average = cumulative / tgrid[None, :]
    phi_t = np.concatenate([[0.0], np.cumsum(oseq.path_increments)])[:T]
    sqrt_rho_cum = np.cumsum(np.sqrt(traj.rho))
    bound_curve = np.sqrt(tgrid * ((phi_t + 1.0) / traj.rho**2 + sqrt_rho_cum))
    return RegretReport(
        per_step=per_step, cumulative=cumulative, average=average,
        path_length=oseq.path_length, bound_curve=bound_curve,
    )


def sublinearity_fit(horizons, max_regrets) -> float:
    """Least-squares slope of log max-regret against log horizon.

    Nonpositive regrets are mapped through |R| + 1 before taking logs.
    A slope below one indicates sublinear growth.
    """
    horizons = np.asarray(horizons, dtype=float)
    vals = np.asarray(max_regrets, dtype=float)
    if len(horizons) != len(vals):
        raise LengthMismatchError(f"{len(horizons)} horizons vs {len(vals)} values")
    if len(horizons) < 3:
        raise InsufficientDataError("need at least 3 horizons for a slope")
    if np.any(vals <= 0):
        vals = np.abs(vals) + 1.0
    slope = np.polyfit(np.log(horizons), np.log(vals), 1)[0]
    return float(slope)
