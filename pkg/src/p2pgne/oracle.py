"""Centralized variational-equilibrium oracle.

The pseudo-gradient is affine with a symmetric positive definite matrix, so
the variational equilibrium of the coupled game is the unique minimizer of a
convex quadratic over the intersection of the local sets, the per-prosumer
balance equalities, and the shared coupling inequalities, with one shared
multiplier vector for the coupling rows.

``solve_vgne`` runs a projected extragradient scheme on the saddle operator
and finishes with an active-set polish for machine-accuracy KKT residuals.
``brute_force_vgne`` enumerates KKT active sets outright on tiny instances
and serves as the independent cross-check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import (
    InfeasibleError,
    IterationCapError,
    TooLargeError,
)
from .game import Game

_FEAS_TOL = 1e-9


@dataclass
class VgneSolution:
    """Equilibrium profile with its shared coupling multiplier.

    ``lambda_star`` covers the coupling rows (two aggregate-grid rows, then
    one row per ordered trading edge); ``mu_star`` holds the per-prosumer
    balance multipliers. ``kkt_residual`` is the sup-norm over stationarity
    (natural residual), coupling feasibility, balance, and complementarity.
    """

    x_star: np.ndarray
    lambda_star: np.ndarray
    mu_star: np.ndarray
    kkt_residual: float
    iterations: int


def _stacked_problem(game: Game, t, socs):
    """Pieces of the centralized problem at interval t."""
    M, q = game.affine(t)
    lay = game.layout
    A = np.hstack([blk.a_mat for blk in game.blocks])
    b = np.sum([blk.b_vec for blk in game.blocks], axis=0)
    G = np.zeros((game.n_prosumers, lay.n))
    for i in range(1, game.n_prosumers + 1):
        G[i - 1, lay.block(i)] = game.blocks[i - 1].g_row
    loads = game.market.loads[:, t - 1].astype(float)
    proj = game.chi_projector(socs)
    return M, q, A, b, G, loads, proj


def kkt_residual(game: Game, t, socs, x, lam, mu):
    """Sup-norm KKT residual of a candidate (x, lambda, mu)."""
    M, q, A, b, G, loads, proj = _stacked_problem(game, t, socs)
    F = M @ x + q
    stat = np.max(np.abs(x - proj(x - (F + A.T @ lam + G.T @ mu))))
    cres = A @ x - b
    feas = max(float(np.max(cres)), 0.0)
    bal = float(np.max(np.abs(G @ x - loads)))
    comp = abs(float(lam @ cres))
    return max(stat, feas, bal, comp)


def solve_vgne(game: Game, t, socs, tol=1e-8, max_iter=500_000,
               warm=None) -> VgneSolution:
    """Equilibrium at interval t for the given per-prosumer states of charge.

    Deterministic from a fixed start; pass ``warm=(x, lam, mu)`` to continue
    from a previous interval's solution. Raises InfeasibleError when the
    balance/coupling residual stalls above tolerance and IterationCapError
    when the cap is hit while the residual is still above ``tol``.
    """
    M, q, A, b, G, loads, proj = _stacked_problem(game, t, socs)
    n = len(q)
    m = len(b)
    N = len(loads)

    K = np.zeros((n + m + N, n + m + N))
    K[:n, :n] = M
    K[:n, n:n + m] = A.T
    K[:n, n + m:] = G.T
    K[n:n + m, :n] = -A
    K[n + m:, :n] = -G
    Lnorm = float(np.linalg.norm(K, 2))
    mono = game.monotonicity()
    tau = min(1.0 / (2.0 * max(mono.theta_star, np.linalg.norm(A, 2))),
              0.9 / Lnorm)

    if warm is not None:
        x, lam, mu = (np.array(warm[0], dtype=float),
                      np.array(warm[1], dtype=float),
                      np.array(warm[2], dtype=float))
        x = proj(x)
    else:
        x = proj(np.zeros(n))
        lam = np.zeros(m)
        mu = np.zeros(N)

    def T_op(xv, lv, mv):
        Fx = M @ xv + q + A.T @ lv + G.T @ mv
        return Fx, -(A @ xv - b), -(G @ xv - loads)

    check_every = 25
    best_feas = np.inf
    stall = 0
    for k in range(1, max_iter + 1):
        Fx, Fl, Fm = T_op(x, lam, mu)
        xh = proj(x - tau * Fx)
        lh = np.maximum(lam - tau * Fl, 0.0)
        mh = mu - tau * Fm
        Fxh, Flh, Fmh = T_op(xh, lh, mh)
        x = proj(x - tau * Fxh)
        lam = np.maximum(lam - tau * Flh, 0.0)
        mu = mu - tau * Fmh

        if k % check_every == 0 or k == max_iter:
            res = kkt_residual(game, t, socs, x, lam, mu)
            if res <= tol:
                return VgneSolution(x, lam, mu, res, k)
            if res <= 1e-3:
                polished = _polish(game, t, socs, M, q, A, b, G, loads, proj,
                                   x, tol)
                if polished is not None:
                    xs, ls, ms, rs = polished
                    return VgneSolution(xs, ls, ms, rs, k)
            feas = max(float(np.max(A @ x - b)), float(np.max(np.abs(G @ x - loads))))
            if feas < best_feas - 1e-14:
                best_feas = feas
                stall = 0
            else:
                stall += 1
            if stall > 2000 and best_feas > max(tol, 1e-6):
                raise InfeasibleError(
                    f"primal residual stalled at {best_feas:.3e} (t={t})"
                )
    raise IterationCapError(
        f"no solution to {tol:.1e} within {max_iter} iterations (t={t})"
    )


def _local_rows(game: Game, socs):
    """Linear description of every local set: (C, d, fixed_rows).

    Rows are unit bounds plus the two state-of-charge band rows per
    prosumer. Coordinates whose box collapses to a point are returned as
    equalities instead.
    """
    lay = game.layout
    C_rows, d_vals = [], []
    eq_rows, eq_vals = [], []

    def bound(coord, lo, hi):
        if hi - lo < 1e-14:
            r = np.zeros(lay.n)
            r[coord] = 1.0
            eq_rows.append(r)
            eq_vals.append(0.5 * (lo + hi))
            return
        r = np.zeros(lay.n)
        r[coord] = 1.0
        C_rows.append(r)
        d_vals.append(hi)
        r2 = np.zeros(lay.n)
        r2[coord] = -1.0
        C_rows.append(r2)
        d_vals.append(-lo)

    fsets = game.feasible_sets(socs)
    for i, (p, fs) in enumerate(zip(game.params, fsets), start=1):
        bound(lay.idx_pg[i - 1], *fs.pg_box)
        bound(lay.idx_pc[i - 1], 0.0, p.p_ch_max)
        bound(lay.idx_pd[i - 1], 0.0, p.p_dis_max)
        bound(lay.idx_pmg[i - 1], *fs.pmg_box)
        sl = lay.trade_slice(i)
        for k in range(game.graph.degree(i)):
            bound(sl.start + k, fs.tr_boxes[k, 0], fs.tr_boxes[k, 1])
        lo, hi = fs.band
        r = np.zeros(lay.n)
        r[lay.idx_pc[i - 1]] = p.eta_ch
        r[lay.idx_pd[i - 1]] = -1.0 / p.eta_dis
        if hi - lo < 1e-14:
            eq_rows.append(r)
            eq_vals.append(0.5 * (lo + hi))
        else:
            C_rows.append(r)
            d_vals.append(hi)
            C_rows.append(-r)
            d_vals.append(-lo)
    C = np.array(C_rows) if C_rows else np.zeros((0, lay.n))
    d = np.array(d_vals)
    Ceq = np.array(eq_rows) if eq_rows else np.zeros((0, lay.n))
    deq = np.array(eq_vals)
    return C, d, Ceq, deq


def _edge_pair_rows(game: Game):
    """One equality row per undirected edge encoding p_ij + p_ji = 0,
    oriented like the (I<J) coupling row, plus the row indices of the pair."""
    lay = game.layout
    graph = game.graph
    rows, pair_idx = [], []
    seen = set()
    for i, j in graph.ordered_edges:
        key = (min(i, j), max(i, j))
        if key in seen:
            continue
        seen.add(key)
        r = np.zeros(lay.n)
        for owner, other in ((key[0], key[1]), (key[1], key[0])):
            k = list(graph.neighbors(owner)).index(other)
            r[lay.offsets[owner - 1] + 4 + k] = 1.0
        rows.append(r)
        pair_idx.append((2 + graph.edge_row(*key), 2 + graph.edge_row(key[1], key[0])))
    E = np.array(rows) if rows else np.zeros((0, lay.n))
    return E, pair_idx


def _assemble_shared_lambda(m, mg_duals, pair_idx, pair_duals):
    lam = np.zeros(m)
    lam[0] = max(mg_duals[0], 0.0)
    lam[1] = max(mg_duals[1], 0.0)
    for (rp, rm), nu in zip(pair_idx, pair_duals):
        lam[rp] = max(nu, 0.0)
        lam[rm] = max(-nu, 0.0)
    return lam


def _polish(game, t, socs, M, q, A, b, G, loads, proj, x, tol):
    """Active-set refinement seeded by the iterate; None when it fails."""
    C, d, Ceq, deq = _local_rows(game, socs)
    E_pair, pair_idx = _edge_pair_rows(game)
    # inequalities: local rows then the two aggregate-grid rows
    C_all = np.vstack([C, A[:2]])
    d_all = np.concatenate([d, b[:2]])
    Eq = np.vstack([G, E_pair, Ceq]) if len(Ceq) else np.vstack([G, E_pair])
    feq = np.concatenate([loads, np.zeros(len(E_pair)), deq]) if len(Ceq) else (
        np.concatenate([loads, np.zeros(len(E_pair))])
    )
    slack = d_all - C_all @ x
    active = set(np.nonzero(slack < 1e-5 * (1.0 + np.abs(d_all)))[0].tolist())

    n = len(q)
    for _ in range(40):
        S = sorted(active)
        rows = np.vstack([Eq, C_all[S]]) if S else Eq
        rhs = np.concatenate([feq, d_all[S]]) if S else feq
        k = len(rhs)
        KKT = np.zeros((n + k, n + k))
        KKT[:n, :n] = M
        KKT[:n, n:] = rows.T
        KKT[n:, :n] = rows
        sol, *_ = np.linalg.lstsq(KKT, np.concatenate([-q, rhs]), rcond=None)
        xs = sol[:n]
        duals = sol[n + len(feq):]
        nu_eq = sol[n:n + len(feq)]
        viol = C_all @ xs - d_all
        worst = int(np.argmax(viol)) if len(viol) else -1
        if len(viol) and viol[worst] > _FEAS_TOL:
            if worst in active:
                return None
            active.add(worst)
            continue
        if len(duals) and np.min(duals) < -_FEAS_TOL:
            drop = S[int(np.argmin(duals))]
            active.discard(drop)
            continue
        mu_s = nu_eq[:len(loads)]
        pair_duals = nu_eq[len(loads):len(loads) + len(pair_idx)]
        mg_from_S = {row: 0.0 for row in range(2)}
        for pos, row in enumerate(S):
            if row >= len(d):  # one of the two aggregate-grid rows
                mg_from_S[row - len(d)] = duals[pos]
        lam_s = _assemble_shared_lambda(len(b), [mg_from_S[0], mg_from_S[1]],
                                        pair_idx, pair_duals)
        res = kkt_residual(game, t, socs, xs, lam_s, mu_s)
        if res <= tol:
            return xs, lam_s, mu_s, res
        return None
    return None


def brute_force_vgne(game: Game, t, socs, enum_cap=2**20) -> VgneSolution:
    """Exact equilibrium by KKT active-set enumeration (tiny instances only).

    Trade reciprocity is folded in as equalities up front, so the search
    runs over local bounds, band rows, and the two aggregate-grid rows, by
    increasing active-set size. Requires total decision dimension <= 10.
    """
    lay = game.layout
    if lay.n > 10:
        raise TooLargeError(f"total dimension {lay.n} exceeds 10")
    M, q, A, b, G, loads, proj = _stacked_problem(game, t, socs)
    C, d, Ceq, deq = _local_rows(game, socs)
    E_pair, pair_idx = _edge_pair_rows(game)
    C_all = np.vstack([C, A[:2]])
    d_all = np.concatenate([d, b[:2]])
    Eq = np.vstack([G, E_pair, Ceq]) if len(Ceq) else np.vstack([G, E_pair])
    feq = np.concatenate([loads, np.zeros(len(E_pair)), deq]) if len(Ceq) else (
        np.concatenate([loads, np.zeros(len(E_pair))])
    )
    n = len(q)
    n_ineq = len(d_all)
    max_active = max(0, n - np.linalg.matrix_rank(Eq))

    tried = 0
    for size in range(0, max_active + 1):
        for S in itertools.combinations(range(n_ineq), size):
            tried += 1
            if tried > enum_cap:
                raise TooLargeError(f"active-set enumeration exceeded {enum_cap}")
            rows = np.vstack([Eq, C_all[list(S)]]) if S else Eq
            rhs = np.concatenate([feq, d_all[list(S)]]) if S else feq
            k = len(rhs)
            KKT = np.zeros((n + k, n + k))
            KKT[:n, :n] = M
            KKT[:n, n:] = rows.T
            KKT[n:, :n] = rows
            target = np.concatenate([-q, rhs])
            try:
                sol = np.linalg.solve(KKT, target)
            except np.linalg.LinAlgError:
                sol, *_ = np.linalg.lstsq(KKT, target, rcond=None)
                if np.max(np.abs(KKT @ sol - target)) > 1e-8:
                    continue
            xs = sol[:n]
            nu_eq = sol[n:n + len(feq)]
            duals = sol[n + len(feq):]
            if len(duals) and np.min(duals) < -_FEAS_TOL:
                continue
            if len(d_all) and np.max(C_all @ xs - d_all) > _FEAS_TOL:
                continue
            mu_s = nu_eq[:len(loads)]
            pair_duals = nu_eq[len(loads):len(loads) + len(pair_idx)]
            mg = {0: 0.0, 1: 0.0}
            for pos, row in enumerate(S):
                if row >= len(d):
                    mg[row - len(d)] = duals[pos]
            lam_s = _assemble_shared_lambda(len(b), [mg[0], mg[1]], pair_idx,
                                            pair_duals)
            res = kkt_residual(game, t, socs, xs, lam_s, mu_s)
            return VgneSolution(xs, lam_s, mu_s, res, tried)
    raise InfeasibleError("no KKT-consistent active set found")


@dataclass
class OracleSequence:
    """Equilibria along a state-of-charge path, plus the path statistics."""

    x_star: np.ndarray        # (T, n)
    lambda_star: np.ndarray   # (T, m)
    mu_star: np.ndarray       # (T, N)
    kkt_residuals: np.ndarray
    path_increments: np.ndarray  # (T-1,) ||x*(t+1) - x*(t)||
    vartheta_lambda: float
    vartheta_mu: float

    @property
    def path_length(self) -> float:
        return float(self.path_increments.sum())

    def path_length_upto(self, t: int) -> float:
        """Cumulative equilibrium movement over rounds 1..t."""
        return float(self.path_increments[:max(t - 1, 0)].sum())


def vgne_sequence(game: Game, soc_path, tol=1e-8) -> OracleSequence:
    """Solve the equilibrium at every interval along ``soc_path``.

    ``soc_path`` has one row per interval (the states of charge in force at
    that interval, normally the tracker's played trajectory). Solves are
    warm-started from the previous interval.
    """
    soc_path = np.asarray(soc_path, dtype=float)
    T = soc_path.shape[0]
    lay = game.layout
    m = game.blocks[0].m
    xs = np.zeros((T, lay.n))
    ls = np.zeros((T, m))
    ms = np.zeros((T, game.n_prosumers))
    res = np.zeros(T)
    warm = None
    for t in range(1, T + 1):
        sol = solve_vgne(game, t, soc_path[t - 1], tol=tol, warm=warm)
        xs[t - 1] = sol.x_star
        ls[t - 1] = sol.lambda_star
        ms[t - 1] = sol.mu_star
        res[t - 1] = sol.kkt_residual
        warm = (sol.x_star, sol.lambda_star, sol.mu_star)
    inc = np.linalg.norm(np.diff(xs, axis=0), axis=1) if T > 1 else np.zeros(0)
    return OracleSequence(
        x_star=xs, lambda_star=ls, mu_star=ms, kkt_residuals=res,
        path_increments=inc,
        vartheta_lambda=float(np.max(np.linalg.norm(ls, axis=1))) if T else 0.0,
        vartheta_mu=float(np.max(np.abs(ms))) if T else 0.0,
    )
