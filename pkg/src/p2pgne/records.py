"""Run artifacts: trajectory / oracle / regret / summary CSVs.

All numbers are written with Python's shortest round-trip representation,
so re-reading a file reproduces the exact doubles and identical runs
produce byte-identical files. Column layouts are documented in
``docs/csv_schema.json`` and carry a schema version in the summary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .game import Game
from .metrics import (
    EnvelopeMargins,
    RegretReport,
    envelope_margins,
    kappa_bounds,
    regret,
    tracking_constants,
)
from .graph import epsilon_factor
from .oracle import OracleSequence, vgne_sequence
from .scenario import Scenario
from .solver import Trajectory, run_horizon

CSV_SCHEMA_VERSION = 1


def _fmt(v) -> str:
    return repr(float(v))


def _x_columns(game: Game, prefix: str):
    cols = []
    for i in range(1, game.n_prosumers + 1):
        cols += [f"{prefix}{i}_pg", f"{prefix}{i}_pc", f"{prefix}{i}_pd",
                 f"{prefix}{i}_pmg"]
        cols += [f"{prefix}{i}_tr{j}" for j in game.graph.neighbors(i)]
    return cols


def write_trajectory_csv(path, traj: Trajectory, game: Game):
    """One row per round plus a leading t=0 row holding the initial state."""
    N = game.n_prosumers
    header = (["t", "rho"] + _x_columns(game, "x") + _x_columns(game, "a")
              + [f"soc{i}" for i in range(1, N + 1)]
              + [f"lam_norm{i}" for i in range(1, N + 1)]
              + [f"mu{i}" for i in range(1, N + 1)]
              + [f"est_err{i}" for i in range(1, N + 1)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        zero_x = np.zeros(game.layout.n)
        first = ([0, 0.0] + [_fmt(v) for v in traj.x[0]]
                 + [_fmt(v) for v in zero_x]
                 + [_fmt(v) for v in traj.soc[0]]
                 + [_fmt(v) for v in traj.lam_norm[0]]
                 + [_fmt(v) for v in traj.mu[0]]
                 + [_fmt(v) for v in traj.est_err[0]])
        w.writerow(first)
        for t in range(1, traj.T + 1):
            row = ([t, _fmt(traj.rho[t - 1])]
                   + [_fmt(v) for v in traj.x[t]]
                   + [_fmt(v) for v in traj.played[t - 1]]
                   + [_fmt(v) for v in traj.soc[t]]
                   + [_fmt(v) for v in traj.lam_norm[t]]
                   + [_fmt(v) for v in traj.mu[t]]
                   + [_fmt(v) for v in traj.est_err[t]])
            w.writerow(row)


@dataclass
class TrajectoryView:
    """The slice of a trajectory the validators need, as read from CSV."""

    rho: np.ndarray
    est_err: np.ndarray
    lam_norm: np.ndarray
    mu: np.ndarray

    @property
    def T(self) -> int:
        return len(self.rho)


def read_trajectory_csv(path) -> TrajectoryView:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = 1
    while f"est_err{n + 1}" in rows[0]:
        n += 1
    rho = np.array([float(r["rho"]) for r in rows[1:]])
    grab = lambda key: np.array([[float(r[f"{key}{i}"]) for i in range(1, n + 1)]
                                 for r in rows])
    return TrajectoryView(rho=rho, est_err=grab("est_err"),
                          lam_norm=grab("lam_norm"), mu=grab("mu"))


def write_oracle_csv(path, oseq: OracleSequence, game: Game):
    N = game.n_prosumers
    header = (["t"] + _x_columns(game, "xs") + ["lam_star_norm"]
              + [f"mu_star{i}" for i in range(1, N + 1)]
              + ["kkt_residual", "path_increment"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        T = oseq.x_star.shape[0]
        for t in range(1, T + 1):
            inc = 0.0 if t == 1 else float(oseq.path_increments[t - 2])
            w.writerow([t] + [_fmt(v) for v in oseq.x_star[t - 1]]
                       + [_fmt(np.linalg.norm(oseq.lambda_star[t - 1]))]
                       + [_fmt(v) for v in oseq.mu_star[t - 1]]
                       + [_fmt(oseq.kkt_residuals[t - 1]), _fmt(inc)])


def write_regret_csv(path, rep: RegretReport, game: Game):
    N = game.n_prosumers
    header = (["t"] + [f"r{i}" for i in range(1, N + 1)]
              + [f"R{i}" for i in range(1, N + 1)]
              + [f"avg{i}" for i in range(1, N + 1)] + ["bound_curve"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        T = rep.per_step.shape[1]
        for t in range(1, T + 1):
            w.writerow([t] + [_fmt(v) for v in rep.per_step[:, t - 1]]
                       + [_fmt(v) for v in rep.cumulative[:, t - 1]]
                       + [_fmt(v) for v in rep.average[:, t - 1]]
                       + [_fmt(rep.bound_curve[t - 1])])


def read_regret_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = 1
    while f"avg{n + 1}" in rows[0]:
        n += 1
    t = np.array([int(r["t"]) for r in rows])
    avg = np.array([[float(r[f"avg{i}"]) for r in rows] for i in range(1, n + 1)])
    cum = np.array([[float(r[f"R{i}"]) for r in rows] for i in range(1, n + 1)])
    return t, cum, avg


def write_summary_csv(path, entries: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "value"])
        w.writerow(["csv_schema_version", CSV_SCHEMA_VERSION])
        for k, v in entries.items():
            if isinstance(v, (bool, int, str)):
                w.writerow([k, v])
            else:
                w.writerow([k, _fmt(v)])


def read_summary_csv(path) -> dict:
    with open(path, newline="") as fh:
        return {r["name"]: r["value"] for r in csv.DictReader(fh)}


@dataclass
class RunArtifacts:
    trajectory: Trajectory
    oracle: OracleSequence | None
    regret: RegretReport | None
    margins: EnvelopeMargins
    summary: dict


def run_scenario(sc: Scenario, with_oracle: bool = True) -> RunArtifacts:
    """Run the tracker, optionally the oracle sequence, and the diagnostics."""
    game = sc.game
    traj = run_horizon(
        game, sc.steps, mode="online", fading_duals=sc.solver.fading_duals,
        init=sc.solver.init, seed=sc.solver.seed,
    )
    eps = epsilon_factor(game.spectrum(), game.graph.coupling_gain,
                         traj.rho)
    kappas = kappa_bounds(game)
    margins = envelope_margins(traj, game, kappas, eps)
    mono = game.monotonicity()
    summary = {
        "scenario": sc.name,
        "mode": "online",
        "fading_duals": sc.solver.fading_duals,
        "seed": sc.solver.seed,
        "n_prosumers": game.n_prosumers,
        "horizon": game.horizon,
        "epsilon": eps,
        "eta": mono.eta,
        "theta": mono.theta,
        "theta_star": mono.theta_star,
        "kappa1": kappas.kappa1, "kappa2": kappas.kappa2,
        "kappa3": kappas.kappa3, "kappa4": kappas.kappa4,
        "kappa5": kappas.kappa5, "kappa6": kappas.kappa6,
        "est_margin_min": margins.min_est,
        "lam_margin_min": margins.min_lam,
        "mu_margin_min": margins.min_mu,
    }
    oseq = None
    rep = None
    if with_oracle:
        oseq = vgne_sequence(game, traj.soc[:game.horizon],
                             tol=sc.solver.oracle_tol)
        rep = regret(traj, oseq, game)
        consts = tracking_constants(game, eps, kappas, oseq)
        summary.update({
            "phi_T": rep.path_length,
            "vartheta_lambda": consts.vartheta_lambda,
            "vartheta_mu": consts.vartheta_mu,
            "delta_lambda": consts.delta_lambda,
            "delta_mu": consts.delta_mu,
            "pi1": consts.pi1, "pi2": consts.pi2, "pi3": consts.pi3,
        })
        for i in range(1, game.n_prosumers + 1):
            summary[f"regret_R{i}"] = rep.cumulative[i - 1, -1]
            summary[f"regret_avg{i}"] = rep.average[i - 1, -1]
    return RunArtifacts(trajectory=traj, oracle=oseq, regret=rep,
                        margins=margins, summary=summary)


def write_run(out_dir, game: Game, art: RunArtifacts):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", art.trajectory, game)
    write_summary_csv(out / "summary.csv", art.summary)
    if art.oracle is not None:
        write_oracle_csv(out / "oracle.csv", art.oracle, game)
    if art.regret is not None:
        write_regret_csv(out / "regret.csv", art.regret, game)
    return out
