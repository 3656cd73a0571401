"""Command line front end: run, oracle, validate, plot."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import P2PGNEError
from .graph import epsilon_factor
from .metrics import envelope_margins, kappa_bounds
from .records import (
    read_regret_csv,
    read_trajectory_csv,
    run_scenario,
    write_run,
)
from .scenario import load_scenario

MARGIN_TOL = -1e-9


def _build_parser():
    p = argparse.ArgumentParser(prog="p2pgne",
                                description="P2P energy-trading game simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and write CSV artifacts")
    run.add_argument("--scenario", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int, default=None,
                     help="override the scenario seed")
    run.add_argument("--fading-duals", action="store_true", default=None,
                     help="force the damped-dual variant")
    run.add_argument("--no-oracle", action="store_true",
                     help="skip the per-interval equilibrium solves")

    orc = sub.add_parser("oracle", help="write the equilibrium sequence CSV")
    orc.add_argument("--scenario", required=True)
    orc.add_argument("--out", required=True)

    val = sub.add_parser("validate",
                         help="re-check the tracking inequalities on a run")
    val.add_argument("--scenario", required=True)
    val.add_argument("--run", required=True, help="directory with trajectory.csv")

    plo = sub.add_parser("plot", help="plot average regret curves to SVG")
    plo.add_argument("--regret", required=True, help="regret.csv from a run")
    plo.add_argument("--out", required=True, help="output .svg path")
    return p


def _apply_overrides(sc, args):
    if getattr(args, "seed", None) is not None:
        sc.solver.seed = args.seed
    if getattr(args, "fading_duals", None):
        sc.solver.fading_duals = True
    return sc


def cmd_run(args) -> int:
    sc = _apply_overrides(load_scenario(args.scenario), args)
    art = run_scenario(sc, with_oracle=not args.no_oracle)
    out = write_run(args.out, sc.game, art)
    print(f"wrote {out}/trajectory.csv, summary.csv"
          + ("" if args.no_oracle else ", oracle.csv, regret.csv"))
    return 0


def cmd_oracle(args) -> int:
    sc = load_scenario(args.scenario)
    art = run_scenario(sc, with_oracle=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .records import write_oracle_csv

    write_oracle_csv(out / "oracle.csv", art.oracle, sc.game)
    print(f"wrote {out}/oracle.csv (path length {art.regret.path_length!r})")
    return 0


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    view = read_trajectory_csv(Path(args.run) / "trajectory.csv")
    eps = epsilon_factor(sc.game.spectrum(), sc.game.graph.coupling_gain,
                         view.rho)
    kappas = kappa_bounds(sc.game)
    margins = envelope_margins(view, sc.game, kappas, eps)
    report = {
        "epsilon": eps,
        "est_margin_min": margins.min_est,
        "lam_margin_min": margins.min_lam,
        "mu_margin_min": margins.min_mu,
    }
    ok = all(v >= MARGIN_TOL for v in
             (margins.min_est, margins.min_lam, margins.min_mu))
    report["ok"] = ok
    print(json.dumps(report))
    return 0 if ok else 1


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t, _cum, avg = read_regret_csv(args.regret)
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for i in range(avg.shape[0]):
        axes[0].plot(t, avg[i], label=f"prosumer {i + 1}", linewidth=1.0)
        pos = avg[i] > 0
        axes[1].plot(t[pos], avg[i][pos], linewidth=1.0)
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("average regret R(t)/t")
    axes[0].legend(fontsize=7)
    axes[0].grid(alpha=0.3)
    axes[1].set_yscale("log")
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("average regret (log scale)")
    axes[1].grid(alpha=0.3)
    fig.tight_layout()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg")
    print(f"wrote {out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "oracle": cmd_oracle,
                "validate": cmd_validate, "plot": cmd_plot}
    try:
        return handlers[args.command](args)
    except P2PGNEError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"error": "OSError", "message": str(exc)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
