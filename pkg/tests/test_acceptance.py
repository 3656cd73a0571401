"""Acceptance criteria, one test per criterion, at their stated tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
PASS/FAIL lines; a failing criterion also fails its test.
"""

import subprocess
import sys
import time

import numpy as np

from p2pgne import (
    Decision,
    StackedDecision,
    local_feasible_set,
    project_chi,
    pseudo_gradient,
)
from p2pgne.graph import epsilon_factor
from p2pgne.metrics import envelope_margins, kappa_bounds, sublinearity_fit
from p2pgne.oracle import brute_force_vgne, solve_vgne
from p2pgne.scenario import random_scenario, reference_scenario, save_scenario
from p2pgne.solver import run_horizon

from conftest import mk_params, sample_feasible

MARGIN_TOL = -1e-9


def report(num, ok, detail):
    print(f"\nACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def test_criterion_1_static_game_convergence():
    """Frozen-mode runs reach the centralized equilibrium on random games."""
    sizes = [2, 2, 2, 3, 3, 3, 3, 6, 6, 6]
    worst_gap, worst_time = 0.0, 0.0
    for k, n in enumerate(sizes):
        sc = random_scenario(1000 + k, n_prosumers=n, T=3)
        t0 = time.monotonic()
        fr = run_horizon(sc.game, sc.steps, mode="frozen",
                         frozen_tol=1e-10, frozen_max_iter=200_000)
        sol = solve_vgne(sc.game, 1, sc.game.initial_socs(), tol=1e-9)
        dt = time.monotonic() - t0
        gap = float(np.max(np.abs(fr.x - sol.x_star)))
        worst_gap = max(worst_gap, gap)
        worst_time = max(worst_time, dt)
        assert dt <= 60.0, f"scenario {k} (N={n}) took {dt:.1f}s"
    ok = worst_gap <= 1e-4
    report(1, ok, f"10 frozen scenarios: worst gap {worst_gap:.2e} "
                  f"(<= 1e-4), worst time {worst_time:.1f}s (<= 60s)")


def test_criterion_2_reference_decay(ref_run):
    """Average regret decays and stays monotone (5% ripple) late in the day."""
    elapsed = getattr(ref_run, "elapsed_seconds", 0.0)
    M = ref_run.regret.average.max(axis=0)  # max over prosumers of R_i(t)/t
    ratio = M[719] / M[119]
    ripple_ok = True
    run_min = np.inf
    for t in range(239, 720):
        run_min = min(run_min, M[t])
        if M[t] > 1.05 * run_min:
            ripple_ok = False
            break
    positive = bool(np.all(M[239:] > 0))
    ok = (ratio <= 0.25) and ripple_ok and positive and elapsed <= 300.0
    report(2, ok, f"max avg regret ratio t=720/t=120 = {ratio:.3f} (<= 0.25), "
                  f"ripple<=5% after t=240: {ripple_ok}, "
                  f"run+oracle {elapsed:.0f}s (<= 300s)")


def test_reference_decay_proxy(ref_run):
    # quantified decay proxy: below the t=120 level everywhere after t=240
    M = ref_run.regret.average.max(axis=0)
    assert np.all(M[239:] < M[119])


def test_criterion_3_estimation_error_envelope(ref_run, ref_scenario):
    """Exact estimation-error inequality on the recorded runs."""
    worst = ref_run.margins.min_est
    # the damped variant is the one the envelope is stated for; check both
    game = ref_scenario.game
    traj = run_horizon(game, ref_scenario.steps, fading_duals=True, seed=7)
    eps = epsilon_factor(game.spectrum(), game.graph.coupling_gain, traj.rho)
    m2 = envelope_margins(traj, game, kappa_bounds(game), eps)
    worst = min(worst, m2.min_est)
    ok = worst >= MARGIN_TOL
    report(3, ok, f"min estimation-error slack {worst:.3e} (>= -1e-9), "
                  f"both dual variants")


def test_criterion_4_dual_norm_envelope(ref_run, ref_scenario):
    """Dual-norm caps sqrt(rho)||lam|| and sqrt(rho)|mu| hold throughout."""
    game = ref_scenario.game
    traj = run_horizon(game, ref_scenario.steps, fading_duals=True, seed=7)
    eps = epsilon_factor(game.spectrum(), game.graph.coupling_gain, traj.rho)
    m_fade = envelope_margins(traj, game, kappa_bounds(game), eps)
    worst = min(m_fade.min_lam, m_fade.min_mu,
                ref_run.margins.min_lam, ref_run.margins.min_mu)
    ok = worst >= MARGIN_TOL
    report(4, ok, f"min dual-norm slack {worst:.3e} (>= -1e-9), "
                  f"both dual variants")


def test_criterion_5_sampled_curvature(ref_scenario):
    """Strong monotonicity with eta and Lipschitz with theta*, 1000 pairs."""
    game = ref_scenario.game
    mono = game.monotonicity()
    lay = game.layout
    rng = np.random.default_rng(99)
    violations = 0
    for _ in range(1000):
        x = rng.uniform(-10, 10, lay.n)
        y = rng.uniform(-10, 10, lay.n)
        t = int(rng.integers(1, game.horizon + 1))
        Fx = pseudo_gradient(t, StackedDecision(lay, x), game.params, game.market)
        Fy = pseudo_gradient(t, StackedDecision(lay, y), game.params, game.market)
        d = x - y
        if (Fx - Fy) @ d < mono.eta * d @ d - 1e-10:
            violations += 1
        if np.linalg.norm(Fx - Fy) > mono.theta_star * np.linalg.norm(d) + 1e-10:
            violations += 1
    ok = violations == 0
    report(5, ok, f"{violations} violations in 1000 sampled pairs "
                  f"(eta={mono.eta:.4f}, theta*={mono.theta_star:.4f})")


def test_criterion_6_sublinear_regret(ref_run):
    """log-log slope of max regret across nested horizons stays below 0.95."""
    horizons = [90, 180, 360, 720]
    peaks = [float(ref_run.regret.cumulative[:, T - 1].max()) for T in horizons]
    slope = sublinearity_fit(horizons, peaks)
    ok = slope < 0.95
    report(6, ok, f"slope {slope:.3f} (< 0.95) over T={horizons}")


def test_criterion_7_oracle_cross_validation():
    """Iterative and enumerative equilibrium solvers agree on tiny games."""
    worst_gap, worst_res, worst_comp = 0.0, 0.0, 0.0
    for k in range(30):
        n = 1 if k % 3 == 0 else 2
        sc = random_scenario(2000 + k, n_prosumers=n, T=2)
        game = sc.game
        socs = game.initial_socs()
        a = solve_vgne(game, 1, socs, tol=1e-8)
        b = brute_force_vgne(game, 1, socs)
        worst_gap = max(worst_gap, float(np.max(np.abs(a.x_star - b.x_star))))
        worst_res = max(worst_res, a.kkt_residual, b.kkt_residual)
        for sol in (a, b):
            A = np.hstack([blk.a_mat for blk in game.blocks])
            btot = np.sum([blk.b_vec for blk in game.blocks], axis=0)
            comp = abs(float(sol.lambda_star @ (A @ sol.x_star - btot)))
            worst_comp = max(worst_comp, comp)
    ok = worst_gap <= 1e-6 and worst_res <= 1e-8 and worst_comp <= 1e-8
    report(7, ok, f"30 tiny instances: max gap {worst_gap:.2e} (<= 1e-6), "
                  f"max KKT {worst_res:.2e} (<= 1e-8), "
                  f"max complementarity {worst_comp:.2e} (<= 1e-8)")


def test_criterion_8_projection_exactness():
    """Projection vs a 400x400 brute-force grid plus its optimality law."""
    rng = np.random.default_rng(7)
    p = mk_params(1, p_ch_max=2.0, p_dis_max=2.0, e_cap=0.4,
                  soc_min=0.45, soc_max=0.55)
    grid_fail = 0
    for _ in range(200):
        soc = rng.uniform(0.46, 0.54)
        fs = local_feasible_set(p, soc, 1 / 60)
        raw = Decision(rng.uniform(-12, 12), rng.uniform(-1, 3),
                       rng.uniform(-1, 3), rng.uniform(-10, 10),
                       rng.uniform(-7, 7, 1))
        out = project_chi(raw, fs)
        K = 400
        xs = np.linspace(0, p.p_ch_max, K)
        ys = np.linspace(0, p.p_dis_max, K)
        X, Y = np.meshgrid(xs, ys)
        F = fs.eta_ch * X - fs.inv_eta_dis * Y
        okm = (F >= fs.band[0] - 1e-12) & (F <= fs.band[1] + 1e-12)
        d2 = (X - raw.p_ch) ** 2 + (Y - raw.p_dis) ** 2
        d2[~okm] = np.inf
        kk = np.unravel_index(np.argmin(d2), d2.shape)
        h = max(xs[1] - xs[0], ys[1] - ys[0])
        if np.hypot(out.p_ch - X[kk], out.p_dis - Y[kk]) > 2 * h:
            # refinement: the grid point must not beat the projection, and
            # the optimality inequality must hold with it as the probe
            d_lib = np.hypot(out.p_ch - raw.p_ch, out.p_dis - raw.p_dis)
            d_grid = np.hypot(X[kk] - raw.p_ch, Y[kk] - raw.p_dis)
            gap = ((raw.p_ch - out.p_ch) * (X[kk] - out.p_ch)
                   + (raw.p_dis - out.p_dis) * (Y[kk] - out.p_dis))
            if d_lib > d_grid + 1e-12 or gap > 1e-9:
                grid_fail += 1

    vi_worst = -np.inf
    fs = local_feasible_set(mk_params(2, e_cap=0.5, soc_min=0.4, soc_max=0.6),
                            0.5, 1 / 60)
    for _ in range(500):
        raw = Decision(rng.uniform(-15, 15), rng.uniform(-4, 4),
                       rng.uniform(-4, 4), rng.uniform(-20, 20),
                       rng.uniform(-8, 8, 2))
        proj = project_chi(raw, fs)
        y = sample_feasible(fs, rng)
        gap = float((raw.as_array() - proj.as_array())
                    @ (y.as_array() - proj.as_array()))
        vi_worst = max(vi_worst, gap)
    ok = grid_fail == 0 and vi_worst <= 1e-9
    report(8, ok, f"grid mismatches {grid_fail}/200, "
                  f"max optimality gap {vi_worst:.2e} (<= 1e-9 on 500 probes)")


def test_criterion_9_deterministic_artifacts(tmp_path):
    """Byte-identical CSVs across repeated runs and BLAS thread counts."""
    sc_path = tmp_path / "sc.json"
    save_scenario(sc_path, reference_scenario(T=16))
    blobs = []
    for tag, threads in (("a", "1"), ("b", "1"), ("c", "4")):
        out = tmp_path / tag
        env = {"OMP_NUM_THREADS": threads, "OPENBLAS_NUM_THREADS": threads,
               "MKL_NUM_THREADS": threads, "PATH": "/usr/bin:/bin"}
        proc = subprocess.run(
            [sys.executable, "-m", "p2pgne.cli", "run", "--scenario",
             str(sc_path), "--out", str(out), "--no-oracle"],
            env=env, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        blobs.append((out / "trajectory.csv").read_bytes())
    ok = blobs[0] == blobs[1] == blobs[2]
    report(9, ok, "trajectory bytes identical across two runs and "
                  "thread counts 1/4")
