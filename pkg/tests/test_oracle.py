import numpy as np
import pytest

from p2pgne import Game, build_graph, pseudo_gradient, StackedDecision
from p2pgne.errors import TooLargeError
from p2pgne.oracle import (
    brute_force_vgne,
    kkt_residual,
    solve_vgne,
    vgne_sequence,
)
from p2pgne.scenario import random_scenario

from conftest import mk_market, mk_params, sample_feasible, two_prosumer


def test_zero_game_equilibrium_is_zero():
    g = build_graph(2, [(1, 2, 0.5)], [0.5, 0.5])
    params = [mk_params(1, b_gen=0.0, p_gen_min=-5.0,
                        trade_price=np.array([0.0])) for _ in range(2)]
    game = Game(g, params, mk_market(2, 4, loads=np.zeros((2, 4))))
    sol = solve_vgne(game, 1, game.initial_socs())
    assert np.max(np.abs(sol.x_star)) <= 1e-9
    assert np.max(np.abs(sol.mu_star)) <= 1e-8
    assert sol.kkt_residual <= 1e-8
    bf = brute_force_vgne(game, 1, game.initial_socs())
    assert np.max(np.abs(bf.x_star)) <= 1e-10


def test_generation_only_pair_cross_check():
    # no storage, no grid: the only balance-feasible adjustments are the
    # generators and the reciprocal trade
    g = build_graph(2, [(1, 2, 0.5)], [0.5, 0.5])
    params = [mk_params(1, a_gen=0.5, b_gen=0.0, p_ch_max=0.0, p_dis_max=0.0,
                        p_mg_bound=0.0, trade_price=np.array([0.05]))
              for _ in range(2)]
    loads = np.vstack([np.full(3, 4.0), np.full(3, 2.0)])
    game = Game(g, params, mk_market(2, 3, loads=loads))
    socs = game.initial_socs()
    sol = solve_vgne(game, 1, socs, tol=1e-8)
    bf = brute_force_vgne(game, 1, socs)
    assert np.max(np.abs(sol.x_star - bf.x_star)) <= 1e-6
    lay = game.layout
    x = sol.x_star
    assert x[lay.idx_pg[0]] + x[lay.trade_slice(1)][0] == pytest.approx(4.0, abs=1e-7)
    assert x[lay.idx_pg[1]] + x[lay.trade_slice(2)][0] == pytest.approx(2.0, abs=1e-7)
    assert x[lay.trade_slice(1)][0] == pytest.approx(-x[lay.trade_slice(2)][0],
                                                     abs=1e-7)


def test_uniqueness_across_starts(two_game):
    socs = two_game.initial_socs()
    a = solve_vgne(two_game, 1, socs)
    rng = np.random.default_rng(0)
    warm = (rng.uniform(-2, 2, two_game.layout.n), np.zeros(4), np.zeros(2))
    b = solve_vgne(two_game, 1, socs, warm=warm)
    assert np.max(np.abs(a.x_star - b.x_star)) <= 1e-6


def test_brute_force_single_prosumer_interior():
    g = build_graph(1, [], [1.0])
    a_gen, b_gen, load = 0.7, 0.3, 3.0
    params = [mk_params(0, a_gen=a_gen, b_gen=b_gen, p_ch_max=0.0,
                        p_dis_max=0.0, p_mg_bound=0.0)]
    game = Game(g, params, mk_market(1, 2, loads=np.full((1, 2), load)))
    sol = brute_force_vgne(game, 1, game.initial_socs())
    assert sol.x_star[0] == pytest.approx(load, abs=1e-10)
    # interior stationarity: 2 a pg + b + mu = 0
    assert sol.mu_star[0] == pytest.approx(-(2 * a_gen * load + b_gen), abs=1e-9)


def test_brute_force_rejects_large_instances():
    sc = random_scenario(5, n_prosumers=3, T=2)
    with pytest.raises(TooLargeError):
        brute_force_vgne(sc.game, 1, sc.game.initial_socs())


def test_cross_oracle_agreement_random_tiny():
    for seed in range(8):
        sc = random_scenario(100 + seed, n_prosumers=2, T=2)
        game = sc.game
        socs = game.initial_socs()
        a = solve_vgne(game, 1, socs, tol=1e-8)
        b = brute_force_vgne(game, 1, socs)
        assert np.max(np.abs(a.x_star - b.x_star)) <= 1e-6
        assert a.kkt_residual <= 1e-8
        assert b.kkt_residual <= 1e-8


def test_variational_characterization(two_game):
    socs = two_game.initial_socs()
    sol = solve_vgne(two_game, 1, socs)
    lay = two_game.layout
    F = pseudo_gradient(1, StackedDecision(lay, sol.x_star), two_game.params,
                        two_game.market)
    rng = np.random.default_rng(2)
    fsets = two_game.feasible_sets(socs)
    accepted = 0
    attempts = 0
    while accepted < 1000 and attempts < 100_000:
        attempts += 1
        decs = [sample_feasible(fs, rng) for fs in fsets]
        decs[1].p_tr = -decs[0].p_tr  # trade reciprocity
        if not (fsets[1].tr_boxes[0, 0] <= decs[1].p_tr[0]
                <= fsets[1].tr_boxes[0, 1]):
            continue
        total_mg = decs[0].p_mg + decs[1].p_mg
        if not (two_game.market.p_mg_min <= total_mg
                <= two_game.market.p_mg_max):
            continue
        ok = True
        for i, d in enumerate(decs, start=1):
            # restore balance through the generator; reject if out of range
            need = (two_game.market.load(i, 1) + d.p_ch - d.p_dis - d.p_mg
                    - float(np.sum(d.p_tr)))
            if not (fsets[i - 1].pg_box[0] <= need <= fsets[i - 1].pg_box[1]):
                ok = False
                break
            d.p_gen = need
        if not ok:
            continue
        accepted += 1
        x = StackedDecision.from_decisions(lay, decs).values
        assert F @ (x - sol.x_star) >= -1e-6
    assert accepted == 1000


def test_shared_multiplier_certifies_kkt(two_game):
    socs = two_game.initial_socs()
    sol = solve_vgne(two_game, 1, socs)
    res = kkt_residual(two_game, 1, socs, sol.x_star, sol.lambda_star,
                       sol.mu_star)
    assert res <= 1e-8
    assert np.min(sol.lambda_star) >= 0.0


def test_warm_start_agrees_with_cold(two_game):
    socs = two_game.initial_socs()
    cold = solve_vgne(two_game, 2, socs)
    prev = solve_vgne(two_game, 1, socs)
    warm = solve_vgne(two_game, 2, socs,
                      warm=(prev.x_star, prev.lambda_star, prev.mu_star))
    assert np.max(np.abs(cold.x_star - warm.x_star)) <= 1e-6


def test_sequence_static_environment_has_zero_path_length():
    game = two_prosumer(T=5)
    soc_path = np.tile(game.initial_socs(), (5, 1))
    seq = vgne_sequence(game, soc_path)
    assert seq.path_length == pytest.approx(0.0, abs=1e-6)


def test_iteration_cap_raises(two_game):
    from p2pgne.errors import IterationCapError

    with pytest.raises(IterationCapError):
        solve_vgne(two_game, 1, two_game.initial_socs(), max_iter=1)


def test_infeasible_balance_detected():
    from p2pgne.errors import InfeasibleError, IterationCapError

    g = build_graph(1, [], [1.0])
    params = [mk_params(0, p_ch_max=0.0, p_dis_max=0.0, p_mg_bound=0.0)]
    game = Game(g, params, mk_market(1, 2, loads=np.full((1, 2), 1000.0)))
    with pytest.raises((InfeasibleError, IterationCapError)):
        solve_vgne(game, 1, game.initial_socs(), max_iter=120_000)


def test_sequence_single_load_step():
    T = 2
    loads = np.vstack([[4.0, 4.5], [2.0, 2.0]])
    game = two_prosumer(T=T, loads=loads)
    soc_path = np.tile(game.initial_socs(), (T, 1))
    seq = vgne_sequence(game, soc_path)
    assert seq.path_length > 0.0
    assert seq.path_length == pytest.approx(
        float(np.linalg.norm(seq.x_star[1] - seq.x_star[0])))
    assert seq.vartheta_mu > 0.0
