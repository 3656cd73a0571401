import numpy as np
import pytest

from p2pgne import (
    Game,
    MarketSchedule,
    ProsumerParams,
    build_graph,
    reference_scenario,
)
from p2pgne.records import run_scenario


def mk_params(nb, **over):
    """Standard prosumer parameters; override fields per test."""
    base = dict(
        a_gen=1.0, b_gen=0.2, p_gen_min=0.0, p_gen_max=10.0,
        a_ch=0.5, a_dis=0.5, p_ch_max=2.0, p_dis_max=2.0,
        eta_ch=0.95, eta_dis=0.95, e_cap=10.0,
        soc_min=0.2, soc_max=0.9, soc0=0.5, p_mg_bound=8.0,
        trade_min=np.full(nb, -5.0), trade_max=np.full(nb, 5.0),
        trade_price=np.full(nb, 0.1), a_tr=0.05,
    )
    base.update(over)
    return ProsumerParams(**base)


def mk_market(n, T, c=0.3, loads=None, p_mg_min=-8.0, p_mg_max=8.0,
              dt_hours=1 / 60):
    if loads is None:
        loads = np.zeros((n, T))
    c_arr = np.full(T, c) if np.isscalar(c) else np.asarray(c, dtype=float)
    return MarketSchedule(c_mg=c_arr, loads=np.asarray(loads, dtype=float),
                          p_mg_min=p_mg_min, p_mg_max=p_mg_max,
                          dt_hours=dt_hours)


def two_prosumer(T=8, **market_kw):
    g = build_graph(2, [(1, 2, 0.5)], [0.5, 0.5])
    params = [mk_params(1), mk_params(1, a_gen=0.8, b_gen=0.1)]
    loads = market_kw.pop("loads", np.vstack([np.full(T, 4.0), np.full(T, 2.0)]))
    market = mk_market(2, T, loads=loads, **market_kw)
    return Game(g, params, market)


def sample_feasible(fset, rng):
    """Random feasible decision: boxes uniform, polygon via a random convex
    combination of its vertices."""
    from p2pgne import Decision

    w = rng.random(len(fset.ess_polygon))
    w /= w.sum()
    pc = sum(wk * v[0] for wk, v in zip(w, fset.ess_polygon))
    pd = sum(wk * v[1] for wk, v in zip(w, fset.ess_polygon))
    tr = np.array([rng.uniform(lo, hi) for lo, hi in fset.tr_boxes])
    return Decision(rng.uniform(*fset.pg_box), pc, pd,
                    rng.uniform(*fset.pmg_box), tr)


@pytest.fixture(scope="session")
def two_game():
    return two_prosumer()


@pytest.fixture(scope="session")
def ref_scenario():
    return reference_scenario(T=720)


@pytest.fixture(scope="session")
def ref_run(ref_scenario):
    """Full reference run with per-interval oracle solves; shared by the
    acceptance criteria (~15 s once per session)."""
    import time

    t0 = time.monotonic()
    art = run_scenario(ref_scenario, with_oracle=True)
    art.elapsed_seconds = time.monotonic() - t0
    return art
