"""Scenario files: schema, validation, synthetic profiles, and builders.

A scenario is one JSON document: graph, market, per-prosumer parameters,
step schedule, and solver options. Long series can be inlined as lists,
generated (``{"shape": ...}``), or referenced from CSV files next to the
scenario (``{"csv": ..., "column": ...}``).
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadProfileSpecError,
    ScenarioParseError,
    ScenarioValidationError,
    SchemaVersionError,
)
from .game import Game
from .graph import build_graph
from .model import MarketSchedule, ProsumerParams
from .solver import StepSchedule

SCHEMA_VERSION = 1
SCENARIO_DIR_ENV = "P2PGNE_SCENARIO_DIR"


@dataclass
class SolverOptions:
    seed: int = 0
    init: str = "zeros"
    fading_duals: bool = False
    frozen_tol: float = 1e-9
    frozen_max_iter: int = 200_000
    oracle_tol: float = 1e-8

    def to_dict(self):
        return {
            "seed": self.seed,
            "init": self.init,
            "fading_duals": self.fading_duals,
            "frozen_tol": self.frozen_tol,
            "frozen_max_iter": self.frozen_max_iter,
            "oracle_tol": self.oracle_tol,
        }


@dataclass
class Scenario:
    """A fully resolved, validated game plus run options."""

    game: Game
    steps: StepSchedule
    solver: SolverOptions
    mode: str = "online"
    name: str = "scenario"


def synth_profiles(spec, T: int, dt_minutes: float = 1.0,
                   start_hour: float = 6.0) -> np.ndarray:
    """Deterministic synthetic series of length T.

    Shapes: ``constant`` (offset + amplitude), ``sinusoid`` (offset +
    amplitude * sin(2 pi cycles (t-1)/T + phase)), ``step`` (offset, plus
    amplitude from the ``phase`` fraction of the horizon onward), and ``pv``
    (amplitude * half sine over the daylight window 6:00-18:00, clipped at
    zero). Gaussian noise with ``noise_std`` is added, seeded; pv output is
    re-clipped at zero after adding noise.
    """
    if not isinstance(spec, dict) or "shape" not in spec:
        raise BadProfileSpecError(f"profile spec needs a 'shape': {spec!r}")
    if T < 1:
        raise BadProfileSpecError(f"need T >= 1, got {T}")
    shape = spec["shape"]
    amp = float(spec.get("amplitude", 1.0))
    phase = float(spec.get("phase", 0.0))
    noise_std = float(spec.get("noise_std", 0.0))
    offset = float(spec.get("offset", 0.0))
    if noise_std < 0:
        raise BadProfileSpecError(f"noise_std must be >= 0, got {noise_std}")
    t = np.arange(1, T + 1, dtype=float)
    if shape == "constant":
        base = np.full(T, offset + amp)
    elif shape == "sinusoid":
        cycles = float(spec.get("cycles", 1.0))
        base = offset + amp * np.sin(2.0 * np.pi * cycles * (t - 1) / T + phase)
    elif shape == "step":
        frac = min(max(phase, 0.0), 1.0)
        base = offset + np.where((t - 1) / T >= frac, amp, 0.0)
    elif shape == "pv":
        hour = float(spec.get("start_hour", start_hour)) + (t - 1) * float(
            spec.get("dt_minutes", dt_minutes)
        ) / 60.0
        base = amp * np.maximum(0.0, np.sin(np.pi * (hour - 6.0) / 12.0))
    else:
        raise BadProfileSpecError(f"unknown shape {shape!r}")
    if noise_std > 0:
        rng = np.random.default_rng(spec.get("seed", 0))
        base = base + rng.normal(0.0, noise_std, size=T)
    if shape == "pv":
        base = np.maximum(base, 0.0)
    return base


def _resolve_series(node, T, base_dir, dt_minutes, what):
    if isinstance(node, (int, float)):
        return np.full(T, float(node))
    if isinstance(node, list):
        return np.asarray(node, dtype=float)
    if isinstance(node, dict) and "csv" in node:
        path = Path(base_dir) / node["csv"]
        col = node.get("column", "value")
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return np.array([float(r[col]) for r in rows])
    if isinstance(node, dict):
        return synth_profiles(node, T, dt_minutes=dt_minutes)
    raise BadProfileSpecError(f"{what}: cannot interpret series {node!r}")


def scenario_from_dict(doc: dict, base_dir=".", name="scenario") -> Scenario:
    """Build and fully validate a scenario; collects all violations."""
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"unsupported schema_version {doc.get('schema_version')!r}, "
            f"expected {SCHEMA_VERSION}"
        )
    problems = []
    try:
        gsec = doc["graph"]
        graph = build_graph(gsec["n"], [tuple(e) for e in gsec["edges"]],
                            gsec["self_weights"])
    except ScenarioValidationError:
        raise
    except Exception as exc:
        raise ScenarioValidationError([f"graph: {exc}"]) from exc

    msec = doc.get("market", {})
    T = int(doc.get("horizon", 0))
    if T < 1:
        problems.append(f"horizon must be >= 1, got {T}")
        raise ScenarioValidationError(problems)
    dt_minutes = float(msec.get("dt_minutes", 1.0))
    a_tr = float(msec.get("a_tr", 0.0))
    c_mg = _resolve_series(msec.get("c_mg"), T, base_dir, dt_minutes, "c_mg")
    if len(c_mg) != T:
        problems.append(f"c_mg has length {len(c_mg)}, horizon is {T}")

    pros_docs = doc.get("prosumers", [])
    if len(pros_docs) != graph.n:
        problems.append(f"{len(pros_docs)} prosumer entries for {graph.n} nodes")
        raise ScenarioValidationError(problems)

    default_cap = max(abs(float(msec.get("p_mg_min", 0.0))),
                      abs(float(msec.get("p_mg_max", 0.0))))
    params, loads = [], []
    for i, pd_ in enumerate(pros_docs, start=1):
        nbrs = graph.neighbors(i)
        trades = pd_.get("trades", {})
        t_min, t_max, t_price = [], [], []
        for j in nbrs:
            entry = trades.get(str(j)) or trades.get(j)
            if entry is None:
                problems.append(f"prosumer {i}: missing trade entry for neighbor {j}")
                entry = {"min": 0.0, "max": 0.0, "price": 1.0}
            t_min.append(float(entry["min"]))
            t_max.append(float(entry["max"]))
            t_price.append(float(entry["price"]))
        load = _resolve_series(pd_.get("load", 0.0), T, base_dir, dt_minutes,
                               f"prosumer {i} load")
        if len(load) != T:
            problems.append(f"prosumer {i}: load has length {len(load)}, horizon {T}")
            load = np.resize(load, T)
        loads.append(load)
        params.append(ProsumerParams(
            a_gen=float(pd_["a_gen"]), b_gen=float(pd_.get("b_gen", 0.0)),
            p_gen_min=float(pd_["p_gen_min"]), p_gen_max=float(pd_["p_gen_max"]),
            a_ch=float(pd_["a_ch"]), a_dis=float(pd_["a_dis"]),
            p_ch_max=float(pd_["p_ch_max"]), p_dis_max=float(pd_["p_dis_max"]),
            eta_ch=float(pd_["eta_ch"]), eta_dis=float(pd_["eta_dis"]),
            e_cap=float(pd_["e_cap"]), soc_min=float(pd_["soc_min"]),
            soc_max=float(pd_["soc_max"]), soc0=float(pd_["soc0"]),
            p_mg_bound=float(pd_.get("p_mg_bound", default_cap)),
            trade_min=np.array(t_min), trade_max=np.array(t_max),
            trade_price=np.array(t_price), a_tr=a_tr,
        ))

    market = MarketSchedule(
        c_mg=np.asarray(c_mg, dtype=float),
        loads=np.vstack(loads) if loads else np.zeros((0, T)),
        p_mg_min=float(msec.get("p_mg_min", -np.inf)),
        p_mg_max=float(msec.get("p_mg_max", np.inf)),
        dt_hours=dt_minutes / 60.0,
    )
    game = Game(graph, params, market)
    problems.extend(game.validate())

    ssec = doc.get("step_schedule", {})
    try:
        if ssec.get("type", "power") == "table":
            steps = StepSchedule.from_table(ssec["values"])
        else:
            steps = StepSchedule.power(ssec["gain"], ssec["a"], ssec["b"],
                                       ssec["alpha"])
        rho = steps.rho_array(T)
        if np.any(rho <= 0) or np.any(rho >= 1):
            problems.append("step schedule leaves (0,1) on the horizon")
        if np.any(np.diff(rho) > 1e-15):
            problems.append("step schedule is not nonincreasing on the horizon")
    except Exception as exc:
        problems.append(f"step_schedule: {exc}")
        steps = None

    sols = doc.get("solver", {})
    solver = SolverOptions(
        seed=int(sols.get("seed", 0)),
        init=sols.get("init", "zeros"),
        fading_duals=bool(sols.get("fading_duals", False)),
        frozen_tol=float(sols.get("frozen_tol", 1e-9)),
        frozen_max_iter=int(sols.get("frozen_max_iter", 200_000)),
        oracle_tol=float(sols.get("oracle_tol", 1e-8)),
    )
    if solver.init not in ("zeros", "random"):
        problems.append(f"solver.init must be zeros|random, got {solver.init!r}")
    mode = doc.get("mode", "online")
    if mode not in ("online", "frozen"):
        problems.append(f"mode must be online|frozen, got {mode!r}")

    if problems:
        raise ScenarioValidationError(problems)
    return Scenario(game=game, steps=steps, solver=solver, mode=mode, name=name)


def scenario_to_dict(sc: Scenario) -> dict:
    """Serializable form with all series inlined (round-trips exactly)."""
    g = sc.game.graph
    edges = []
    seen = set()
    for i, j in g.ordered_edges:
        key = (min(i, j), max(i, j))
        if key not in seen:
            seen.add(key)
            edges.append([key[0], key[1], g.weight(*key)])
    pros = []
    for i, p in enumerate(sc.game.params, start=1):
        trades = {
            str(j): {"min": float(lo), "max": float(hi), "price": float(d)}
            for j, lo, hi, d in zip(g.neighbors(i), p.trade_min, p.trade_max,
                                    p.trade_price)
        }
        pros.append({
            "a_gen": p.a_gen, "b_gen": p.b_gen,
            "p_gen_min": p.p_gen_min, "p_gen_max": p.p_gen_max,
            "a_ch": p.a_ch, "a_dis": p.a_dis,
            "p_ch_max": p.p_ch_max, "p_dis_max": p.p_dis_max,
            "eta_ch": p.eta_ch, "eta_dis": p.eta_dis,
            "e_cap": p.e_cap, "soc_min": p.soc_min, "soc_max": p.soc_max,
            "soc0": p.soc0, "p_mg_bound": p.p_mg_bound,
            "load": sc.game.market.loads[i - 1].tolist(),
            "trades": trades,
        })
    if sc.steps.table:
        ssec = {"type": "table", "values": list(sc.steps.table)}
    else:
        ssec = {"type": "power", "gain": sc.steps.gain, "a": sc.steps.a,
                "b": sc.steps.b, "alpha": sc.steps.alpha}
    return {
        "schema_version": SCHEMA_VERSION,
        "graph": {
            "n": g.n,
            "edges": edges,
            "self_weights": [g.weight(i, i) for i in range(1, g.n + 1)],
        },
        "market": {
            "a_tr": sc.game.params[0].a_tr if sc.game.params else 0.0,
            "c_mg": sc.game.market.c_mg.tolist(),
            "p_mg_min": sc.game.market.p_mg_min,
            "p_mg_max": sc.game.market.p_mg_max,
            "dt_minutes": sc.game.market.dt_hours * 60.0,
        },
        "prosumers": pros,
        "horizon": sc.game.horizon,
        "step_schedule": ssec,
        "solver": sc.solver.to_dict(),
        "mode": sc.mode,
    }


def resolve_scenario_path(path) -> Path:
    """Literal path, else relative to $P2PGNE_SCENARIO_DIR."""
    p = Path(path)
    if p.exists():
        return p
    env = os.environ.get(SCENARIO_DIR_ENV)
    if env:
        candidate = Path(env) / p
        if candidate.exists():
            return candidate
    return p


def load_scenario(path) -> Scenario:
    path = resolve_scenario_path(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioParseError(f"{path}: top level must be an object")
    return scenario_from_dict(doc, base_dir=Path(path).parent, name=Path(path).stem)


def save_scenario(path, sc: Scenario):
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n")


# -- builders -------------------------------------------------------------------


def reference_scenario(T: int = 720, seed: int = 7) -> Scenario:
    """Six prosumers on a ring, minute sampling, daylight window horizon.

    Prosumers 1, 3, 4 and 6 carry PV, so their net load is demand minus a
    half-sine generation curve (negative around midday); 2 and 5 are
    load-only. Weights are 1/(N_i + 1) = 1/3 everywhere, giving unit row
    sums. The learning rate decays like 0.8 * (5 / (0.1 t + 5))^(1/3).
    """
    n = 6
    edges = [[i, i + 1, 1.0 / 3.0] for i in range(1, 6)] + [[1, 6, 1.0 / 3.0]]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "graph": {"n": n, "edges": edges, "self_weights": [1.0 / 3.0] * n},
        "market": {
            "a_tr": 0.08,
            "c_mg": {"shape": "sinusoid", "amplitude": 0.05, "offset": 0.16,
                     "cycles": 1.0, "phase": -0.6, "noise_std": 0.0},
            "p_mg_min": -30.0,
            "p_mg_max": 30.0,
            "dt_minutes": 1.0,
        },
        "prosumers": [],
        "horizon": T,
        "step_schedule": {"type": "power", "gain": 0.8, "a": 0.1, "b": 5.0,
                          "alpha": 1.0 / 3.0},
        "solver": {"seed": seed, "fading_duals": False},
        "mode": "online",
    }
    rng = np.random.default_rng(seed)
    pv_amp = {1: 6.0, 3: 5.0, 4: 7.0, 6: 4.5}
    base_load = {1: 3.2, 2: 4.0, 3: 2.8, 4: 3.6, 5: 4.4, 6: 2.6}
    prices = {}
    for i in range(1, n + 1):
        j = i % n + 1
        prices[(min(i, j), max(i, j))] = round(float(rng.uniform(0.10, 0.16)), 4)
    for i in range(1, n + 1):
        demand = synth_profiles(
            {"shape": "sinusoid", "amplitude": 0.8, "offset": base_load[i],
             "cycles": 1.5, "phase": float(rng.uniform(0, 1.5)),
             "noise_std": 0.05, "seed": seed + i}, T)
        if i in pv_amp:
            pv = synth_profiles({"shape": "pv", "amplitude": pv_amp[i]}, T)
            net = demand - pv
        else:
            net = demand
        nbrs = [i % n + 1, (i - 2) % n + 1]
        trades = {
            str(j): {"min": -6.0, "max": 6.0,
                     "price": prices[(min(i, j), max(i, j))]}
            for j in nbrs
        }
        doc["prosumers"].append({
            "a_gen": round(float(rng.uniform(0.06, 0.12)), 4),
            "b_gen": round(float(rng.uniform(0.04, 0.10)), 4),
            "p_gen_min": 0.0, "p_gen_max": 12.0,
            "a_ch": 0.10, "a_dis": 0.10,
            "p_ch_max": 3.0, "p_dis_max": 3.0,
            "eta_ch": 0.95, "eta_dis": 0.95,
            "e_cap": 12.0, "soc_min": 0.15, "soc_max": 0.90, "soc0": 0.50,
            "p_mg_bound": 12.0,
            "load": net.tolist(),
            "trades": trades,
        })
    return scenario_from_dict(doc, name="reference-6ring")


def random_scenario(seed: int, n_prosumers: int = 3, T: int = 4,
                    with_storage: bool = True, steps: dict | None = None) -> Scenario:
    """Seeded random connected scenario with comfortably feasible loads."""
    rng = np.random.default_rng(seed)
    n = n_prosumers
    edges = []
    if n > 1:
        order = list(rng.permutation(np.arange(1, n + 1)))
        for a, b in zip(order, order[1:]):
            edges.append((min(a, b), max(a, b)))
        extra = rng.integers(0, n) if n > 2 else 0
        tries = 0
        while extra > 0 and tries < 50:
            a, b = sorted(rng.choice(np.arange(1, n + 1), 2, replace=False).tolist())
            tries += 1
            if (a, b) not in edges:
                edges.append((a, b))
                extra -= 1
    weights = {e: float(rng.uniform(0.15, 0.35)) for e in edges}
    off_deg = np.zeros(n)
    for (a, b), w in weights.items():
        off_deg[a - 1] += w
        off_deg[b - 1] += w
    w0 = float(off_deg.max()) + float(rng.uniform(0.2, 0.5))
    self_weights = (w0 - off_deg).tolist()
    prices = {e: round(float(rng.uniform(0.08, 0.2)), 4) for e in edges}

    doc = {
        "schema_version": SCHEMA_VERSION,
        "graph": {"n": n, "edges": [[a, b, w] for (a, b), w in weights.items()],
                  "self_weights": self_weights},
        "market": {
            "a_tr": round(float(rng.uniform(0.04, 0.12)), 4),
            "c_mg": {"shape": "sinusoid", "amplitude": 0.04,
                     "offset": round(float(rng.uniform(0.15, 0.3)), 4),
                     "cycles": 1.0, "phase": 0.3, "noise_std": 0.0},
            "p_mg_min": -10.0 * n,
            "p_mg_max": 10.0 * n,
            "dt_minutes": 1.0,
        },
        "prosumers": [],
        "horizon": T,
        "step_schedule": steps or {"type": "power", "gain": 0.8, "a": 0.1,
                                   "b": 5.0, "alpha": 1.0 / 3.0},
        "solver": {"seed": seed, "fading_duals": False},
        "mode": "online",
    }
    nbr = {i: sorted({b for (a, b) in edges if a == i} | {a for (a, b) in edges if b == i})
           for i in range(1, n + 1)}
    for i in range(1, n + 1):
        cap = float(rng.uniform(6.0, 12.0))
        load = synth_profiles(
            {"shape": "sinusoid", "amplitude": float(rng.uniform(0.3, 1.0)),
             "offset": float(rng.uniform(1.0, 0.45 * cap)),
             "cycles": 1.0, "phase": float(rng.uniform(0, 2)),
             "noise_std": 0.02, "seed": seed * 100 + i}, T)
        storage = with_storage and bool(rng.integers(0, 2))
        doc["prosumers"].append({
            "a_gen": round(float(rng.uniform(0.05, 0.4)), 4),
            "b_gen": round(float(rng.uniform(0.0, 0.2)), 4),
            "p_gen_min": 0.0, "p_gen_max": cap,
            "a_ch": round(float(rng.uniform(0.05, 0.3)), 4),
            "a_dis": round(float(rng.uniform(0.05, 0.3)), 4),
            "p_ch_max": 2.0 if storage else 0.0,
            "p_dis_max": 2.0 if storage else 0.0,
            "eta_ch": round(float(rng.uniform(0.9, 1.0)), 3),
            "eta_dis": round(float(rng.uniform(0.9, 1.0)), 3),
            "e_cap": 10.0, "soc_min": 0.2, "soc_max": 0.9,
            "soc0": round(float(rng.uniform(0.4, 0.7)), 3),
            "p_mg_bound": 10.0,
            "load": load.tolist(),
            "trades": {
                str(j): {"min": -4.0, "max": 4.0,
                         "price": prices[(min(i, j), max(i, j))]}
                for j in nbr[i]
            },
        })
    return scenario_from_dict(doc, name=f"random-{seed}")
