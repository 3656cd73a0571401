"""Bundle of everything that defines one trading game instance."""

from __future__ import annotations

import numpy as np

from .constraints import ChiProjector, build_all_blocks, local_feasible_set
from .graph import TradingGraph, laplacian_spectrum
from .model import (
    DecisionLayout,
    MarketSchedule,
    MonotonicityConstants,
    affine_map,
    monotonicity_constants,
)


class Game:
    """A trading graph, its prosumers, and the market data, wired together.

    Derived structures (decision layout, constraint blocks) are built once
    and shared; everything here is immutable after construction.
    """

    def __init__(self, graph: TradingGraph, params, market: MarketSchedule):
        self.graph = graph
        self.params = tuple(params)
        self.market = market
        self.layout = DecisionLayout(graph)
        self.blocks = build_all_blocks(graph, market)

    @property
    def n_prosumers(self) -> int:
        return self.graph.n

    @property
    def horizon(self) -> int:
        return self.market.horizon

    def initial_socs(self) -> np.ndarray:
        return np.array([p.soc0 for p in self.params])

    def feasible_sets(self, socs):
        return [
            local_feasible_set(p, float(s), self.market.dt_hours)
            for p, s in zip(self.params, socs)
        ]

    def chi_projector(self, socs) -> ChiProjector:
        return ChiProjector(self.layout, self.feasible_sets(socs))

    def affine(self, t):
        return affine_map(t, self.params, self.market, self.layout)

    def monotonicity(self) -> MonotonicityConstants:
        return monotonicity_constants(self.params, self.market)

    def spectrum(self):
        return laplacian_spectrum(self.graph)

    def validate(self):
        """Network-level invariant violations (list of strings)."""
        bad = []
        for i, p in enumerate(self.params, start=1):
            bad.extend(p.validate(f"prosumer {i}"))
            if p.n_neighbors != self.graph.degree(i):
                bad.append(
                    f"prosumer {i}: {p.n_neighbors} trade entries but "
                    f"{self.graph.degree(i)} graph neighbors"
                )
        bad.extend(self.market.validate())
        if self.market.loads.shape[0] != self.graph.n:
            bad.append(
                f"loads has {self.market.loads.shape[0]} rows for {self.graph.n} prosumers"
            )
        # the platform fee is one network-wide constant
        fees = {p.a_tr for p in self.params}
        if len(fees) > 1:
            bad.append(f"a_tr must be identical network-wide, got {sorted(fees)}")
        # trade prices must agree across each edge
        for i in range(1, self.graph.n + 1):
            for k, j in enumerate(self.graph.neighbors(i)):
                if j < i:
                    continue
                pi, pj = self.params[i - 1], self.params[j - 1]
                kj = p_neighbor_index(self.graph, j, i)
                if kj is None or k >= len(pi.trade_price) or kj >= len(pj.trade_price):
                    continue  # the neighbor-count check above already fired
                d_ij = float(np.asarray(pi.trade_price)[k])
                d_ji = float(np.asarray(pj.trade_price)[kj])
                if abs(d_ij - d_ji) > 1e-12:
                    bad.append(
                        f"trade price mismatch on edge ({i},{j}): {d_ij} vs {d_ji}"
                    )
        return bad


def p_neighbor_index(graph: TradingGraph, i: int, j: int):
    """Position of j in i's ascending neighbor list, or None."""
    nbrs = graph.neighbors(i)
    try:
        return nbrs.index(j)
    except ValueError:
        return None
