"""Trading/communication graph: weights, Laplacian spectrum, contraction factor.

Nodes are numbered 1..n. The weight matrix W is symmetric with positive
diagonal and a common row sum w0, which makes W/w0 doubly stochastic and
gives the consensus updates a uniform mixing gain c = 1/w0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DisconnectedGraphError,
    EmptyHorizonError,
    NonPositiveSelfWeightError,
    RowSumMismatchError,
    SpectrumFailureError,
    StepOutOfRangeError,
)

ROW_SUM_TOL = 1e-9
ZERO_EIG_TOL = 1e-10


@dataclass(frozen=True)
class TradingGraph:
    """Immutable weighted undirected graph over the prosumers.

    Attributes
    ----------
    n : int
        Number of prosumers.
    weights : ndarray, shape (n, n)
        Symmetric nonnegative weight matrix, positive diagonal.
    neighbor_sets : tuple of tuples
        Per node, the 1-based neighbor ids in ascending order.
    w0 : float
        The common row sum of ``weights``.
    ordered_edges : tuple of (int, int)
        Every ordered pair (I, J) with {I, J} an undirected edge, in
        lexicographic order. Both orientations of each edge appear.
    """

    n: int
    weights: np.ndarray
    neighbor_sets: tuple
    w0: float
    ordered_edges: tuple

    @property
    def coupling_gain(self) -> float:
        """Consensus gain c = 1/w0."""
        return 1.0 / self.w0

    def neighbors(self, i: int):
        return self.neighbor_sets[i - 1]

    def degree(self, i: int) -> int:
        return len(self.neighbor_sets[i - 1])

    def weight(self, i: int, j: int) -> float:
        return float(self.weights[i - 1, j - 1])

    @property
    def num_ordered_edges(self) -> int:
        return len(self.ordered_edges)

    def edge_row(self, i: int, j: int) -> int:
        """Index of ordered pair (i, j) in the canonical edge list."""
        return self.ordered_edges.index((i, j))


@dataclass(frozen=True)
class LaplacianSpectrum:
    """Eigenvalues of the weighted Laplacian, ascending, first one ~0."""

    eigenvalues: np.ndarray


def build_graph(n, weighted_edges, self_weights) -> TradingGraph:
    """Assemble and validate the trading graph.

    Parameters
    ----------
    n : int
        Number of nodes.
    weighted_edges : iterable of (i, j, w)
        Undirected edges with 1-based endpoints, i != j, w > 0. Each
        undirected pair may appear once.
    self_weights : sequence of float
        Diagonal entries w_ii, all positive, length n.

    Raises
    ------
    NonPositiveSelfWeightError, RowSumMismatchError, DisconnectedGraphError
        plus ValueError for malformed edge input.
    """
    if n < 1:
        raise ValueError(f"need at least one node, got n={n}")
    self_weights = [float(w) for w in self_weights]
    if len(self_weights) != n:
        raise ValueError(f"expected {n} self weights, got {len(self_weights)}")
    if any(w <= 0.0 for w in self_weights):
        raise NonPositiveSelfWeightError(f"self weights must be positive, got {self_weights}")

    W = np.zeros((n, n))
    np.fill_diagonal(W, self_weights)
    seen = set()
    for i, j, w in weighted_edges:
        i, j, w = int(i), int(j), float(w)
        if not (1 <= i <= n and 1 <= j <= n):
            raise ValueError(f"edge ({i},{j}) out of range 1..{n}")
        if i == j:
            raise ValueError(f"self loops go in self_weights, got edge ({i},{j})")
        if w <= 0.0:
            raise ValueError(f"edge ({i},{j}) has non-positive weight {w}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ValueError(f"duplicate undirected edge {key}")
        seen.add(key)
        W[i - 1, j - 1] = w
        W[j - 1, i - 1] = w

    row_sums = W.sum(axis=1)
    w0 = float(row_sums[0])
    if np.max(np.abs(row_sums - w0)) > ROW_SUM_TOL:
        raise RowSumMismatchError(
            f"row sums must agree within {ROW_SUM_TOL}, got {row_sums.tolist()}"
        )

    # connectivity via breadth-first reachability over positive off-diagonal weights
    if n > 1:
        reached = {0}
        frontier = [0]
        while frontier:
            u = frontier.pop()
            for v in range(n):
                if v != u and W[u, v] > 0.0 and v not in reached:
                    reached.add(v)
                    frontier.append(v)
        if len(reached) != n:
            missing = sorted(set(range(1, n + 1)) - {u + 1 for u in reached})
            raise DisconnectedGraphError(f"nodes unreachable from node 1: {missing}")

    neighbor_sets = tuple(
        tuple(j + 1 for j in range(n) if j != i and W[i, j] > 0.0) for i in range(n)
    )
    ordered = sorted(
        (i, j) for i in range(1, n + 1) for j in neighbor_sets[i - 1]
    )
    W.setflags(write=False)
    return TradingGraph(
        n=n,
        weights=W,
        neighbor_sets=neighbor_sets,
        w0=w0,
        ordered_edges=tuple(ordered),
    )


def laplacian_spectrum(g: TradingGraph) -> LaplacianSpectrum:
    """Eigenvalues of L = diag(off-diagonal row sums) - (off-diagonal W)."""
    W_off = g.weights.copy()
    np.fill_diagonal(W_off, 0.0)
    L = np.diag(W_off.sum(axis=1)) - W_off
    try:
        eigs = np.linalg.eigvalsh(L)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - numerical failure
        raise SpectrumFailureError(str(exc)) from exc
    eigs = np.sort(eigs)
    eigs.setflags(write=False)
    return LaplacianSpectrum(eigenvalues=eigs)


def laplacian_matrix(g: TradingGraph) -> np.ndarray:
    """The weighted Laplacian itself (off-diagonal weights only)."""
    W_off = g.weights.copy()
    np.fill_diagonal(W_off, 0.0)
    return np.diag(W_off.sum(axis=1)) - W_off


def epsilon_factor(spectrum: LaplacianSpectrum, c: float, rho_values) -> float:
    """Consensus contraction factor over a finite horizon.

    Returns max over all steps rho(t) and all positive Laplacian
    eigenvalues s of |1 - c * rho(t) * s|. With c = 1/w0 and steps in
    (0, 1) this lies strictly inside (0, 1), which is what makes the
    estimation errors contract between rounds.
    """
    rho = np.asarray(list(rho_values), dtype=float)
    if rho.size == 0:
        raise EmptyHorizonError("no step sizes supplied")
    if np.any(rho <= 0.0) or np.any(rho >= 1.0):
        bad = rho[(rho <= 0.0) | (rho >= 1.0)]
        raise StepOutOfRangeError(f"steps must lie in (0,1), got {bad[:5].tolist()}")
    eigs = np.asarray(spectrum.eigenvalues, dtype=float)
    pos = eigs[eigs > ZERO_EIG_TOL]
    if pos.size == 0:
        raise ValueError("spectrum has no positive eigenvalue")
    grid = np.abs(1.0 - c * np.outer(rho, pos))
    return float(grid.max())
