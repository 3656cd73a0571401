import numpy as np
import pytest

from p2pgne import build_graph, epsilon_factor, laplacian_spectrum
from p2pgne.errors import (
    DisconnectedGraphError,
    EmptyHorizonError,
    NonPositiveSelfWeightError,
    RowSumMismatchError,
    StepOutOfRangeError,
)
from p2pgne.graph import laplacian_matrix
from p2pgne.solver import StepSchedule


def ring6():
    edges = [(i, i + 1, 1 / 3) for i in range(1, 6)] + [(1, 6, 1 / 3)]
    return build_graph(6, edges, [1 / 3] * 6)


def test_two_node_construction():
    g = build_graph(2, [(1, 2, 0.5)], [0.5, 0.5])
    assert g.w0 == pytest.approx(1.0)
    assert g.neighbors(1) == (2,)
    assert g.ordered_edges == ((1, 2), (2, 1))
    assert g.coupling_gain == pytest.approx(1.0)


def test_ring6_uniform_row_sums():
    g = ring6()
    sums = np.asarray(g.weights).sum(axis=1)
    assert np.allclose(sums, 1.0, atol=1e-12)
    assert all(g.degree(i) == 2 for i in range(1, 7))
    assert len(g.ordered_edges) == 12


def test_row_sum_mismatch_rejected():
    # path 1-2-3 with unequal weights cannot have uniform row sums
    with pytest.raises(RowSumMismatchError):
        build_graph(3, [(1, 2, 0.4), (2, 3, 0.2)], [0.3, 0.3, 0.3])


def test_disconnected_rejected():
    with pytest.raises(DisconnectedGraphError):
        build_graph(4, [(1, 2, 0.5), (3, 4, 0.5)], [0.5] * 4)


def test_nonpositive_self_weight_rejected():
    with pytest.raises(NonPositiveSelfWeightError):
        build_graph(2, [(1, 2, 0.5)], [0.5, 0.0])


def test_duplicate_edge_rejected():
    with pytest.raises(ValueError):
        build_graph(2, [(1, 2, 0.5), (2, 1, 0.5)], [0.5, 0.5])


def test_two_node_spectrum():
    g = build_graph(2, [(1, 2, 0.5)], [0.5, 0.5])
    eigs = laplacian_spectrum(g).eigenvalues
    assert eigs == pytest.approx([0.0, 1.0], abs=1e-12)


def test_ring6_spectrum_bounds():
    g = ring6()
    eigs = laplacian_spectrum(g).eigenvalues
    assert abs(eigs[0]) <= 1e-10
    assert g.w0 <= eigs[-1] <= 2 * g.w0  # holds for the ring


def test_k3_spectrum_multiplicity():
    # complete graph on 3 nodes, off-diagonal 1/3: L = (1/3)(3I - 11'),
    # eigenvalues {0, 1, 1} by hand
    g = build_graph(3, [(1, 2, 1 / 3), (1, 3, 1 / 3), (2, 3, 1 / 3)], [1 / 3] * 3)
    eigs = laplacian_spectrum(g).eigenvalues
    assert eigs == pytest.approx([0.0, 1.0, 1.0], abs=1e-12)


def test_laplacian_rows_sum_to_zero():
    g = ring6()
    L = laplacian_matrix(g)
    assert np.max(np.abs(np.ones(6) @ L)) <= 1e-10


class FakeSpec:
    def __init__(self, eigs):
        self.eigenvalues = np.asarray(eigs, dtype=float)


def test_epsilon_simple_cases():
    assert epsilon_factor(FakeSpec([0.0, 1.0]), 1.0, [0.8]) == pytest.approx(0.2)
    # max over the horizon lands on the smaller step
    assert epsilon_factor(FakeSpec([0.0, 1.0]), 1.0, [0.8, 0.4]) == pytest.approx(0.6)


def test_epsilon_reference_schedule_contracts():
    g = ring6()
    spec = laplacian_spectrum(g)
    rho = StepSchedule.power(0.8, 0.1, 5.0, 1 / 3).rho_array(720)
    eps = epsilon_factor(spec, g.coupling_gain, rho)
    assert 0.0 < eps < 1.0


def test_epsilon_errors():
    with pytest.raises(EmptyHorizonError):
        epsilon_factor(FakeSpec([0.0, 1.0]), 1.0, [])
    with pytest.raises(StepOutOfRangeError):
        epsilon_factor(FakeSpec([0.0, 1.0]), 1.0, [1.0])
    with pytest.raises(StepOutOfRangeError):
        epsilon_factor(FakeSpec([0.0, 1.0]), 1.0, [-0.1])


def _random_uniform_row_graph(rng, n):
    """Connected graph with a common row sum: random spanning tree plus
    chords, self weights filling rows up."""
    edges = {}
    order = rng.permutation(np.arange(1, n + 1))
    for a, b in zip(order, order[1:]):
        edges[(min(a, b), max(a, b))] = float(rng.uniform(0.1, 0.4))
    for _ in range(rng.integers(0, n)):
        a, b = sorted(rng.choice(np.arange(1, n + 1), 2, replace=False).tolist())
        if (a, b) not in edges:
            edges[(a, b)] = float(rng.uniform(0.1, 0.4))
    deg = np.zeros(n)
    for (a, b), w in edges.items():
        deg[a - 1] += w
        deg[b - 1] += w
    w0 = deg.max() + float(rng.uniform(0.1, 0.6))
    selfw = w0 - deg
    return build_graph(n, [(a, b, w) for (a, b), w in edges.items()], selfw)


def test_contraction_holds_on_random_graphs():
    rng = np.random.default_rng(0)
    for trial in range(100):
        n = int(rng.integers(2, 9))
        g = _random_uniform_row_graph(rng, n)
        spec = laplacian_spectrum(g)
        assert abs(spec.eigenvalues[0]) <= 1e-10
        assert spec.eigenvalues[-1] <= 2 * g.w0 + 1e-12
        rho = rng.uniform(0.05, 0.95, size=5)
        eps = epsilon_factor(spec, g.coupling_gain, rho)
        assert 0.0 < eps < 1.0


def test_ordered_edges_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(2, 9))
        g = _random_uniform_row_graph(rng, n)
        rebuilt = [set() for _ in range(n)]
        for i, j in g.ordered_edges:
            rebuilt[i - 1].add(j)
        assert tuple(tuple(sorted(s)) for s in rebuilt) == g.neighbor_sets
        # both orientations present, count matches sum of degrees
        assert len(g.ordered_edges) == sum(g.degree(i) for i in range(1, n + 1))
        for i, j in g.ordered_edges:
            assert (j, i) in g.ordered_edges
