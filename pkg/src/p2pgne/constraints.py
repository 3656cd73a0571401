"""Coupling/balance constraint blocks and the local feasible set.

The shared constraints are expressed per prosumer as g_i(x_i) = A_i x_i - b_i
with feasibility meaning sum_i g_i <= 0 elementwise. The first two rows cap
the aggregate grid draw from below/above; the remaining rows, one per ordered
trading edge, encode each trade-reciprocity equality p_ij + p_ji = 0 as a
pair of opposing inequalities.

The local set chi_i is a box in every coordinate except (p_ch, p_dis), where
the one-step state-of-charge band cuts the charge/discharge box into a convex
polygon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyFeasibleSetError,
    InvalidProsumerError,
)
from .graph import TradingGraph
from .model import Decision, DecisionLayout, ProsumerParams, StackedDecision


@dataclass(frozen=True)
class ConstraintBlocks:
    """Constraint matrices of one prosumer.

    ``e_mat`` has one row per ordered edge of the whole graph and one column
    per neighbor of the prosumer; entries are +1 / -1 / 0 depending on the
    orientation of the edge relative to the trade coordinate.
    ``a_mat`` stacks the two aggregate-grid rows on top of e_mat (shifted to
    the trade columns); ``b_vec`` holds the per-prosumer share of the grid
    bounds; ``g_row`` is the power-balance row (1, -1, 1, 1, 1...).
    """

    e_mat: np.ndarray
    a_mat: np.ndarray
    b_vec: np.ndarray
    g_row: np.ndarray

    @property
    def m(self) -> int:
        return len(self.b_vec)


def build_blocks(g: TradingGraph, i: int, aggregates) -> ConstraintBlocks:
    """Assemble (E_i, A_i, b_i, G_i) for prosumer i.

    ``aggregates`` is (p_mg_min, p_mg_max, n_prosumers). Edge rows follow the
    canonical lexicographic ordered-edge list so every prosumer agrees on row
    indices.
    """
    if not 1 <= i <= g.n:
        raise InvalidProsumerError(f"prosumer {i} not in 1..{g.n}")
    p_mg_min, p_mg_max, n_pros = aggregates
    nbrs = g.neighbors(i)
    n_i = 4 + len(nbrs)
    rows = g.num_ordered_edges
    E = np.zeros((rows, len(nbrs)))
    for k, (I, J) in enumerate(g.ordered_edges):
        for col, j in enumerate(nbrs):
            if {I, J} == {i, j}:
                E[k, col] = 1.0 if I < J else -1.0
    m = 2 + rows
    A = np.zeros((m, n_i))
    A[0, 3] = -1.0
    A[1, 3] = 1.0
    A[2:, 4:] = E
    b = np.zeros(m)
    b[0] = -p_mg_min / n_pros
    b[1] = p_mg_max / n_pros
    G = np.ones(n_i)
    G[1] = -1.0
    E.setflags(write=False)
    A.setflags(write=False)
    b.setflags(write=False)
    G.setflags(write=False)
    return ConstraintBlocks(e_mat=E, a_mat=A, b_vec=b, g_row=G)


def build_all_blocks(g: TradingGraph, schedule) -> tuple:
    """Blocks for every prosumer, sharing the aggregate grid bounds."""
    agg = (schedule.p_mg_min, schedule.p_mg_max, g.n)
    return tuple(build_blocks(g, i, agg) for i in range(1, g.n + 1))


def coupling_residual(x: StackedDecision, blocks) -> np.ndarray:
    """sum_i (A_i x_i - b_i); feasible iff every entry is <= 0."""
    lay = x.layout
    if len(blocks) != lay.n_prosumers:
        raise DimensionMismatchError(
            f"{len(blocks)} constraint blocks vs {lay.n_prosumers} prosumers"
        )
    total = np.zeros(blocks[0].m)
    for i, blk in enumerate(blocks, start=1):
        xi = x.values[lay.block(i)]
        if blk.a_mat.shape[1] != len(xi):
            raise DimensionMismatchError(
                f"prosumer {i}: A has {blk.a_mat.shape[1]} cols, block is {len(xi)}"
            )
        total += blk.a_mat @ xi - blk.b_vec
    return total


def balance_residual(i, t, xi: Decision, load) -> float:
    """Local power-balance residual G_i x_i - load_i(t)."""
    arr = xi.as_array()
    g = np.ones(len(arr))
    g[1] = -1.0
    load = np.asarray(load, dtype=float)
    value = load[t - 1] if load.ndim else float(load)
    return float(g @ arr - value)


# -- local feasible set --------------------------------------------------------


def _clip_halfplane(vertices, a, b, bound, keep_ge):
    """Sutherland-Hodgman clip of a convex polygon by a*x + b*y >= bound
    (or <= bound when keep_ge is False)."""
    if not vertices:
        return []
    sgn = 1.0 if keep_ge else -1.0
    lim = sgn * bound
    out = []
    k = len(vertices)
    for idx in range(k):
        p1 = vertices[idx]
        p2 = vertices[(idx + 1) % k]
        f1 = sgn * (a * p1[0] + b * p1[1])
        f2 = sgn * (a * p2[0] + b * p2[1])
        in1, in2 = f1 >= lim, f2 >= lim
        if in1:
            out.append(p1)
        if in1 != in2:
            tau = (lim - f1) / (f2 - f1)
            out.append((p1[0] + tau * (p2[0] - p1[0]), p1[1] + tau * (p2[1] - p1[1])))
    # drop consecutive duplicates introduced by vertices sitting on the cut
    dedup = []
    for v in out:
        if not dedup or abs(v[0] - dedup[-1][0]) > 1e-15 or abs(v[1] - dedup[-1][1]) > 1e-15:
            dedup.append(v)
    if len(dedup) > 1 and abs(dedup[0][0] - dedup[-1][0]) <= 1e-15 and abs(dedup[0][1] - dedup[-1][1]) <= 1e-15:
        dedup.pop()
    return dedup


@dataclass
class LocalFeasibleSet:
    """chi_i at a given state of charge.

    Boxes for p_gen, p_mg and each trade; ``ess_polygon`` lists the vertices
    (counter-clockwise) of the charge/discharge region cut by the one-step
    state-of-charge band.
    """

    pg_box: tuple
    pmg_box: tuple
    tr_boxes: np.ndarray  # (N_i, 2) rows of (lo, hi)
    ess_polygon: list     # [(p_ch, p_dis), ...]
    soc: float
    band: tuple           # (lo, hi) bounds on eta_ch*p_ch - p_dis/eta_dis
    eta_ch: float
    inv_eta_dis: float

    def contains(self, dec: Decision, tol: float = 1e-9) -> bool:
        if not (self.pg_box[0] - tol <= dec.p_gen <= self.pg_box[1] + tol):
            return False
        if not (self.pmg_box[0] - tol <= dec.p_mg <= self.pmg_box[1] + tol):
            return False
        for v, (lo, hi) in zip(dec.p_tr, self.tr_boxes):
            if not (lo - tol <= v <= hi + tol):
                return False
        return self._ess_feasible(dec.p_ch, dec.p_dis, tol)

    def _ess_feasible(self, pc, pd, tol=0.0):
        if not self.ess_polygon:
            return False
        xs = [v[0] for v in self.ess_polygon]
        ys = [v[1] for v in self.ess_polygon]
        if not (min(xs) - tol <= pc <= max(xs) + tol):
            return False
        if not (min(ys) - tol <= pd <= max(ys) + tol):
            return False
        f = self.eta_ch * pc - self.inv_eta_dis * pd
        return self.band[0] - tol <= f <= self.band[1] + tol


def local_feasible_set(params: ProsumerParams, soc: float, dt_hours: float) -> LocalFeasibleSet:
    """Build chi_i for the current state of charge.

    The charge/discharge polygon is the box [0, p_ch_max] x [0, p_dis_max]
    clipped by lo <= eta_ch*p_ch - p_dis/eta_dis <= hi, where lo/hi keep the
    next state of charge inside its band. Raises EmptyFeasibleSetError when
    the polygon is empty, which signals a state of charge so far outside the
    band that no admissible action can fix it in one step.
    """
    scale = params.e_cap / dt_hours
    lo = (params.soc_min - soc) * scale
    hi = (params.soc_max - soc) * scale
    alpha = params.eta_ch
    beta = 1.0 / params.eta_dis
    box = [
        (0.0, 0.0),
        (params.p_ch_max, 0.0),
        (params.p_ch_max, params.p_dis_max),
        (0.0, params.p_dis_max),
    ]
    poly = _clip_halfplane(box, alpha, -beta, lo, keep_ge=True)
    poly = _clip_halfplane(poly, alpha, -beta, hi, keep_ge=False)
    if not poly:
        raise EmptyFeasibleSetError(
            f"state of charge {soc} leaves no admissible charge/discharge action"
        )
    return LocalFeasibleSet(
        pg_box=(params.p_gen_min, params.p_gen_max),
        pmg_box=(-params.p_mg_bound, params.p_mg_bound),
        tr_boxes=np.column_stack([params.trade_min, params.trade_max]),
        ess_polygon=poly,
        soc=soc,
        band=(lo, hi),
        eta_ch=alpha,
        inv_eta_dis=beta,
    )


def project_polygon(pc, pd, fset: LocalFeasibleSet):
    """Exact nearest point of (pc, pd) on the charge/discharge polygon."""
    if fset._ess_feasible(pc, pd):
        return pc, pd
    verts = fset.ess_polygon
    k = len(verts)
    if k == 1:
        return verts[0]
    best = None
    best_d = np.inf
    for idx in range(k):
        x1, y1 = verts[idx]
        x2, y2 = verts[(idx + 1) % k]
        dx, dy = x2 - x1, y2 - y1
        den = dx * dx + dy * dy
        if den == 0.0:
            qx, qy = x1, y1
        else:
            tau = ((pc - x1) * dx + (pd - y1) * dy) / den
            tau = min(1.0, max(0.0, tau))
            qx, qy = x1 + tau * dx, y1 + tau * dy
        d = (pc - qx) ** 2 + (pd - qy) ** 2
        if d < best_d:
            best_d = d
            best = (qx, qy)
    return best


def project_chi(xi: Decision, fset: LocalFeasibleSet) -> Decision:
    """Exact Euclidean projection onto chi_i.

    Separable: scalar clamps for p_gen, p_mg and each trade, and the exact
    polygon projection for (p_ch, p_dis).
    """
    pg = min(max(xi.p_gen, fset.pg_box[0]), fset.pg_box[1])
    pmg = min(max(xi.p_mg, fset.pmg_box[0]), fset.pmg_box[1])
    if len(xi.p_tr) != len(fset.tr_boxes):
        raise DimensionMismatchError(
            f"{len(xi.p_tr)} trades vs {len(fset.tr_boxes)} trade boxes"
        )
    if len(fset.tr_boxes):
        ptr = np.clip(xi.p_tr, fset.tr_boxes[:, 0], fset.tr_boxes[:, 1])
    else:
        ptr = xi.p_tr.copy()
    pc, pd = project_polygon(xi.p_ch, xi.p_dis, fset)
    return Decision(pg, pc, pd, pmg, ptr)


def soc_step(soc: float, p_ch: float, p_dis: float, params: ProsumerParams,
             dt_hours: float) -> float:
    """One-step state-of-charge update for nonnegative charge/discharge."""
    return soc + (dt_hours / params.e_cap) * (
        params.eta_ch * p_ch - p_dis / params.eta_dis
    )


# -- batched projection over the whole network ---------------------------------


class ChiProjector:
    """Projection onto the product of all local sets, on flat vectors.

    Precomputes clamp bounds for the box coordinates; the charge/discharge
    pairs go through the exact polygon projection per prosumer.
    """

    def __init__(self, layout: DecisionLayout, fsets):
        self.layout = layout
        self.fsets = list(fsets)
        lo = np.full(layout.n, -np.inf)
        hi = np.full(layout.n, np.inf)
        for i, fs in enumerate(self.fsets, start=1):
            lo[layout.idx_pg[i - 1]], hi[layout.idx_pg[i - 1]] = fs.pg_box
            lo[layout.idx_pmg[i - 1]], hi[layout.idx_pmg[i - 1]] = fs.pmg_box
            sl = layout.trade_slice(i)
            if len(fs.tr_boxes):
                lo[sl] = fs.tr_boxes[:, 0]
                hi[sl] = fs.tr_boxes[:, 1]
        # leave the polygon coordinates unclamped here
        lo[layout.idx_pc] = -np.inf
        hi[layout.idx_pc] = np.inf
        lo[layout.idx_pd] = -np.inf
        hi[layout.idx_pd] = np.inf
        self.lo = lo
        self.hi = hi

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = np.clip(x, self.lo, self.hi)
        lay = self.layout
        for i, fs in enumerate(self.fsets):
            pc, pd = project_polygon(x[lay.idx_pc[i]], x[lay.idx_pd[i]], fs)
            out[lay.idx_pc[i]] = pc
            out[lay.idx_pd[i]] = pd
        return out

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        lay = self.layout
        for i, fs in enumerate(self.fsets, start=1):
            if not fs.contains(Decision.from_array(x[lay.block(i)]), tol):
                return False
        return True
