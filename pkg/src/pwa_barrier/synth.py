"""Builds and solves the barrier LP.

Every semi-infinite constraint ``sup_{x in P} a(z).x <= b(z)`` is replaced by
its LP dual: fresh multipliers ``lam >= 0`` with ``h.lam <= b(z)`` and
``H^T lam = a(z)``.  The barrier is piece-wise affine, ``B_i(x) = u_i.x + v_i``
on piece ``i``, so all five constraint families are of that form.
"""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .noise import NoiseDataset
from .polytope import (BoxPlan, Polyhedron, PolytopeError, batch_max_linear,
                       batch_min_slack,
                       bounding_box, compact_box, contains, intersect,
                       is_empty)
from .scenario import ScenarioParams, decision_dimension, tightening_margin
from .system import BarrierPartition, PwaSystem, UnsafeDescription, meets

logger = logging.getLogger(__name__)


class SynthesisError(RuntimeError):
    def __init__(self, status, message="", diagnosis=None):
        super().__init__(message or str(status))
        self.status = status
        self.diagnosis = diagnosis or []


class Family(enum.IntEnum):
    NONNEG = 0
    UPPER = 1
    INIT = 2
    UNSAFE = 3
    MARTINGALE = 4


@dataclass
class BarrierTheta:
    u: np.ndarray  # (pieces, n)
    v: np.ndarray  # (pieces,)

    def __post_init__(self):
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float))
        self.v = np.asarray(self.v, dtype=float).reshape(-1)
        if self.u.shape[0] != self.v.shape[0]:
            raise ValueError("u and v must have one entry per piece")

    @property
    def size(self) -> int:
        return self.u.size + self.v.size

    def piece_values(self, X) -> np.ndarray:
        """``(len(X), pieces)`` matrix of ``u_i . x + v_i``."""
        return np.atleast_2d(X) @ self.u.T + self.v

    def to_list(self):
        return [{"u": self.u[i].tolist(), "v": float(self.v[i])} for i in range(len(self.v))]


@dataclass
class RowGroup:
    """A batch of dualised constraints sharing one half-space matrix."""

    family: Family
    i: int
    j: int
    samples: np.ndarray | None
    row_start: int
    count: int
    n: int
    m: int

    @property
    def row_stop(self) -> int:
        return self.row_start + self.count * (self.n + 1)

    def locate(self, row: int):
        k = (row - self.row_start) // (self.n + 1)
        w = None if self.samples is None else int(self.samples[k])
        return self.family.name, self.i, self.j, w


@dataclass
class BuildOptions:
    prune: bool = True
    paper_literal_unsafe: bool = False
    paper_literal_martingale: bool = False
    empty_tol: float = 1e-9
    lp_tol: float = 1e-8
    lp_method: str = "highs"
    cutting_planes: bool = True
    cut_tol: float = 1e-9
    cuts_per_block: int = 64
    max_rounds: int = 200


@dataclass
class LbpProblem:
    model: lp.LpModel
    sys: PwaSystem
    bp: BarrierPartition
    unsafe: UnsafeDescription
    data: NoiseDataset
    params: ScenarioParams
    options: BuildOptions
    gamma_idx: int
    c_idx: int
    theta_idx: np.ndarray  # (pieces, n+1): u columns then v
    groups: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    build_time: float = 0.0
    blocks: list = field(default_factory=list)

    def provenance(self, row: int):
        lo, hi = 0, len(self.groups)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.groups[mid].row_stop <= row:
                lo = mid + 1
            else:
                hi = mid
        g = self.groups[lo]
        if not g.row_start <= row < g.row_stop:
            raise IndexError(row)
        return g.locate(row)


@dataclass
class SynthesisResult:
    gamma: float
    c: float
    theta: BarrierTheta
    objective: float
    status: lp.Status
    build_time: float
    solve_time: float
    solution: lp.LpSolution | None = None


# ---------------------------------------------------------------------------
# dualisation


def _add_robust_batch(model: lp.LpModel, H, h_batch, a_cols, a_coef, a0,
                      b_cols, b_coef, b0, name="lam"):
    """Dualise ``K`` robust constraints over ``{x : H x <= h_k}``.

    ``a(z) = a_coef @ z[a_cols] + a0`` is shared by the batch (``a_coef`` is
    ``(n, p)``); ``b_k(z) = b_coef[k] @ z[b_cols] + b0[k]``.  Each constraint
    contributes one inequality followed by ``n`` equalities.
    """
    H = np.asarray(H, dtype=float)
    h_batch = np.atleast_2d(np.asarray(h_batch, dtype=float))
    K, m = h_batch.shape
    n = H.shape[1]
    a_cols = np.asarray(a_cols, dtype=np.int64)
    a_coef = np.asarray(a_coef, dtype=float).reshape(n, -1)
    b_cols = np.asarray(b_cols, dtype=np.int64)
    b_coef = np.broadcast_to(np.asarray(b_coef, dtype=float), (K, b_cols.size))
    b0 = np.broadcast_to(np.asarray(b0, dtype=float), (K,))
    a0 = np.broadcast_to(np.asarray(a0, dtype=float), (n,))

    lam = model.add_variables(K * m, lb=0.0, ub=np.inf, name=name).reshape(K, m)
    stride = n + 1
    base = np.arange(K) * stride
    p, q = a_cols.size, b_cols.size

    # inequality rows: h_k . lam_k - b_coef_k . z <= b0_k
    r_ineq = np.concatenate([np.repeat(base, m), np.repeat(base, q)])
    c_ineq = np.concatenate([lam.reshape(-1), np.tile(b_cols, K)])
    v_ineq = np.concatenate([h_batch.reshape(-1), -b_coef.reshape(-1)])

    # equality rows t: sum_r H[r,t] lam_kr - a_coef[t] . z = a0[t]
    t_idx = np.arange(n)
    rows_eq_lam = (base[:, None, None] + 1 + t_idx[None, :, None]) \
        + np.zeros((1, 1, m), dtype=np.int64)
    cols_eq_lam = np.broadcast_to(lam[:, None, :], (K, n, m))
    vals_eq_lam = np.broadcast_to(H.T[None, :, :], (K, n, m))
    rows_eq_z = (base[:, None, None] + 1 + t_idx[None, :, None]) \
        + np.zeros((1, 1, p), dtype=np.int64)
    cols_eq_z = np.broadcast_to(a_cols[None, None, :], (K, n, p))
    vals_eq_z = np.broadcast_to(-a_coef[None, :, :], (K, n, p))

    rows = np.concatenate([r_ineq, rows_eq_lam.reshape(-1), rows_eq_z.reshape(-1)])
    cols = np.concatenate([c_ineq, cols_eq_lam.reshape(-1), cols_eq_z.reshape(-1)])
    vals = np.concatenate([v_ineq, vals_eq_lam.reshape(-1), vals_eq_z.reshape(-1)])
    keep = vals != 0
    sense = np.tile(np.r_[False, np.ones(n, dtype=bool)], K)
    rhs = np.column_stack([b0, np.tile(a0, (K, 1))]).reshape(-1)
    first = model.add_rows(rows[keep], cols[keep], vals[keep], sense, rhs)
    return int(first[0]) if len(first) else model.n_rows, lam


def _affine_to_arrays(expr, n_expected=None):
    """``({var: coef, ...}, const)`` or a list of them -> column/coef arrays."""
    if isinstance(expr, tuple) and len(expr) == 2 and isinstance(expr[0], dict):
        exprs = [expr]
    else:
        exprs = list(expr)
    cols = sorted({v for e, _ in exprs for v in e})
    coef = np.array([[e.get(v, 0.0) for v in cols] for e, _ in exprs]).reshape(len(exprs), len(cols))
    const = np.array([c for _, c in exprs], dtype=float)
    if n_expected is not None and len(exprs) != n_expected:
        raise ValueError(f"expected {n_expected} affine components, got {len(exprs)}")
    return np.array(cols, dtype=np.int64), coef, const


def dualize_robust(a_expr, b_expr, P: Polyhedron, model: lp.LpModel,
                   check_empty: bool = True, tol: float = 1e-9):
    """Encode ``sup_{x in P} a(z).x <= b(z)`` with ``P.m`` fresh multipliers.

    ``a_expr`` is a list of ``n`` affine forms and ``b_expr`` one affine form,
    each given as ``({var_index: coef}, constant)``.  Returns the index of the
    inequality row and the multiplier indices.
    """
    if check_empty and is_empty(P, tol):
        raise PolytopeError("robust constraint over an empty polyhedron; prune it first")
    a_cols, a_coef, a_const = _affine_to_arrays(a_expr, P.n)
    b_cols, b_coef, b_const = _affine_to_arrays(b_expr)
    # h.lam - b_lin(z) <= b_const ;  H^T lam - a_lin(z) = a_const
    row, lam = _add_robust_batch(model, P.H, P.h[None, :], a_cols, a_coef, a_const,
                                 b_cols, b_coef, b_const)
    return row, lam.reshape(-1)


# ---------------------------------------------------------------------------
# construction


def _recession_axes(P: Polyhedron) -> np.ndarray:
    """Axes ``k`` along which ``P`` is unbounded in at least one direction."""
    out = np.zeros(P.n, dtype=bool)
    for k in range(P.n):
        col = P.H[:, k]
        if np.all(col <= 0) or np.all(col >= 0):
            out[k] = True
    return out


def _prefilter_margin(H_src, H_tgt, A, tol):
    ns = np.linalg.norm(H_src, axis=1)
    nt = np.linalg.norm(H_tgt, axis=1)
    ns = ns[ns > 0].min(initial=1.0)
    nt = nt[nt > 0].min(initial=1.0)
    return max(1e-7, 4 * tol * (np.abs(A).sum(axis=1).max() * np.sqrt(A.shape[0]) / ns + 1 / nt))


def martingale_sources(sys, bp, literal=False):
    src = {}
    for i in sorted(bp.index_safe):
        src[i] = compact_box(bp.pieces[i] if literal else intersect(bp.pieces[i], sys.safe_set))
    return src


@dataclass
class MartingaleBlock:
    """All retained samples of one ``(i, j)`` pair; ``h`` has one row per sample."""

    i: int
    j: int
    H: np.ndarray
    h: np.ndarray
    samples: np.ndarray
    box: bool

    @property
    def K(self) -> int:
        return self.samples.size


def collect_blocks(sys, bp, data, options: "BuildOptions"):
    """Every ``Q_ij(w)`` that may be nonempty, grouped by ``(i, j)``.

    With pruning the candidates pass a bounding-box prefilter and then an
    emptiness check (closed form for boxes, batched LP otherwise); without it
    every sample is kept.
    """
    sources = martingale_sources(sys, bp, options.paper_literal_martingale)
    prune, tol = options.prune, options.empty_tol
    W = data.samples
    blocks = []
    if prune:
        tgt = [bounding_box(R) for R in bp.pieces]
        t_lo = np.array([b[0] for b in tgt])
        t_hi = np.array([b[1] for b in tgt])
    for i, S in sources.items():
        f = sys.dynamics[bp.parent[i]]
        if prune:
            img_lo, img_hi = bounding_box(S, f)
            if np.any(img_lo > img_hi):
                continue
            # reach[w, j]: the image box of S shifted by w meets the box of piece j
            mg = np.array([_prefilter_margin(S.H, R.H, f.A, tol) for R in bp.pieces])
            reach = np.ones((data.N, bp.size), dtype=bool)
            with np.errstate(invalid="ignore"):
                for k in range(sys.n):
                    reach &= ~((img_lo[k] + W[:, k, None]) - t_hi[None, :, k] > mg)
                    reach &= ~(t_lo[None, :, k] - (img_hi[k] + W[:, k, None]) > mg)
        for j in range(bp.size):
            R = bp.pieces[j]
            if prune:
                idx = np.flatnonzero(reach[:, j])
                if idx.size == 0:
                    continue
            else:
                idx = np.arange(data.N)
            H_Q = np.vstack([S.H, R.H @ f.A])
            plan = BoxPlan(H_Q)
            h_full = np.hstack([np.broadcast_to(S.h, (idx.size, S.m)),
                                R.h - (f.b + W[idx]) @ R.H.T])
            h_Q = plan.apply(h_full)
            if prune:
                slack = batch_min_slack(plan.H, h_Q) if plan.identity else plan.min_slack(h_Q)
                keep = slack <= tol
                idx, h_Q = idx[keep], h_Q[keep]
                if idx.size == 0:
                    continue
            blocks.append(MartingaleBlock(i, j, plan.H, np.ascontiguousarray(h_Q), idx,
                                          not plan.identity))
    return blocks


def build_lbp(sys: PwaSystem, bp: BarrierPartition, unsafe: UnsafeDescription,
              data: NoiseDataset, params: ScenarioParams,
              options: BuildOptions | None = None, blocks=None, active=None) -> LbpProblem:
    """Assemble the finite LP for the sampled barrier program.

    ``active`` optionally restricts each martingale block to a subset of its
    rows (positions within the block); by default every row is included.
    """
    t0 = time.perf_counter()
    opt = options or BuildOptions()
    n, L = sys.n, bp.size
    if data.n != n:
        raise ValueError(f"noise samples have dimension {data.n}, system has {n}")
    if params.delta < tightening_margin(params.eps, params.M) - 1e-12:
        raise ValueError("delta below the admissible minimum")
    if params.d != decision_dimension(L, n):
        raise ValueError(f"scenario d={params.d} but the barrier family has "
                         f"{decision_dimension(L, n)} decision variables")
    if data.N != params.N:
        raise ValueError(f"scenario expects N={params.N} samples, dataset has {data.N}")
    M, T, delta = params.M, int(sys.horizon), params.delta

    model = lp.LpModel()
    gamma_idx = int(model.add_variables(1, 0.0, M, "gamma")[0])
    c_idx = int(model.add_variables(1, 0.0, np.inf, "c")[0])
    theta_idx = model.add_variables(L * (n + 1), -np.inf, np.inf, "theta").reshape(L, n + 1)
    U, V = theta_idx[:, :n], theta_idx[:, n]
    for i, piece in enumerate(bp.pieces):
        axes = _recession_axes(piece)
        if np.any(axes):
            model.set_bounds(U[i, axes], 0.0, 0.0)
    model.set_objective({gamma_idx: 1.0, c_idx: float(T)})

    groups: list[RowGroup] = []
    eye = np.eye(n)

    def add(family, i, j, P_H, h_batch, a_cols, a_coef, a0, b_cols, b_coef, b0, samples=None):
        h_batch = np.atleast_2d(h_batch)
        if h_batch.shape[0] == 0:
            return
        start, _ = _add_robust_batch(model, P_H, h_batch, a_cols, a_coef, a0,
                                     b_cols, b_coef, b0, name=f"lam_{family.name.lower()}")
        groups.append(RowGroup(family, i, j, samples, start, h_batch.shape[0],
                               n, np.asarray(P_H).shape[0]))

    pieces = [compact_box(p) for p in bp.pieces]
    zero_n = np.zeros(n)

    for i, P in enumerate(pieces):  # B_i >= 0 : sup -u.x <= v
        add(Family.NONNEG, i, -1, P.H, P.h, U[i], -eye, zero_n, [V[i]], [1.0], 0.0)
    for i, P in enumerate(pieces):  # B_i <= M : sup u.x <= M - v
        add(Family.UPPER, i, -1, P.H, P.h, U[i], eye, zero_n, [V[i]], [-1.0], M)
    for i in sorted(bp.index_initial):  # B_i <= gamma on piece n X0
        P = compact_box(intersect(bp.pieces[i], sys.initial_set))
        add(Family.INIT, i, -1, P.H, P.h, U[i], eye, zero_n,
            [gamma_idx, V[i]], [1.0, -1.0], 0.0)
    n_unsafe = 0
    for i in sorted(bp.index_unsafe):  # B_i >= 1 : sup -u.x <= v - 1
        for P in unsafe_sets(bp, i, unsafe, opt):
            add(Family.UNSAFE, i, -1, P.H, P.h, U[i], -eye, zero_n, [V[i]], [1.0], -1.0)
            n_unsafe += 1

    if blocks is None:
        blocks = collect_blocks(sys, bp, data, opt)
    W = data.samples
    n_rows_mart = 0
    for q, blk in enumerate(blocks):
        pos = np.arange(blk.K) if active is None else np.asarray(active[q], dtype=np.int64)
        if pos.size == 0:
            continue
        i, j = blk.i, blk.j
        f = sys.dynamics[bp.parent[i]]
        idx = blk.samples[pos]
        # a(z) = A^T u_j - u_i
        a_cols = np.concatenate([U[j], U[i]])
        a_coef = np.hstack([f.A.T, -eye])
        # b(z) = v_i - v_j - u_j.(b + w) + c  ;  constant -delta
        b_cols = np.concatenate([[V[i], V[j], c_idx], U[j]])
        shift = f.b + W[idx]
        b_coef = np.hstack([np.tile([1.0, -1.0, 1.0], (idx.size, 1)), -shift])
        add(Family.MARTINGALE, i, j, blk.H, blk.h[pos], a_cols, a_coef, zero_n,
            b_cols, b_coef, -delta, samples=idx)
        n_rows_mart += idx.size

    total = len(bp.index_safe) * L * data.N
    nonempty = int(sum(b.K for b in blocks))
    counts = {
        "pieces": L, "n": n, "N": data.N,
        "I_0": len(bp.index_initial), "I_u": len(bp.index_unsafe), "I_s": len(bp.index_safe),
        "rows_per_piece": [p.m for p in pieces],
        "unsafe_constraints": n_unsafe,
        "martingale_candidates": total,
        "martingale_retained": nonempty,
        "martingale_constraints": n_rows_mart,
        "pruned": total - nonempty,
        "variables": model.n_vars,
        "constraints": model.n_rows,
        "d": params.d,
    }
    prob = LbpProblem(model, sys, bp, unsafe, data, params, opt, gamma_idx, c_idx,
                      theta_idx, groups, counts)
    prob.blocks = blocks
    prob.build_time = time.perf_counter() - t0
    logger.info("built LP: %d variables, %d rows, %d of %d martingale constraints in %.2fs",
                model.n_vars, model.n_rows, n_rows_mart, total, prob.build_time)
    return prob


def unsafe_sets(bp, i, unsafe, opt):
    """Sets over which ``B_i >= 1`` is imposed for an unsafe-touching piece."""
    if opt.paper_literal_unsafe:
        return [compact_box(bp.pieces[i])]
    hits = [u for u in unsafe.pieces if meets(bp.pieces[i], u, opt.empty_tol)]
    if any(_inside(bp.pieces[i], u, opt.empty_tol) for u in hits):
        return [compact_box(bp.pieces[i])]
    return [compact_box(intersect(bp.pieces[i], u)) for u in hits]


def _inside(P, U, tol):
    return contains(U, P, tol)


# ---------------------------------------------------------------------------
# solving


def extract_theta(problem: LbpProblem, x) -> BarrierTheta:
    n = problem.sys.n
    vals = x[problem.theta_idx]
    return BarrierTheta(vals[:, :n], vals[:, n])


def solve_lbp(problem: LbpProblem, diagnose: bool = True) -> SynthesisResult:
    t0 = time.perf_counter()
    sol = lp.solve(problem.model, problem.options.lp_tol, problem.options.lp_method)
    solve_time = time.perf_counter() - t0
    if sol.status is lp.Status.INFEASIBLE:
        diagnosis = infeasibility_diagnosis(problem) if diagnose else []
        raise SynthesisError(sol.status, "barrier LP is infeasible", diagnosis)
    if not sol.ok:
        raise SynthesisError(sol.status, f"barrier LP: {sol.status.value} ({sol.message})")
    M, tol = problem.params.M, problem.options.lp_tol
    gamma = float(sol.values[problem.gamma_idx])
    c = float(sol.values[problem.c_idx])
    if gamma < -tol or gamma > M + tol or c < -tol:
        raise SynthesisError(lp.Status.NUMERICAL_FAILURE,
                             f"solver returned gamma={gamma}, c={c} outside their bounds")
    # + 0.0 turns a solver's -0.0 into 0.0
    gamma = min(max(gamma, 0.0), M) + 0.0
    c = max(c, 0.0) + 0.0
    T = int(problem.sys.horizon)
    return SynthesisResult(gamma=gamma, c=c, theta=extract_theta(problem, sol.values),
                           objective=gamma + c * T, status=sol.status,
                           build_time=problem.build_time, solve_time=solve_time,
                           solution=sol)


def support_box(H, h_batch, a) -> np.ndarray:
    """``max a.x`` over each box ``{x : H x <= h_k}`` whose rows are unit ``+-e_k``.

    Missing bounds in a direction where ``a`` is nonzero give ``+inf``.
    """
    out = np.zeros(h_batch.shape[0])
    for k in range(H.shape[1]):
        if a[k] == 0.0:
            continue
        r = np.flatnonzero(H[:, k] == np.sign(a[k]))
        if r.size == 0:
            return np.full(h_batch.shape[0], np.inf)
        out += abs(a[k]) * h_batch[:, r[0]]
    return out


def block_excess(blk: MartingaleBlock, sys, bp, data, theta: BarrierTheta,
                 c: float, delta: float, rows=None) -> np.ndarray:
    """``max_{x in Q} B_j(f(x) + w) - B_i(x) - c + delta`` for rows of a block."""
    f = sys.dynamics[bp.parent[blk.i]]
    ui, vi = theta.u[blk.i], theta.v[blk.i]
    uj, vj = theta.u[blk.j], theta.v[blk.j]
    a = f.A.T @ uj - ui
    rows = np.arange(blk.K) if rows is None else rows
    h = blk.h[rows]
    if blk.box:
        sup = support_box(blk.H, h, a)
    else:
        sup = batch_max_linear(blk.H, h, np.broadcast_to(a, (rows.size, a.size)))
    w = data.samples[blk.samples[rows]]
    return sup + (f.b + w) @ uj + vj - vi - c + delta


def _seed_rows(blk: MartingaleBlock, data) -> np.ndarray:
    """Rows extreme in some Q bound or noise coordinate: a small starting set."""
    W = data.samples[blk.samples]
    cand = []
    for col in (*blk.h.T, *W.T):
        cand += [int(np.argmin(col)), int(np.argmax(col))]
    return np.unique(cand)


def synthesize(sys: PwaSystem, bp: BarrierPartition, unsafe: UnsafeDescription,
               data: NoiseDataset, params: ScenarioParams,
               options: BuildOptions | None = None):
    """Solve the barrier LP; returns ``(problem, result)``.

    With ``options.cutting_planes`` only a working set of martingale rows is
    dualised.  After each solve every omitted row is evaluated at the current
    point and the violated ones join the working set, so the final point is
    feasible, and hence optimal, for the full LP.
    """
    opt = options or BuildOptions()
    t0 = time.perf_counter()
    blocks = collect_blocks(sys, bp, data, opt)
    collect_time = time.perf_counter() - t0
    if not opt.cutting_planes:
        prob = build_lbp(sys, bp, unsafe, data, params, opt, blocks=blocks)
        prob.build_time += collect_time
        return prob, solve_lbp(prob)

    active = [_seed_rows(b, data) for b in blocks]
    in_set = [np.zeros(b.K, dtype=bool) for b in blocks]
    for q, rows in enumerate(active):
        in_set[q][rows] = True
    build_time, solve_time = collect_time, 0.0
    for rnd in range(opt.max_rounds):
        prob = build_lbp(sys, bp, unsafe, data, params, opt, blocks=blocks, active=active)
        build_time += prob.build_time
        res = solve_lbp(prob)
        solve_time += res.solve_time
        added = 0
        worst = 0.0
        for q, blk in enumerate(blocks):
            rest = np.flatnonzero(~in_set[q])
            if rest.size == 0:
                continue
            ex = block_excess(blk, sys, bp, data, res.theta, res.c, params.delta, rest)
            bad = ex > opt.cut_tol
            if not np.any(bad):
                continue
            worst = max(worst, float(ex[bad].max()))
            cand = rest[bad]
            if cand.size > opt.cuts_per_block:
                cand = cand[np.argsort(-ex[bad], kind="stable")[:opt.cuts_per_block]]
            in_set[q][cand] = True
            active[q] = np.sort(np.concatenate([active[q], cand]))
            added += cand.size
        logger.info("round %d: objective %.6f, %d rows added (worst excess %.3g)",
                    rnd, res.objective, added, worst)
        if added == 0:
            prob.build_time = build_time
            res.build_time, res.solve_time = build_time, solve_time
            prob.counts["cut_rounds"] = rnd + 1
            return prob, res
    raise SynthesisError(lp.Status.NUMERICAL_FAILURE,
                         f"cutting planes did not converge in {opt.max_rounds} rounds")


def audit(problem: LbpProblem, result: SynthesisResult):
    """Recompute every LP row at the solver point; returns ``(max_violation, where)``."""
    viol = problem.model.row_violations(result.solution.values)
    if viol.size == 0:
        return 0.0, None
    k = int(np.argmax(viol))
    return float(viol[k]), problem.provenance(k)


def infeasibility_diagnosis(problem: LbpProblem, max_groups: int = 300):
    """Deletion filter over constraint groups; returns a minimal infeasible set.

    Only attempted for small models; the result lists ``(family, i, j)``.
    """
    groups = problem.groups
    if len(groups) > max_groups:
        return []
    A, is_eq, rhs = problem.model.matrix()
    lb, ub = problem.model.bounds()
    keep = np.ones(len(groups), dtype=bool)

    def feasible(mask):
        rows = np.concatenate([np.arange(g.row_start, g.row_stop)
                               for g, k in zip(groups, mask) if k] or [np.zeros(0, int)])
        sub = lp.LpModel()
        sub.add_variables(problem.model.n_vars, lb, ub)
        if rows.size:
            Asub = A[rows].tocoo()
            sub.add_rows(Asub.row, Asub.col, Asub.data,
                         [lp.Sense.EQ if e else lp.Sense.LE for e in is_eq[rows]], rhs[rows])
        return lp.solve(sub).status is not lp.Status.INFEASIBLE

    if feasible(keep):
        return []
    for g in range(len(groups)):
        keep[g] = False
        if feasible(keep):
            keep[g] = True
    return [(groups[g].family.name, groups[g].i, groups[g].j) for g in np.flatnonzero(keep)]
