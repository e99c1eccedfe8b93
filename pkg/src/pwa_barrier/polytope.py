"""Half-space polyhedra and the LP-backed queries on them.

A :class:`Polyhedron` is the set ``{x : H x <= h}``.  It may be empty or
unbounded; nothing is normalised implicitly.  Emptiness, containment and
extreme values are decided by linear programs, the vertex enumerator is a
brute-force oracle for small dimensions and is meant for tests.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9


class PolytopeError(ValueError):
    """Malformed polyhedron or dimension mismatch."""


class SolverFailure(RuntimeError):
    """The LP backend returned neither an optimum nor a certified status."""


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """The set ``{x in R^n : H x <= h}``."""

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.array(self.H, dtype=float, copy=True)
        h = np.array(self.h, dtype=float, copy=True).reshape(-1)
        if H.ndim == 1:
            H = H.reshape(1, -1)
        if H.ndim != 2:
            raise PolytopeError(f"H must be a matrix, got shape {H.shape}")
        if H.shape[0] != h.shape[0]:
            raise PolytopeError(
                f"H has {H.shape[0]} rows but h has length {h.shape[0]}")
        if H.shape[0] < 1 or H.shape[1] < 1:
            raise PolytopeError("a polyhedron needs m >= 1 rows and n >= 1 columns")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(h))):
            raise PolytopeError("H and h must be finite")
        H.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def m(self) -> int:
        return self.H.shape[0]

    def __repr__(self):
        return f"Polyhedron(n={self.n}, m={self.m})"

    def contains_points(self, X, tol: float = DEFAULT_TOL) -> np.ndarray:
        """Membership mask for the rows of ``X`` (shape ``(k, n)``)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.all(X @ self.H.T <= self.h + tol, axis=1)

    def to_dict(self) -> dict:
        return {"H": self.H.tolist(), "h": self.h.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Polyhedron":
        return cls(np.asarray(d["H"], dtype=float), np.asarray(d["h"], dtype=float))

    @classmethod
    def box(cls, lo, hi) -> "Polyhedron":
        """Axis-aligned box; infinite bounds drop the corresponding row."""
        lo = np.asarray(lo, dtype=float).reshape(-1)
        hi = np.asarray(hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise PolytopeError("lo and hi must have the same length")
        n = lo.size
        rows, rhs = [], []
        for k in range(n):
            if np.isfinite(hi[k]):
                e = np.zeros(n)
                e[k] = 1.0
                rows.append(e)
                rhs.append(hi[k])
            if np.isfinite(lo[k]):
                e = np.zeros(n)
                e[k] = -1.0
                rows.append(e)
                rhs.append(-lo[k])
        if not rows:
            # whole space; keep one trivially true row so m >= 1
            rows.append(np.zeros(n))
            rhs.append(0.0)
        return cls(np.array(rows), np.array(rhs))


@dataclass(frozen=True, eq=False)
class AffineMap:
    """``x -> A x + b`` with square ``A``."""

    A: np.ndarray
    b: np.ndarray = field(default=None)

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float, copy=True))
        if A.shape[0] != A.shape[1]:
            raise PolytopeError(f"A must be square, got {A.shape}")
        b = (np.zeros(A.shape[0]) if self.b is None
             else np.array(self.b, dtype=float, copy=True).reshape(-1))
        if b.shape[0] != A.shape[0]:
            raise PolytopeError("b length does not match A")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        return X @ self.A.T + self.b

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "AffineMap":
        return cls(np.asarray(d["A"], dtype=float), np.asarray(d["b"], dtype=float))


def _check_dim(*polys):
    n = polys[0].n
    for p in polys[1:]:
        if p.n != n:
            raise PolytopeError(f"dimension mismatch: {n} vs {p.n}")


def intersect(P: Polyhedron, R: Polyhedron) -> Polyhedron:
    """Stack the two half-space systems.  No redundancy is removed."""
    _check_dim(P, R)
    return Polyhedron(np.vstack([P.H, R.H]), np.concatenate([P.h, R.h]))


def preimage(source: Polyhedron, f: AffineMap, shift, target: Polyhedron) -> Polyhedron:
    """Points of ``source`` that ``x -> A x + b + shift`` sends into ``target``."""
    _check_dim(source, target)
    shift = np.asarray(shift, dtype=float).reshape(-1)
    if f.n != source.n or shift.size != source.n:
        raise PolytopeError("affine map / shift dimension does not match the polyhedra")
    H = np.vstack([source.H, target.H @ f.A])
    h = np.concatenate([source.h, target.h - target.H @ (f.b + shift)])
    return Polyhedron(H, h)


def _lp(c, A_ub, b_ub, bounds=None):
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    return res


def is_empty(P: Polyhedron, tol: float = DEFAULT_TOL) -> bool:
    """True iff ``H x <= h + tol`` has no solution, as certified by the LP solver."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    res = _lp(np.zeros(P.n), P.H, P.h + tol, bounds=[(None, None)] * P.n)
    if res.status == 0:
        return False
    if res.status == 2:
        return True
    raise SolverFailure(f"emptiness LP ended with status {res.status}: {res.message}")


def max_linear(P: Polyhedron, c, tol: float = 0.0):
    """Return ``(value, argmax)`` of ``c . x`` over ``P`` (rows inflated by tol).

    ``value`` is ``+inf`` when unbounded and ``-inf`` when ``P`` is empty.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    res = _lp(-c, P.H, P.h + tol, bounds=[(None, None)] * P.n)
    if res.status == 0:
        return float(c @ res.x), res.x
    if res.status == 3:
        return np.inf, None
    if res.status == 2:
        return -np.inf, None
    raise SolverFailure(f"LP ended with status {res.status}: {res.message}")


def contains(P: Polyhedron, R: Polyhedron, tol: float = DEFAULT_TOL) -> bool:
    """Decide ``R subset of P`` by one LP per row of ``P``."""
    _check_dim(P, R)
    if is_empty(R, tol):
        return True
    for a, beta in zip(P.H, P.h):
        val, _ = max_linear(R, a)
        if val == np.inf:
            logger.debug("contains: row %s unbounded over R", a)
            return False
        if val > beta + tol:
            return False
    return True


def chebyshev_radius(P: Polyhedron, cap: float = 1.0) -> float:
    """Radius of the largest ball inside ``P`` (capped); ``-inf`` if empty."""
    norms = np.linalg.norm(P.H, axis=1)
    n = P.n
    # variables (x, r); maximise r
    A = np.hstack([P.H, norms[:, None]])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    bounds = [(None, None)] * n + [(None, cap)]
    res = _lp(c, A, P.h, bounds=bounds)
    if res.status == 0:
        return float(res.x[-1])
    if res.status == 2:
        return -np.inf
    raise SolverFailure(f"Chebyshev LP ended with status {res.status}: {res.message}")


def has_interior(P: Polyhedron, tol: float = DEFAULT_TOL) -> bool:
    return chebyshev_radius(P) > tol


def bounding_box(P: Polyhedron, f: AffineMap | None = None):
    """Axis bounds of ``P`` (or of its image under ``f``); entries may be infinite.

    Returns ``(lo, hi)``.  For an empty ``P`` ``lo = +inf`` and ``hi = -inf``.
    """
    n = P.n
    A = np.eye(n) if f is None else f.A
    off = np.zeros(n) if f is None else f.b
    lo = np.empty(n)
    hi = np.empty(n)
    for k in range(n):
        hi[k] = max_linear(P, A[k])[0] + off[k]
        lo[k] = -max_linear(P, -A[k])[0] + off[k]
    return lo, hi


def is_bounded(P: Polyhedron) -> bool:
    lo, hi = bounding_box(P)
    return bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))


def axis_rows(H: np.ndarray, tol: float = 0.0):
    """For each row return ``(axis, sign, scale)`` if it is a multiple of ``+-e_k``.

    Returns ``None`` when some row is not axis-aligned.  Zero rows are reported
    with axis ``-1``.
    """
    out = []
    for row in H:
        nz = np.flatnonzero(np.abs(row) > tol)
        if nz.size == 0:
            out.append((-1, 0.0, 0.0))
        elif nz.size == 1:
            k = int(nz[0])
            out.append((k, float(np.sign(row[k])), float(abs(row[k]))))
        else:
            return None
    return out


def compact_box(P: Polyhedron) -> Polyhedron:
    """Exact tightest-bound form of an axis-aligned polyhedron.

    Rows that are positive multiples of ``+-e_k`` are replaced by the single
    tightest bound per direction.  A polyhedron with any other row is
    returned unchanged.  The result describes the same set (empty sets
    included, since the tightest bounds are kept even when they cross).
    """
    info = axis_rows(P.H)
    if info is None:
        return P
    n = P.n
    hi = np.full(n, np.inf)
    lo = np.full(n, -np.inf)
    infeasible_zero_row = False
    for (k, s, scale), rhs in zip(info, P.h):
        if k < 0:
            if rhs < 0:
                infeasible_zero_row = True
            continue
        bound = rhs / scale
        if s > 0:
            hi[k] = min(hi[k], bound)
        else:
            lo[k] = max(lo[k], -bound)
    if infeasible_zero_row:
        return P
    out = Polyhedron.box(lo, hi)
    return out


def vertices(P: Polyhedron, tol: float = 1e-9) -> np.ndarray:
    """Brute-force vertex enumeration for bounded ``P`` with ``n <= 3``.

    Every choice of ``n`` rows is solved as an equality system; solutions
    satisfying all rows are kept and deduplicated.
    """
    n = P.n
    if n > 3:
        raise PolytopeError("vertex enumeration is limited to n <= 3")
    if not is_bounded(P):
        raise PolytopeError("vertex enumeration needs a bounded polyhedron")
    pts = []
    for rows in itertools.combinations(range(P.m), n):
        Hs = P.H[list(rows)]
        if abs(np.linalg.det(Hs)) < 1e-12:
            continue
        x = np.linalg.solve(Hs, P.h[list(rows)])
        if np.all(P.H @ x <= P.h + 1e-9 * (1 + np.abs(P.h))):
            if not any(np.max(np.abs(x - q)) <= tol for q in pts):
                pts.append(x)
    return np.array(pts).reshape(-1, n)


def complement_halfspaces(P: Polyhedron):
    """Closed half-spaces whose union is the closure of ``R^n \\ P``."""
    out = []
    for a, beta in zip(P.H, P.h):
        if np.allclose(a, 0):
            continue
        out.append(Polyhedron(-a.reshape(1, -1), np.array([-beta])))
    return out


# Batched problems -----------------------------------------------------------
#
# Many small independent LPs are solved as one block-diagonal LP.  Blocks do
# not interact, so an optimum of the combined problem is optimal block-wise.


def batch_min_slack(H, h_batch, chunk: int = 20000) -> np.ndarray:
    """Smallest uniform slack ``s >= 0`` making ``H x <= h_k + s`` feasible.

    ``H`` is shared by all ``K`` blocks; ``h_batch`` has shape ``(K, m)``.
    ``{x : H x <= h_k + tol}`` is nonempty iff the returned slack is ``<= tol``.
    """
    from scipy import sparse

    H = np.asarray(H, dtype=float)
    h_batch = np.atleast_2d(np.asarray(h_batch, dtype=float))
    K, m = h_batch.shape
    n = H.shape[1]
    out = np.empty(K)
    for start in range(0, K, chunk):
        hb = h_batch[start:start + chunk]
        k = hb.shape[0]
        # block variables: x_k (n) then s_k (1)
        blk = np.hstack([H, -np.ones((m, 1))])
        A = sparse.kron(sparse.identity(k, format="csr"), sparse.csr_matrix(blk), format="csr")
        c = np.tile(np.r_[np.zeros(n), 1.0], k)
        bounds = np.tile(np.array([[-np.inf, np.inf]] * n + [[0.0, np.inf]]), (k, 1))
        res = linprog(c, A_ub=A, b_ub=hb.reshape(-1), bounds=bounds, method="highs")
        if res.status != 0:
            raise SolverFailure(f"batched slack LP ended with status {res.status}: {res.message}")
        out[start:start + k] = res.x.reshape(k, n + 1)[:, -1]
    return out


def batch_max_linear(H, h_batch, c_batch, chunk: int = 20000) -> np.ndarray:
    """``max c_k . x`` over ``{x : H x <= h_k}`` for each block ``k``.

    Unbounded blocks give ``+inf``, empty ones ``-inf``.  The combined LP is
    tried first.  If it is infeasible, the empty blocks are located with
    :func:`batch_min_slack` and the rest re-solved; any other failure falls
    back to one LP per block.
    """
    from scipy import sparse

    H = np.asarray(H, dtype=float)
    h_batch = np.atleast_2d(np.asarray(h_batch, dtype=float))
    c_batch = np.atleast_2d(np.asarray(c_batch, dtype=float))
    K, m = h_batch.shape
    n = H.shape[1]
    out = np.empty(K)

    def combined(hb, cb):
        k = hb.shape[0]
        A = sparse.kron(sparse.identity(k, format="csr"), sparse.csr_matrix(H), format="csr")
        return linprog(-cb.reshape(-1), A_ub=A, b_ub=hb.reshape(-1),
                       bounds=[(None, None)] * (n * k), method="highs")

    for start in range(0, K, chunk):
        hb = h_batch[start:start + chunk]
        cb = c_batch[start:start + chunk]
        k = hb.shape[0]
        res = combined(hb, cb)
        if res.status == 0:
            out[start:start + k] = np.einsum("ij,ij->i", cb, res.x.reshape(k, n))
            continue
        if res.status == 2:
            # blocks whose slack is positive are empty, feasibility tolerance aside
            feasible = batch_min_slack(H, hb) <= 1e-12
            vals = np.full(k, -np.inf)
            idx = np.flatnonzero(feasible)
            if idx.size:
                res2 = combined(hb[idx], cb[idx])
                if res2.status == 0:
                    vals[idx] = np.einsum("ij,ij->i", cb[idx], res2.x.reshape(idx.size, n))
                else:
                    vals[idx] = [max_linear(Polyhedron(H, hb[q]), cb[q])[0] for q in idx]
            out[start:start + k] = vals
            continue
        for q in range(k):
            out[start + q] = max_linear(Polyhedron(H, hb[q]), cb[q])[0]
    return out


class BoxPlan:
    """Vectorised version of :func:`compact_box` for a fixed ``H``.

    Built once per matrix; :meth:`apply` then maps a batch of right-hand
    sides ``(K, m)`` to the compact right-hand sides ``(K, m')``.  When ``H``
    is not axis-aligned the plan is the identity.
    """

    def __init__(self, H):
        H = np.asarray(H, dtype=float)
        self.n = H.shape[1]
        info = axis_rows(H)
        self.identity = info is None or any(k < 0 for k, _, _ in info)
        if self.identity:
            self.H = H
            self._groups = None
            return
        rows, groups = [], []
        for k in range(self.n):
            for s in (1.0, -1.0):
                members = [(r, sc) for r, (kk, ss, sc) in enumerate(info) if kk == k and ss == s]
                if not members:
                    continue
                e = np.zeros(self.n)
                e[k] = s
                rows.append(e)
                groups.append((np.array([r for r, _ in members]),
                               np.array([sc for _, sc in members])))
        self.H = np.array(rows)
        self._groups = groups

    @property
    def m(self) -> int:
        return self.H.shape[0]

    def apply(self, h_batch) -> np.ndarray:
        h_batch = np.atleast_2d(np.asarray(h_batch, dtype=float))
        if self.identity:
            return h_batch
        out = np.empty((h_batch.shape[0], len(self._groups)))
        for q, (idx, sc) in enumerate(self._groups):
            out[:, q] = np.min(h_batch[:, idx] / sc, axis=1)
        return out

    def min_slack(self, h_compact) -> np.ndarray:
        """Closed form of :func:`batch_min_slack` on compact right-hand sides.

        Only valid for a non-identity plan: each axis has at most one upper and
        one lower unit row, so the uniform slack is half the largest crossing.
        """
        if self.identity:
            raise PolytopeError("closed-form slack needs an axis-aligned plan")
        h_compact = np.atleast_2d(h_compact)
        gap = np.zeros(h_compact.shape[0])
        for k in range(self.n):
            up = np.flatnonzero((self.H[:, k] > 0))
            dn = np.flatnonzero((self.H[:, k] < 0))
            if up.size and dn.size:
                # x_k <= h_up and -x_k <= h_dn: feasible iff h_up + h_dn >= -2 s
                gap = np.maximum(gap, -(h_compact[:, up[0]] + h_compact[:, dn[0]]) / 2)
        return gap
