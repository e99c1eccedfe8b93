"""Piece-wise affine stochastic systems and the barrier partition."""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .polytope import (AffineMap, Polyhedron, PolytopeError, compact_box,
                       complement_halfspaces, contains, has_interior, intersect,
                       is_empty)

logger = logging.getLogger(__name__)


class PartitionError(ValueError):
    """The barrier partition is not aligned with the dynamics regions."""


@dataclass(frozen=True, eq=False)
class PwaSystem:
    """``x(k+1) = A_i x(k) + b_i + noise`` for ``x(k)`` in region ``i``."""

    regions: tuple
    dynamics: tuple
    initial_set: Polyhedron
    safe_set: Polyhedron
    horizon: int = 10
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "dynamics", tuple(self.dynamics))
        if len(self.regions) < 1 or len(self.regions) != len(self.dynamics):
            raise PolytopeError("need one affine map per region and at least one region")
        n = self.regions[0].n
        for p in (*self.regions, self.initial_set, self.safe_set):
            if p.n != n:
                raise PolytopeError("all sets must live in the same dimension")
        for f in self.dynamics:
            if f.n != n:
                raise PolytopeError("dynamics dimension does not match the regions")
        if int(self.horizon) < 1:
            raise ValueError("horizon must be a positive integer")

    @property
    def n(self) -> int:
        return self.regions[0].n

    def validate(self, tol: float = 1e-9):
        """Check ``X0 subset Xs`` and that region interiors do not overlap."""
        if not contains(self.safe_set, self.initial_set, tol):
            raise PolytopeError("initial set is not contained in the safe set")
        for i, j in itertools.combinations(range(len(self.regions)), 2):
            if has_interior(intersect(self.regions[i], self.regions[j]), tol):
                raise PolytopeError(f"regions {i} and {j} overlap with positive volume")

    def locate(self, X, tol: float = 1e-9) -> np.ndarray:
        """Region index of each row of ``X`` (lowest index wins), ``-1`` if none."""
        X = np.atleast_2d(X)
        out = np.full(X.shape[0], -1, dtype=np.int64)
        for idx in range(len(self.regions) - 1, -1, -1):
            out[self.regions[idx].contains_points(X, tol)] = idx
        return out

    def step(self, X, tol: float = 1e-9):
        """Noise-free successor of each row of ``X``; also returns the region index."""
        X = np.atleast_2d(X)
        reg = self.locate(X, tol)
        Y = np.full_like(X, np.nan, dtype=float)
        for idx, f in enumerate(self.dynamics):
            sel = reg == idx
            if np.any(sel):
                Y[sel] = f(X[sel])
        return Y, reg

    def to_dict(self) -> dict:
        return {"regions": [r.to_dict() for r in self.regions],
                "dynamics": [f.to_dict() for f in self.dynamics],
                "initial_set": self.initial_set.to_dict(),
                "safe_set": self.safe_set.to_dict(),
                "horizon": int(self.horizon)}


@dataclass(frozen=True, eq=False)
class UnsafeDescription:
    """Polyhedra whose union stands for ``X \\ Xs`` inside the modelled domain."""

    pieces: tuple

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))

    @classmethod
    def complement_of(cls, safe: Polyhedron) -> "UnsafeDescription":
        """One closed half-space per row of the safe set."""
        return cls(tuple(complement_halfspaces(safe)))

    def validate(self, safe: Polyhedron, tol: float = 1e-9):
        for k, p in enumerate(self.pieces):
            if has_interior(intersect(p, safe), tol):
                raise PolytopeError(f"unsafe piece {k} overlaps the safe set's interior")

    def to_dict(self) -> dict:
        return {"pieces": [p.to_dict() for p in self.pieces]}


def meets(P: Polyhedron, S: Polyhedron, tol: float = 1e-9) -> bool:
    """Whether ``P`` and ``S`` share more than a measure-zero boundary.

    When ``S`` itself has no interior (a point, a segment) plain non-emptiness
    of the intersection is used instead.
    """
    if has_interior(S, tol):
        return has_interior(intersect(P, S), tol)
    return not is_empty(intersect(P, S), tol)


@dataclass(frozen=True, eq=False)
class BarrierPartition:
    pieces: tuple
    parent: tuple
    index_safe: frozenset = field(default_factory=frozenset)
    index_unsafe: frozenset = field(default_factory=frozenset)
    index_initial: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        object.__setattr__(self, "parent", tuple(int(p) for p in self.parent))
        if len(self.pieces) != len(self.parent):
            raise PartitionError("every piece needs a parent region")
        for name in ("index_safe", "index_unsafe", "index_initial"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))

    @property
    def size(self) -> int:
        return len(self.pieces)

    @property
    def n(self) -> int:
        return self.pieces[0].n

    def locate_all(self, X, tol: float = 1e-9) -> np.ndarray:
        """Boolean matrix ``(len(X), size)``: which pieces contain each point."""
        X = np.atleast_2d(X)
        return np.column_stack([p.contains_points(X, tol) for p in self.pieces])

    def to_dict(self) -> dict:
        return {"pieces": [p.to_dict() for p in self.pieces],
                "parent": list(self.parent),
                "index_safe": sorted(self.index_safe),
                "index_unsafe": sorted(self.index_unsafe),
                "index_initial": sorted(self.index_initial)}


def classify_indices(bp: BarrierPartition, sys: PwaSystem, unsafe: UnsafeDescription,
                     tol: float = 1e-9):
    """Return ``(I_s, I_u, I_0)``: pieces meeting the safe, unsafe and initial sets."""
    I_s, I_u, I_0 = set(), set(), set()
    for i, piece in enumerate(bp.pieces):
        if meets(piece, sys.safe_set, tol):
            I_s.add(i)
        if any(meets(piece, u, tol) for u in unsafe.pieces):
            I_u.add(i)
        if meets(piece, sys.initial_set, tol):
            I_0.add(i)
    return frozenset(I_s), frozenset(I_u), frozenset(I_0)


def _parent_of(cell: Polyhedron, sys: PwaSystem, tol: float):
    hits = [j for j, q in enumerate(sys.regions) if has_interior(intersect(cell, q), tol)]
    if len(hits) == 1 and contains(sys.regions[hits[0]], cell, tol):
        return hits[0], hits
    return None, hits


def partition_from_pieces(sys: PwaSystem, pieces, unsafe: UnsafeDescription | None = None,
                          tol: float = 1e-9) -> BarrierPartition:
    """Attach parents and index sets to an explicit list of pieces."""
    unsafe = unsafe or UnsafeDescription.complement_of(sys.safe_set)
    parents = []
    for k, p in enumerate(pieces):
        j, hits = _parent_of(p, sys, tol)
        if j is None:
            raise PartitionError(
                f"piece {k} (H={p.H.tolist()}, h={p.h.tolist()}) is not inside exactly "
                f"one dynamics region (touches regions {hits})")
        parents.append(j)
    missing = set(range(len(sys.regions))) - set(parents)
    if missing:
        warnings.warn(f"dynamics regions {sorted(missing)} hold no barrier piece", stacklevel=2)
    bp = BarrierPartition(pieces, parents)
    I_s, I_u, I_0 = classify_indices(bp, sys, unsafe, tol)
    return BarrierPartition(pieces, parents, I_s, I_u, I_0)


def grid_cells(breakpoints, unbounded_ends: bool = False):
    """Axis-aligned cells of a rectilinear grid, axis 0 varying slowest."""
    axes = []
    for k, b in enumerate(breakpoints):
        b = np.asarray(b, dtype=float)
        if b.size < 2 and not unbounded_ends:
            raise PartitionError(f"axis {k} needs at least two breakpoints")
        if np.any(np.diff(b) <= 0):
            raise PartitionError(f"breakpoints on axis {k} must be strictly increasing")
        iv = list(zip(b[:-1], b[1:]))
        if unbounded_ends:
            iv = [(-np.inf, b[0])] + iv + [(b[-1], np.inf)]
        axes.append(iv)
    cells = []
    for combo in itertools.product(*axes):
        lo = [c[0] for c in combo]
        hi = [c[1] for c in combo]
        cells.append(Polyhedron.box(lo, hi))
    return cells


def build_partition(sys: PwaSystem, breakpoints, unsafe: UnsafeDescription | None = None,
                    unbounded_ends: bool = False, split_cells: bool = False,
                    tol: float = 1e-9) -> BarrierPartition:
    """Grid partition aligned with the dynamics regions.

    A cell straddling a region boundary is an error unless ``split_cells`` is
    set, in which case it is cut along the region facets (with a warning).
    """
    if len(breakpoints) != sys.n:
        raise PartitionError(f"need breakpoints for {sys.n} axes, got {len(breakpoints)}")
    pieces = []
    for cell in grid_cells(breakpoints, unbounded_ends):
        if not has_interior(cell, tol):
            continue
        j, hits = _parent_of(cell, sys, tol)
        if j is not None:
            pieces.append(cell)
            continue
        if not hits:
            raise PartitionError(f"grid cell {cell.to_dict()} lies in no dynamics region")
        if not split_cells:
            raise PartitionError(
                f"grid cell {cell.to_dict()} straddles dynamics regions {hits}; "
                "add breakpoints on the region boundaries or enable cell splitting")
        warnings.warn(f"splitting grid cell {cell.to_dict()} along regions {hits}",
                      stacklevel=2)
        for q in hits:
            pieces.append(compact_box(intersect(cell, sys.regions[q])))
    return partition_from_pieces(sys, pieces, unsafe, tol)
