"""Piece-wise affine barrier certificates for sampled stochastic PWA systems."""

__version__ = "0.1.0"

from .polytope import AffineMap, Polyhedron, PolytopeError, SolverFailure  # noqa: F401
from .system import (BarrierPartition, PartitionError, PwaSystem,  # noqa: F401
                     UnsafeDescription, build_partition, partition_from_pieces)
