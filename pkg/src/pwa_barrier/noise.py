"""Noise sample sets: CSV ingestion and seeded synthetic generators."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class NoiseDataset:
    samples: np.ndarray
    source: str = "memory"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.array(self.samples, dtype=float, copy=True)
        if s.ndim == 1:
            s = s.reshape(-1, 1)
        if s.ndim != 2 or s.shape[0] == 0:
            raise ValueError("noise dataset must be a non-empty (N, n) array")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    def head(self, N: int) -> "NoiseDataset":
        if N > self.N:
            raise ValueError(f"requested {N} samples but only {self.N} are available")
        return NoiseDataset(self.samples[:N], self.source, dict(self.meta, N=N))


def load_csv(path, n: int | None = None) -> NoiseDataset:
    """One sample per line, comma separated; lines starting with '#' are skipped."""
    path = Path(path)
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no samples")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: rows have differing widths {sorted(widths)}")
    arr = np.array(rows)
    if n is not None and arr.shape[1] != n:
        raise ValueError(f"{path}: samples have {arr.shape[1]} fields, system has n={n}")
    return NoiseDataset(arr, source=str(path), meta={"file": str(path)})


def save_csv(ds: NoiseDataset, path):
    with open(path, "w") as fh:
        fh.write(f"# {ds.N} samples, n={ds.n}\n")
        for row in ds.samples:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def gaussian(sigma, N: int, seed: int) -> NoiseDataset:
    """``N`` zero-mean Gaussian draws with per-axis standard deviations ``sigma``."""
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    rng = np.random.default_rng(seed)
    s = rng.standard_normal((N, sigma.size)) * sigma
    return NoiseDataset(s, source="gaussian",
                        meta={"generator": "gaussian", "sigma": sigma.tolist(), "seed": seed})


def from_spec(spec: dict, N: int, seed: int) -> NoiseDataset:
    kind = spec.get("type", "gaussian")
    if kind == "gaussian":
        return gaussian(spec["sigma"], N, seed)
    if kind == "zero":
        return NoiseDataset(np.zeros((N, int(spec["n"]))), source="zero",
                            meta={"generator": "zero"})
    raise ValueError(f"unknown noise generator {kind!r}")
