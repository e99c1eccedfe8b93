"""Monte Carlo rollouts of the PWA system for empirical safety estimates."""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .polytope import Polyhedron, bounding_box
from .system import PwaSystem

CHUNK = 65536


class DomainError(RuntimeError):
    """A safe state lies in no dynamics region."""


@dataclass
class TrajectoryBatch:
    x0: np.ndarray          # (starts, n)
    safe: np.ndarray        # (starts, trials) bool
    exit_time: np.ndarray   # (starts, trials), -1 while safe
    T: int
    seed: int

    @property
    def trials(self) -> int:
        return self.safe.shape[1]


def gaussian_sampler(sigma):
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))

    def draw(rng, size):
        return rng.standard_normal((size, sigma.size)) * sigma
    return draw


def pool_sampler(pool):
    pool = np.atleast_2d(np.asarray(pool, dtype=float))

    def draw(rng, size):
        return pool[rng.integers(0, pool.shape[0], size)]
    return draw


def sampler_from_spec(spec: dict, n: int):
    kind = spec.get("type", "gaussian")
    if kind == "gaussian":
        return gaussian_sampler(spec["sigma"])
    if kind == "zero":
        return lambda rng, size: np.zeros((size, n))
    raise ValueError(f"unknown noise generator {kind!r}")


def start_points(X0: Polyhedron, strategy="grid", count: int = 5, seed: int = 0) -> np.ndarray:
    """Initial states: a ``count``-per-axis grid over X0, uniform draws, or a list."""
    if not isinstance(strategy, str):
        return np.atleast_2d(np.asarray(strategy, dtype=float))
    lo, hi = bounding_box(X0)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("initial set must be bounded to place start points")
    if strategy == "grid":
        axes = [np.linspace(a, b, count) if b > a else np.array([a]) for a, b in zip(lo, hi)]
        pts = np.array(list(itertools.product(*axes)))
        return pts[X0.contains_points(pts)]
    if strategy == "uniform":
        rng = np.random.default_rng(seed)
        out = []
        while sum(len(o) for o in out) < count:
            cand = rng.uniform(lo, hi, (4 * count, lo.size))
            out.append(cand[X0.contains_points(cand)])
        return np.vstack(out)[:count]
    raise ValueError(f"unknown start strategy {strategy!r}")


def _rollout(sys: PwaSystem, x0, draw, n_traj: int, T: int, rng):
    X = np.tile(x0, (n_traj, 1))
    alive = sys.safe_set.contains_points(X)
    exit_time = np.where(alive, -1, 0)
    for k in range(1, T + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        Y, reg = sys.step(X[idx])
        if np.any(reg < 0):
            bad = X[idx][reg < 0][0]
            raise DomainError(f"state {bad.tolist()} is safe but in no dynamics region")
        Y += draw(rng, idx.size)
        X[idx] = Y
        out = ~sys.safe_set.contains_points(Y)
        exit_time[idx[out]] = k
        alive[idx[out]] = False
    return exit_time


def simulate(sys: PwaSystem, draw, x0, trials: int, T: int | None = None, seed: int = 0,
             workers: int = 1) -> TrajectoryBatch:
    """Roll out ``trials`` trajectories from each start in ``x0``.

    Trajectories are split into fixed-size chunks, each with its own Philox
    stream spawned from ``seed``, so results do not depend on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    T = int(sys.horizon if T is None else T)
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    chunks = [(s, lo, min(lo + CHUNK, trials))
              for s in range(x0.shape[0]) for lo in range(0, trials, CHUNK)]
    seqs = np.random.SeedSequence(seed).spawn(len(chunks))

    def run(q):
        s, lo, hi = chunks[q]
        rng = np.random.Generator(np.random.Philox(seqs[q]))
        return _rollout(sys, x0[s], draw, hi - lo, T, rng)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, range(len(chunks))))
    else:
        parts = [run(q) for q in range(len(chunks))]
    exit_time = np.empty((x0.shape[0], trials), dtype=np.int64)
    for (s, lo, hi), part in zip(chunks, parts):
        exit_time[s, lo:hi] = part
    return TrajectoryBatch(x0, exit_time < 0, exit_time, T, seed)


def clopper_pearson(k: int, n: int, level: float = 0.95):
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def empirical_safety(batch: TrajectoryBatch, level: float = 0.95) -> dict:
    """Safe fraction per start, the worst start and the average over starts."""
    n = batch.trials
    safe_counts = batch.safe.sum(axis=1)
    per_start = []
    for s, k in enumerate(safe_counts):
        lo, hi = clopper_pearson(int(k), n, level)
        per_start.append({"x0": batch.x0[s].tolist(), "estimate": float(k / n), "interval": [lo, hi]})
    worst = int(np.argmin(safe_counts))
    total = int(safe_counts.sum())
    return {
        "trials_per_start": n,
        "starts": len(per_start),
        "per_start": per_start,
        "min_estimate": per_start[worst]["estimate"],
        "min_interval": per_start[worst]["interval"],
        "min_start": per_start[worst]["x0"],
        "mean_estimate": total / (n * len(per_start)),
        "mean_interval": list(clopper_pearson(total, n * len(per_start), level)),
    }


def soundness_check(summary: dict, objective: float) -> dict:
    """Empirical unsafe fraction at the worst start against ``gamma + c T`` plus 3 sigma."""
    p_hat = 1.0 - summary["min_estimate"]
    n = summary["trials_per_start"]
    margin = 3.0 * np.sqrt(p_hat * (1.0 - p_hat) / n)
    limit = objective + margin
    return {"unsafe_fraction": p_hat, "bound": objective, "margin": float(margin),
            "passed": bool(p_hat <= limit)}
