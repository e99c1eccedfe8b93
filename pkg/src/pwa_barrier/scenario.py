"""Scenario-approach bookkeeping: confidence, sample size, violation level, margin."""
from __future__ import annotations

import math
from dataclasses import dataclass

MAX_SAMPLES = 10**9


class ScenarioError(ValueError):
    pass


def binomial_tail(N: int, eps: float, d: int) -> float:
    """``sum_{i<d} C(N,i) eps^i (1-eps)^(N-i)``, i.e. ``P[Bin(N, eps) <= d-1]``.

    Terms are accumulated in log space so that large ``N`` does not overflow.
    """
    if N < 1 or d < 1:
        raise ScenarioError("N and d must be positive")
    if not 0.0 <= eps <= 1.0:
        raise ScenarioError("eps must lie in [0, 1]")
    if d - 1 >= N:
        return 1.0
    if eps == 0.0:
        return 1.0
    if eps == 1.0:
        return 0.0
    le, l1e = math.log(eps), math.log1p(-eps)
    lgN = math.lgamma(N + 1)
    logs = [lgN - math.lgamma(i + 1) - math.lgamma(N - i + 1) + i * le + (N - i) * l1e
            for i in range(d)]
    top = max(logs)
    if top == -math.inf:
        return 0.0
    s = math.fsum(math.exp(v - top) for v in logs)
    return min(1.0, max(0.0, math.exp(top + math.log(s))))


def required_samples(eps: float, d: int, beta_target: float) -> int:
    """Smallest ``N`` with ``binomial_tail(N, eps, d) <= beta_target``."""
    if not 0 < eps < 1:
        raise ScenarioError("eps must lie in (0, 1)")
    if not 0 < beta_target < 1:
        raise ScenarioError("beta must lie in (0, 1)")
    hi = max(d, 1)
    while binomial_tail(hi, eps, d) > beta_target:
        if hi > MAX_SAMPLES:
            raise ScenarioError(f"more than {MAX_SAMPLES} samples would be needed")
        hi *= 2
    lo = max(d - 1, 0)  # tail is 1 for N <= d-1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if mid >= 1 and binomial_tail(mid, eps, d) <= beta_target:
            hi = mid
        else:
            lo = mid
    assert binomial_tail(hi, eps, d) <= beta_target
    assert hi == 1 or binomial_tail(hi - 1, eps, d) > beta_target
    return hi


def max_violation_level(N: int, d: int, beta_target: float, tol: float = 1e-10) -> float:
    """Smallest ``eps`` with ``binomial_tail(N, eps, d) <= beta_target`` (bisection)."""
    if N <= d:
        raise ScenarioError(f"N={N} samples cannot certify d={d} decision variables")
    if not 0 < beta_target < 1:
        raise ScenarioError("beta must lie in (0, 1)")
    # the tail decreases in eps, from 1 at eps=0 to 0 at eps=1
    lo, hi = 0.0, 1.0
    if binomial_tail(N, 1.0 - 1e-15, d) > beta_target:
        raise ScenarioError("no eps < 1 reaches the requested confidence")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if binomial_tail(N, mid, d) <= beta_target:
            hi = mid
        else:
            lo = mid
    return hi


def tightening_margin(eps: float, M: float) -> float:
    """Smallest admissible margin ``eps M / (1 - eps)``."""
    if not 0 <= eps < 1:
        raise ScenarioError("eps must lie in [0, 1)")
    if M < 1:
        raise ScenarioError("M must be at least 1")
    return eps * M / (1.0 - eps)


def decision_dimension(n_pieces: int, n: int) -> int:
    """Number of scenario decision variables: barrier parameters plus gamma and c."""
    return n_pieces * (n + 1) + 2


@dataclass(frozen=True)
class ScenarioParams:
    N: int
    eps: float
    d: int
    beta: float
    M: float = 1.0
    delta: float | None = None

    def __post_init__(self):
        if self.delta is None:
            object.__setattr__(self, "delta", tightening_margin(self.eps, self.M))
        if self.M < 1:
            raise ScenarioError("M must be at least 1")
        if self.delta < tightening_margin(self.eps, self.M) - 1e-12:
            raise ScenarioError("delta is below eps M / (1 - eps)")
        ref = binomial_tail(self.N, self.eps, self.d)
        if abs(self.beta - ref) > 1e-12 * max(ref, 1e-300):
            raise ScenarioError(f"beta={self.beta} inconsistent with (N, eps, d): {ref}")

    @classmethod
    def resolve(cls, d: int, *, eps=None, N=None, beta=None, M: float = 1.0,
                delta: float | None = None) -> "ScenarioParams":
        """Fill in the missing member of ``(eps, N, beta)``; exactly two must be given."""
        given = [k for k, v in (("eps", eps), ("N", N), ("beta", beta)) if v is not None]
        if len(given) != 2:
            raise ScenarioError(
                f"exactly two of eps, N, beta must be given (got {given or 'none'})")
        if N is None:
            N = required_samples(eps, d, beta)
        elif eps is None:
            eps = max_violation_level(int(N), d, beta)
        N = int(N)
        return cls(N=N, eps=float(eps), d=d, beta=binomial_tail(N, eps, d), M=M, delta=delta)

    def to_dict(self) -> dict:
        return {"N": self.N, "eps": self.eps, "beta": self.beta, "delta": self.delta,
                "M": self.M, "d": self.d}


def sample_curve(eps: float, d: int, betas, saa_constant: float = 1.0):
    """Rows ``(beta, N_scenario, N_saa_reference)``; the reference scales as ``1/beta``."""
    rows = []
    for b in betas:
        rows.append((b, required_samples(eps, d, b), math.ceil(saa_constant / b)))
    return rows
