"""Certificates: evaluation, the safety bound, JSON I/O and independent verification."""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__
from .noise import NoiseDataset
from .polytope import (Polyhedron, batch_max_linear, bounding_box,
                       intersect, max_linear, preimage)
from .scenario import ScenarioParams, binomial_tail, decision_dimension, tightening_margin
from .synth import BarrierTheta
from .system import BarrierPartition, PwaSystem, UnsafeDescription, classify_indices, meets

logger = logging.getLogger(__name__)


class CertificateError(ValueError):
    """The certificate does not belong to the given inputs or is inconsistent."""


def safety_bound(gamma: float, c: float, T: int) -> float:
    if gamma < 0 or c < 0 or T < 1:
        raise ValueError("need gamma, c >= 0 and T >= 1")
    return max(0.0, 1.0 - (gamma + c * T))


def eval_barrier(theta: BarrierTheta, bp: BarrierPartition, X, tol: float = 1e-9) -> np.ndarray:
    """``B(x)``: max of ``u_i.x + v_i`` over pieces containing ``x``, else 0."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    inside = bp.locate_all(X, tol)
    vals = np.where(inside, theta.piece_values(X), -np.inf)
    out = vals.max(axis=1)
    return np.where(np.any(inside, axis=1), out, 0.0)


def _feed(h, arr):
    arr = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
    h.update(repr(arr.shape).encode())
    h.update(arr.tobytes())


def fingerprint(sys: PwaSystem, bp: BarrierPartition, unsafe: UnsafeDescription,
                data: NoiseDataset) -> str:
    """SHA-256 over every matrix of the problem instance and the samples."""
    h = hashlib.sha256()
    for P in sys.regions:
        _feed(h, P.H), _feed(h, P.h)
    for f in sys.dynamics:
        _feed(h, f.A), _feed(h, f.b)
    for P in (sys.initial_set, sys.safe_set, *unsafe.pieces, *bp.pieces):
        _feed(h, P.H), _feed(h, P.h)
    _feed(h, np.asarray(bp.parent))
    h.update(f"T={int(sys.horizon)}".encode())
    _feed(h, data.samples)
    return h.hexdigest()


@dataclass
class Certificate:
    theta: BarrierTheta
    gamma: float
    c: float
    T: int
    scenario: ScenarioParams
    pieces: tuple
    parent: tuple
    fingerprint: str
    seed: int | None = None
    objective: float = field(init=False)
    safety_lower_bound: float = field(init=False)
    notes: dict = field(default_factory=dict)
    timings: dict | None = None

    def __post_init__(self):
        # no validation here: a tampered certificate must reach the verifier
        self.objective = float(self.gamma + self.c * self.T)
        self.safety_lower_bound = max(0.0, 1.0 - self.objective)

    @classmethod
    def from_result(cls, result, problem, fp: str, seed=None, notes=None):
        return cls(theta=result.theta, gamma=result.gamma, c=result.c,
                   T=int(problem.sys.horizon), scenario=problem.params,
                   pieces=problem.bp.pieces, parent=problem.bp.parent, fingerprint=fp,
                   seed=seed, notes=dict(notes or {}),
                   timings={"build_s": result.build_time, "solve_s": result.solve_time})

    def to_dict(self, include_timings: bool = False) -> dict:
        result = {"safety_lower_bound": self.safety_lower_bound, "objective": self.objective}
        if include_timings and self.timings is not None:
            result["timings"] = dict(self.timings)
        meta = {"tool_version": __version__, "fingerprint": self.fingerprint, "seed": self.seed}
        if self.notes:
            meta["notes"] = self.notes
        return {
            "meta": meta,
            "scenario": self.scenario.to_dict(),
            "barrier": {
                "pieces": [{"H": P.H.tolist(), "h": P.h.tolist(),
                            "u": self.theta.u[k].tolist(), "v": float(self.theta.v[k]),
                            "parent": int(self.parent[k])}
                           for k, P in enumerate(self.pieces)],
                "gamma": self.gamma, "c": self.c, "T": self.T,
            },
            "result": result,
        }

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(self.to_dict(include_timings), indent=1) + "\n"

    def save(self, path, include_timings: bool = False):
        with open(path, "w") as fh:
            fh.write(self.to_json(include_timings))

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        try:
            bar, sc, meta = d["barrier"], d["scenario"], d["meta"]
            pieces = tuple(Polyhedron(p["H"], p["h"]) for p in bar["pieces"])
            theta = BarrierTheta([p["u"] for p in bar["pieces"]], [p["v"] for p in bar["pieces"]])
            params = ScenarioParams(N=int(sc["N"]), eps=float(sc["eps"]), d=int(sc["d"]),
                                    beta=float(sc["beta"]), M=float(sc["M"]),
                                    delta=float(sc["delta"]))
            cert = cls(theta=theta, gamma=float(bar["gamma"]), c=float(bar["c"]),
                       T=int(bar["T"]), scenario=params, pieces=pieces,
                       parent=tuple(int(p["parent"]) for p in bar["pieces"]),
                       fingerprint=meta["fingerprint"], seed=meta.get("seed"),
                       notes=meta.get("notes", {}), timings=d.get("result", {}).get("timings"))
        except (KeyError, TypeError) as exc:
            raise CertificateError(f"malformed certificate: missing {exc}") from None
        stated = d.get("result", {})
        for key in ("safety_lower_bound", "objective"):
            if key in stated and abs(float(stated[key]) - getattr(cert, key)) > 1e-12:
                raise CertificateError(
                    f"stated {key}={stated[key]} does not follow from gamma, c and T "
                    f"({getattr(cert, key)})")
        return cert

    @classmethod
    def load(cls, path) -> "Certificate":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# verification


@dataclass
class VerificationReport:
    tol: float
    worst: dict
    where: dict
    checked: dict
    passed: bool
    elapsed: float = 0.0

    def to_dict(self) -> dict:
        return {"tol": self.tol, "passed": self.passed,
                "families": {k: {"worst_violation": self.worst[k], "at": self.where[k],
                                 "subproblems": self.checked[k]} for k in self.worst},
                "elapsed_s": self.elapsed}


def _record(report, fam, vals, labels):
    vals = np.asarray(vals, dtype=float)
    report["checked"][fam] += vals.size
    if vals.size == 0:
        return
    k = int(np.argmax(vals))
    if vals[k] > report["worst"][fam]:
        report["worst"][fam] = float(vals[k])
        report["where"][fam] = labels(k)


def verify_certificate(cert: Certificate, sys: PwaSystem, bp: BarrierPartition,
                       unsafe: UnsafeDescription, data: NoiseDataset, tol: float = 1e-6,
                       empty_tol: float = 1e-9, check_fingerprint: bool = True,
                       paper_literal_martingale: bool = False) -> VerificationReport:
    """Re-derive the worst violation of every certificate condition by fresh LPs.

    Nothing from the synthesis LP is reused: index sets, preimages and their
    emptiness are recomputed, and every maximum is a primal LP.
    """
    t0 = time.perf_counter()
    if check_fingerprint:
        fp = fingerprint(sys, bp, unsafe, data)
        if fp != cert.fingerprint:
            raise CertificateError("certificate fingerprint does not match the inputs")
    sc = cert.scenario
    if sc.d != decision_dimension(bp.size, sys.n):
        raise CertificateError("scenario dimension d does not match the partition")
    ref = binomial_tail(sc.N, sc.eps, sc.d)
    if abs(ref - sc.beta) > 1e-12 * max(ref, 1e-300):
        raise CertificateError("beta is inconsistent with (N, eps, d)")
    if sc.delta < tightening_margin(sc.eps, sc.M) - 1e-12:
        raise CertificateError("delta is below the required margin")
    if data.N != sc.N:
        raise CertificateError(f"certificate was built from {sc.N} samples, got {data.N}")
    if int(sys.horizon) != cert.T:
        raise CertificateError("horizon mismatch")

    th, M = cert.theta, sc.M
    fams = ("NONNEG", "UPPER", "INIT", "UNSAFE", "MARTINGALE")
    report = {"worst": {f: -np.inf for f in fams}, "where": {f: None for f in fams},
              "checked": {f: 0 for f in fams}}
    I_s, I_u, I_0 = classify_indices(bp, sys, unsafe, empty_tol)

    def piece_max(P, a):
        return max_linear(P, a)[0]

    for i, P in enumerate(bp.pieces):
        _record(report, "NONNEG", [piece_max(P, -th.u[i]) - th.v[i]], lambda k, i=i: [i])
        _record(report, "UPPER", [piece_max(P, th.u[i]) + th.v[i] - M], lambda k, i=i: [i])
    for i in sorted(I_0):
        P = intersect(bp.pieces[i], sys.initial_set)
        _record(report, "INIT", [piece_max(P, th.u[i]) + th.v[i] - cert.gamma],
                lambda k, i=i: [i])
    for i in sorted(I_u):
        for q, Xu in enumerate(unsafe.pieces):
            if not meets(bp.pieces[i], Xu, empty_tol):
                continue
            P = intersect(bp.pieces[i], Xu)
            _record(report, "UNSAFE", [1.0 - (th.v[i] - piece_max(P, -th.u[i]))],
                    lambda k, i=i, q=q: [i, q])

    W = data.samples
    boxes = [bounding_box(R) for R in bp.pieces]
    for i in sorted(I_s):
        f = sys.dynamics[bp.parent[i]]
        S = bp.pieces[i] if paper_literal_martingale else intersect(bp.pieces[i], sys.safe_set)
        lo_s, hi_s = bounding_box(S, f)
        if np.any(lo_s > hi_s):
            continue
        for j, R in enumerate(bp.pieces):
            lo_r, hi_r = boxes[j]
            with np.errstate(invalid="ignore"):
                gap = np.maximum(lo_s + W - hi_r, lo_r - (hi_s + W))
            cand = np.flatnonzero(~np.any(gap > 1e-6, axis=1))
            if cand.size == 0:
                continue
            base = preimage(S, f, np.zeros(sys.n), R)
            # rows of R shift with the noise: h_Q = [h_S; h_R - H_R (b + w)]
            h_batch = np.tile(base.h, (cand.size, 1))
            h_batch[:, S.m:] -= W[cand] @ R.H.T
            # nonempty means {H x <= h + tol} is nonempty, as in is_empty
            a = f.A.T @ th.u[j] - th.u[i]
            sup = batch_max_linear(base.H, h_batch + empty_tol,
                                   np.broadcast_to(a, (cand.size, sys.n)))
            keep = sup > -np.inf
            if not np.any(keep):
                continue
            cand, sup = cand[keep], sup[keep]
            g = sup + (f.b + W[cand]) @ th.u[j] + th.v[j] - th.v[i] - cert.c + sc.delta
            _record(report, "MARTINGALE", g, lambda k, i=i, j=j, cand=cand: [i, j, int(cand[k])])

    worst = {f: (0.0 if report["checked"][f] == 0 else v) for f, v in report["worst"].items()}
    passed = all(v <= tol for v in worst.values())
    return VerificationReport(tol, worst, report["where"], report["checked"], passed,
                              time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# inner approximation oracle


def inner_approx_oracle(num_cases: int = 500, seed: int = 42, M: float = 1.0,
                        max_outcomes: int = 8, dim_z: int = 3) -> dict:
    """Random finite-support instances of the tightened chance constraint.

    Each case draws outcome probabilities, an affine ``g(z, w) in [0, M]``, a
    candidate ``z``, a violation level ``eps`` and ``delta = eps M / (1-eps)``,
    and a threshold ``h`` at which ``P{g + delta <= h} >= 1 - eps`` holds
    (sometimes barely).  ``E[g] <= h`` is then checked in exact rational
    arithmetic over all outcomes.
    """
    rng = np.random.default_rng(seed)
    Mq = Fraction(M)
    counter, premise = [], 0
    for case in range(num_cases):
        K = int(rng.integers(2, max_outcomes + 1))
        p = rng.dirichlet(np.ones(K))
        pq = [Fraction(x) for x in p]
        pq[-1] = 1 - sum(pq[:-1])
        if pq[-1] < 0:
            continue
        # g_k(z) = M (a_k . z + b_k) with a_k, b_k >= 0 and sum <= 1, z in [0,1]^q
        raw = rng.random((K, dim_z + 1))
        raw /= raw.sum(axis=1, keepdims=True) * rng.uniform(1.0, 2.0, (K, 1))
        z = rng.random(dim_z)
        g = [Mq * (sum(Fraction(a) * Fraction(zz) for a, zz in zip(raw[k, :-1], z))
                   + Fraction(raw[k, -1])) for k in range(K)]
        eps = Fraction(float(rng.uniform(0.0, 0.5)))
        delta = eps * Mq / (1 - eps)
        # smallest h meeting the premise, then a random nonnegative lift
        order = sorted(range(K), key=lambda k: g[k])
        mass, h = Fraction(0), None
        for k in order:
            mass += pq[k]
            if mass >= 1 - eps:
                h = g[k] + delta
                break
        if rng.random() < 0.5:
            h += Fraction(float(rng.exponential(0.1)))
        sat = sum(pq[k] for k in range(K) if g[k] + delta <= h)
        if sat < 1 - eps:
            continue
        premise += 1
        expectation = sum(pq[k] * g[k] for k in range(K))
        if expectation > h:
            counter.append({"case": case, "E[g]": float(expectation), "h": float(h),
                            "eps": float(eps)})
    return {"cases": num_cases, "premise_held": premise, "counterexamples": counter}
