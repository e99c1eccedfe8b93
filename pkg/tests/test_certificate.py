import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pwa_barrier.benchmarks import certify, martingale
from pwa_barrier.certificate import (Certificate, CertificateError, eval_barrier,
                                     fingerprint, inner_approx_oracle, safety_bound,
                                     verify_certificate)
from pwa_barrier.noise import NoiseDataset, gaussian
from pwa_barrier.polytope import AffineMap, vertices
from pwa_barrier.scenario import ScenarioParams, binomial_tail, decision_dimension
from pwa_barrier.synth import BarrierTheta
from pwa_barrier.system import PwaSystem, UnsafeDescription, build_partition, partition_from_pieces

from conftest import box, line_system


def params_for(bp, n, N, eps=0.01):
    d = decision_dimension(bp.size, n)
    return ScenarioParams(N=N, eps=eps, d=d, beta=binomial_tail(N, eps, d))


# bound and evaluation ------------------------------------------------------------

def test_safety_bound_examples():
    assert safety_bound(0.1, 0.02, 10) == pytest.approx(0.7)
    assert safety_bound(0.0, 0.0, 7) == 1.0
    assert safety_bound(0.9, 0.05, 10) == 0.0


@given(st.floats(0, 1), st.floats(0, 0.2), st.integers(1, 30), st.floats(0, 0.1))
def test_safety_bound_monotone(gamma, c, T, bump):
    z = safety_bound(gamma, c, T)
    assert 0.0 <= z <= 1.0
    assert safety_bound(gamma + bump, c, T) <= z
    assert safety_bound(gamma, c + bump, T) <= z
    assert safety_bound(gamma, c, T + 1) <= z


def test_eval_barrier_cases():
    sys = line_system(domain=(-2.0, 2.0))
    bp = build_partition(sys, [[-2.0, 0.0, 2.0]])
    th = BarrierTheta([[-1.0], [2.0]], [0.5, 0.25])
    B = eval_barrier(th, bp, [[-1.0], [1.0], [0.0], [3.0]])
    assert B[0] == pytest.approx(1.5)
    assert B[1] == pytest.approx(2.25)
    assert B[2] == pytest.approx(0.5)  # shared facet: max(0.5, 0.25)
    assert B[3] == 0.0


# hand-built certificate ----------------------------------------------------------

def abs_barrier(c_shift=0.0):
    """B = |x| / 2.5 on [-2.5, 2.5], 1 outside, identity dynamics, noise {-0.1, 0, 0.1}."""
    sys = line_system()
    bp = partition_from_pieces(sys, [box([-np.inf], [-2.5]), box([-2.5], [0.0]),
                                     box([0.0], [2.5]), box([2.5], [np.inf])])
    unsafe = UnsafeDescription.complement_of(sys.safe_set)
    data = NoiseDataset(np.array([-0.1, 0.0, 0.1]))
    params = params_for(bp, 1, 3)
    theta = BarrierTheta([[0.0], [-0.4], [0.4], [0.0]], [1.0, 0.0, 0.0, 1.0])
    # worst one-step increase is 0.1 / 2.5 = 0.04 (inside, or crossing into |x| >= 2.5)
    c = 0.04 + params.delta + c_shift
    cert = Certificate(theta, 0.2, c, 10, params, bp.pieces, bp.parent,
                       fingerprint(sys, bp, unsafe, data))
    return cert, sys, bp, unsafe, data


def test_hand_built_barrier_passes():
    cert, *ctx = abs_barrier()
    rep = verify_certificate(cert, *ctx)
    assert rep.passed
    assert rep.worst["NONNEG"] == pytest.approx(0.0, abs=1e-8)
    assert rep.worst["UPPER"] == pytest.approx(0.0, abs=1e-8)
    assert rep.worst["INIT"] == pytest.approx(0.0, abs=1e-8)   # 0.5 / 2.5 - 0.2
    assert rep.worst["UNSAFE"] == pytest.approx(0.0, abs=1e-8)
    assert rep.worst["MARTINGALE"] == pytest.approx(0.0, abs=1e-7)


def test_hand_built_barrier_short_of_c_fails():
    cert, *ctx = abs_barrier(c_shift=-0.01)
    rep = verify_certificate(cert, *ctx)
    assert not rep.passed
    assert rep.worst["MARTINGALE"] == pytest.approx(0.01, abs=1e-7)
    assert rep.where["MARTINGALE"] is not None


def test_hand_built_gamma_too_small_fails():
    cert, *ctx = abs_barrier()
    cert.gamma = 0.1
    rep = verify_certificate(cert, *ctx)
    assert rep.worst["INIT"] == pytest.approx(0.1, abs=1e-8)
    assert not rep.passed


def test_fingerprint_mismatch():
    cert, sys, bp, unsafe, data = abs_barrier()
    other = NoiseDataset(np.array([-0.1, 0.0, 0.2]))
    with pytest.raises(CertificateError, match="fingerprint"):
        verify_certificate(cert, sys, bp, unsafe, other)
    assert fingerprint(sys, bp, unsafe, data) != fingerprint(sys, bp, unsafe, other)


def test_nonneg_and_upper_match_vertices():
    rng = np.random.default_rng(5)
    sys = PwaSystem([box([-1.0, -1.0], [1.0, 1.0])], [AffineMap(0.5 * np.eye(2), [0.0, 0.0])],
                    box([-0.1, -0.1], [0.1, 0.1]), box([-0.8, -0.8], [0.8, 0.8]), horizon=3)
    bp = build_partition(sys, [[-1.0, 0.0, 1.0], [-1.0, 0.3, 1.0]])
    unsafe = UnsafeDescription.complement_of(sys.safe_set)
    data = NoiseDataset(np.zeros((2, 2)))
    for _ in range(5):
        th = BarrierTheta(rng.standard_normal((4, 2)), rng.standard_normal(4))
        cert = Certificate(th, 0.0, 0.0, 3, params_for(bp, 2, 2), bp.pieces, bp.parent,
                           fingerprint(sys, bp, unsafe, data))
        rep = verify_certificate(cert, sys, bp, unsafe, data)
        vals = [vertices(P) @ th.u[i] + th.v[i] for i, P in enumerate(bp.pieces)]
        assert rep.worst["NONNEG"] == pytest.approx(max(-v.min() for v in vals), abs=1e-7)
        assert rep.worst["UPPER"] == pytest.approx(max(v.max() - 1.0 for v in vals), abs=1e-7)


# synthesized certificate ---------------------------------------------------------

@pytest.fixture(scope="module")
def martingale_run():
    p = martingale(sigma=0.05)
    params = params_for(p.bp, 1, 150)
    data = gaussian([0.05], 150, 7)
    run = certify(p.sys, p.bp, p.unsafe, data, params, seed=7)
    return p, data, run


def test_synthesized_certificate_verifies(martingale_run):
    p, data, run = martingale_run
    assert run.report.passed
    assert run.certificate.c > 0.05
    assert 0 < run.certificate.safety_lower_bound < 1


def test_lowering_c_breaks_martingale_condition(martingale_run):
    p, data, run = martingale_run
    cert = Certificate.from_dict(run.certificate.to_dict())
    cert.c -= 0.1
    rep = verify_certificate(cert, p.sys, p.bp, p.unsafe, data)
    assert not rep.passed
    assert rep.worst["MARTINGALE"] > 0.05


def test_nonneg_pass_implies_nonnegative_barrier(martingale_run):
    p, data, run = martingale_run
    X = np.linspace(-8, 8, 4001)[:, None]
    assert eval_barrier(run.certificate.theta, p.bp, X).min() >= -run.report.tol


def test_json_round_trip(tmp_path, martingale_run):
    _, _, run = martingale_run
    cert = run.certificate
    path = tmp_path / "cert.json"
    cert.save(path)
    back = Certificate.load(path)
    assert back.to_json() == cert.to_json()
    d = json.loads(path.read_text())
    assert set(d) == {"meta", "scenario", "barrier", "result"}
    assert "timings" not in d["result"]
    assert d["result"]["safety_lower_bound"] == cert.safety_lower_bound
    assert json.loads(cert.to_json(include_timings=True))["result"]["timings"]


def test_edited_bound_is_rejected(martingale_run):
    d = martingale_run[2].certificate.to_dict()
    d["result"]["safety_lower_bound"] += 0.05
    with pytest.raises(CertificateError, match="does not follow"):
        Certificate.from_dict(d)
    del d["barrier"]
    with pytest.raises(CertificateError, match="malformed"):
        Certificate.from_dict(d)


# inner approximation -------------------------------------------------------------

def test_two_point_boundary_case():
    # P{g = 0} = 1 - eps, P{g = M} = eps, h = delta: E[g] = eps M <= delta
    for eps in (Fraction(1, 100), Fraction(1, 10), Fraction(1, 3)):
        M = Fraction(1)
        delta = eps * M / (1 - eps)
        assert (1 - eps) * 0 + eps * M <= delta
        assert eps * M < delta


def test_oracle_has_no_counterexamples():
    rep = inner_approx_oracle(500, seed=42)
    assert rep["cases"] == 500
    assert rep["premise_held"] > 400
    assert rep["counterexamples"] == []


def test_zero_eps_needs_no_margin():
    # eps = 0 forces delta = 0 and P{g <= h} = 1, so h bounds every outcome
    rng = np.random.default_rng(3)
    for _ in range(20):
        g = [Fraction(float(x)) for x in rng.random(5)]
        p = [Fraction(1, 5)] * 5
        h = max(g)
        assert sum(pk * gk for pk, gk in zip(p, g)) <= h
