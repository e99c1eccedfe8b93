"""Benchmark presets and the synthesis pipeline shared with the command line."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .certificate import Certificate, fingerprint, verify_certificate
from .noise import NoiseDataset, from_spec
from .polytope import AffineMap, Polyhedron
from .scenario import ScenarioParams, decision_dimension
from .synth import BuildOptions, synthesize
from .system import (BarrierPartition, PwaSystem, UnsafeDescription, build_partition,
                     partition_from_pieces)

logger = logging.getLogger(__name__)

INF = np.inf


@dataclass
class Preset:
    name: str
    sys: PwaSystem
    bp: BarrierPartition
    unsafe: UnsafeDescription
    noise: dict
    scenario: dict
    M: float = 1.0
    notes: dict = field(default_factory=dict)


def martingale(sigma: float = 0.1, eps: float = 0.01, beta: float = 1e-9) -> Preset:
    """``x+ = x + w`` on the line; X0 = [-0.5, 0.5], Xs = [-2.5, 2.5], 7 pieces."""
    whole = Polyhedron.box([-INF], [INF])
    sys = PwaSystem([whole], [AffineMap([[1.0]], [0.0])], Polyhedron.box([-0.5], [0.5]),
                    Polyhedron.box([-2.5], [2.5]), horizon=10, name="martingale")
    bp = build_partition(sys, [np.linspace(-2.5, 2.5, 6)], unbounded_ends=True)
    return Preset("martingale", sys, bp, UnsafeDescription.complement_of(sys.safe_set),
                  {"type": "gaussian", "sigma": [sigma]}, {"eps": eps, "beta": beta},
                  notes={"noise": f"implementer-chosen Gaussian sigma={sigma}"})


def drone(sigma: float = 0.1, eps: float = 0.02, beta: float = 1e-9, slabs: int = 31) -> Preset:
    """Double integrator ``(p, v)`` with unit step and mass, zero input; |v| <= 10 is safe.

    Pieces are velocity slabs unbounded in position: ``slabs`` inside the safe
    band and one on each unsafe side.
    """
    A = [[1.0, 1.0], [0.0, 1.0]]
    whole = Polyhedron.box([-INF, -INF], [INF, INF])
    sys = PwaSystem([whole], [AffineMap(A, [0.0, 0.0])],
                    Polyhedron.box([-0.5, -0.5], [0.5, 0.5]),
                    Polyhedron.box([-INF, -10.0], [INF, 10.0]), horizon=10, name="drone")
    edges = np.linspace(-10.0, 10.0, slabs + 1)
    pieces = [Polyhedron.box([-INF, -INF], [INF, -10.0])]
    pieces += [Polyhedron.box([-INF, a], [INF, b]) for a, b in zip(edges[:-1], edges[1:])]
    pieces += [Polyhedron.box([-INF, 10.0], [INF, INF])]
    bp = partition_from_pieces(sys, pieces)
    return Preset("drone", sys, bp, UnsafeDescription.complement_of(sys.safe_set),
                  {"type": "gaussian", "sigma": [sigma, sigma]}, {"eps": eps, "beta": beta},
                  notes={"dynamics": "implementer-supplied: A=[[1,1],[0,1]], b=0 "
                                     "(unit time step, mass 1, zero thrust)",
                         "initial_set": "implementer-chosen [-0.5,0.5]^2",
                         "noise": f"implementer-chosen Gaussian sigma={sigma}"})


# x1 breakpoints on [0, 200] and number of lateral bands inside the road
VEHICLE_LAYOUTS = {
    18: ([0, 40, 80, 120, 200], 2),
    42: ([0, 40, 80, 120, 200], 6),
    46: ([0, 20, 40, 60, 80, 100, 120, 160, 200], 4),
    126: (list(range(0, 120, 10)) + list(np.linspace(120, 200, 7)), 6),
}


def vehicle(pieces: int = 18, sigma=(0.1, 0.01), road: float = 2.0, eps: float = 0.05,
            beta: float = 1e-9, velocity: float = 13.89, wind: float = 0.0626) -> Preset:
    """Constant-velocity car with a lateral wind gust for ``80 <= x1 <= 120``.

    The road is ``|x2| <= road``.  Pieces: a grid over ``[0, 200]`` in ``x1``
    (plus unbounded end columns) times equal lateral bands, and two unsafe
    strips on each side split at the wind boundaries.
    """
    if pieces not in VEHICLE_LAYOUTS:
        raise ValueError(f"vehicle layouts exist for {sorted(VEHICLE_LAYOUTS)} pieces")
    A = [[1.0, 0.0], [0.0, 0.95]]
    regions = [Polyhedron.box([-INF, -INF], [80.0, INF]),
               Polyhedron.box([80.0, -INF], [120.0, INF]),
               Polyhedron.box([120.0, -INF], [INF, INF])]
    dyn = [AffineMap(A, [velocity, 0.0]), AffineMap(A, [velocity, 0.5 * wind]),
           AffineMap(A, [velocity, 0.0])]
    sys = PwaSystem(regions, dyn, Polyhedron.box([0.0, -0.5], [10.0, 0.5]),
                    Polyhedron.box([-INF, -road], [INF, road]), horizon=10, name="vehicle")
    xb, bands = VEHICLE_LAYOUTS[pieces]
    xcols = [-INF] + [float(x) for x in xb] + [INF]
    ycuts = np.linspace(-road, road, bands + 1)
    cells = [Polyhedron.box([a, c], [b, d])
             for a, b in zip(xcols[:-1], xcols[1:]) for c, d in zip(ycuts[:-1], ycuts[1:])]
    for a, b in ((-INF, 80.0), (80.0, 120.0), (120.0, INF)):
        cells.append(Polyhedron.box([a, road], [b, INF]))
        cells.append(Polyhedron.box([a, -INF], [b, -road]))
    bp = partition_from_pieces(sys, cells)
    assert bp.size == pieces, (bp.size, pieces)
    return Preset(f"vehicle_{pieces}", sys, bp, UnsafeDescription.complement_of(sys.safe_set),
                  {"type": "gaussian", "sigma": list(np.atleast_1d(sigma).astype(float))},
                  {"eps": eps, "beta": beta},
                  notes={"road": f"implementer-chosen |x2| <= {road}",
                         "domain": "implementer-chosen grid on x1 in [0, 200]",
                         "initial_set": "implementer-chosen [0,10] x [-0.5,0.5]",
                         "noise": f"implementer-chosen Gaussian sigma={list(np.atleast_1d(sigma))}"})


def preset(name: str, **kw) -> Preset:
    if name == "martingale":
        return martingale(**kw)
    if name == "drone":
        return drone(**kw)
    if name == "vehicle":
        return vehicle(**kw)
    raise ValueError(f"unknown benchmark {name!r}")


@dataclass
class Run:
    problem: object
    result: object
    certificate: Certificate
    report: object
    params: ScenarioParams
    timings: dict


def resolve_scenario(bp: BarrierPartition, n: int, block: dict, M: float = 1.0,
                     delta=None) -> ScenarioParams:
    d = decision_dimension(bp.size, n)
    return ScenarioParams.resolve(d, eps=block.get("eps"), N=block.get("N"),
                                  beta=block.get("beta"), M=M, delta=delta)


def certify(sys, bp, unsafe, data: NoiseDataset, params: ScenarioParams,
            options: BuildOptions | None = None, seed=None, verify_tol: float = 1e-6,
            notes=None, verify: bool = True) -> Run:
    """Synthesize, wrap in a certificate and re-verify independently."""
    opt = options or BuildOptions()
    t0 = time.perf_counter()
    problem, result = synthesize(sys, bp, unsafe, data, params, opt)
    t1 = time.perf_counter()
    cert = Certificate.from_result(result, problem, fingerprint(sys, bp, unsafe, data),
                                   seed=seed, notes=notes)
    report = None
    if verify:
        report = verify_certificate(cert, sys, bp, unsafe, data, verify_tol,
                                    empty_tol=opt.empty_tol,
                                    paper_literal_martingale=opt.paper_literal_martingale)
    t2 = time.perf_counter()
    timings = {"synthesis_s": t1 - t0, "build_s": result.build_time,
               "solve_s": result.solve_time, "verify_s": t2 - t1, "total_s": t2 - t0}
    cert.timings = timings
    return Run(problem, result, cert, report, params, timings)


def run_benchmark(name: str, seed: int = 0, options: BuildOptions | None = None,
                  scenario: dict | None = None, verify: bool = True, **kw):
    """Instantiate a preset, draw its samples and run :func:`certify`."""
    p = preset(name, **kw)
    block = dict(p.scenario)
    if scenario:
        block = {k: v for k, v in scenario.items() if v is not None}
    params = resolve_scenario(p.bp, p.sys.n, block, p.M)
    data = from_spec(p.noise, params.N, seed)
    run = certify(p.sys, p.bp, p.unsafe, data, params, options, seed, notes=p.notes,
                  verify=verify)
    return p, data, run


def table_row(p: Preset, run: Run) -> dict:
    return {"system": p.name, "n": p.sys.n, "pieces": p.bp.size, "beta": run.params.beta,
            "eps": run.params.eps, "N": run.params.N,
            "zeta": run.certificate.safety_lower_bound,
            "time_s": run.timings["synthesis_s"]}
