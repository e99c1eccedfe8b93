"""Command line: ``synth``, ``benchmark``, ``samplecurve`` and ``simulate``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarks import Preset, certify, preset, resolve_scenario, table_row
from .certificate import Certificate, CertificateError, fingerprint
from .lp import Status
from .noise import NoiseDataset, from_spec, load_csv
from .polytope import AffineMap, Polyhedron, PolytopeError, SolverFailure
from .scenario import ScenarioError, decision_dimension, sample_curve
from .sim import (empirical_safety, pool_sampler, sampler_from_spec, simulate,
                  soundness_check, start_points)
from .synth import BuildOptions, SynthesisError
from .system import (PartitionError, PwaSystem, UnsafeDescription, build_partition,
                     partition_from_pieces)

logger = logging.getLogger("pwa_barrier")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_VERIFY, EXIT_SOLVER = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    def __init__(self, field, message):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


# ---------------------------------------------------------------------------
# configuration


def _poly(d, field):
    try:
        return Polyhedron.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(field, f"not a valid polyhedron ({exc})") from None


def _require(cfg, key, field=None):
    if key not in cfg:
        raise ConfigError(field or key, "missing")
    return cfg[key]


class RunConfig:
    """Parsed run configuration; every problem object is built eagerly."""

    def __init__(self, cfg: dict, base_dir: Path = Path(".")):
        self.raw = cfg
        self.base_dir = base_dir
        s = _require(cfg, "system")
        regions = [_poly(r, f"system.regions[{k}]")
                   for k, r in enumerate(_require(s, "regions", "system.regions"))]
        dyn = []
        for k, f in enumerate(_require(s, "dynamics", "system.dynamics")):
            try:
                dyn.append(AffineMap.from_dict(f))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"system.dynamics[{k}]", str(exc)) from None
        horizon = cfg.get("horizon", 10)
        if not isinstance(horizon, int) or horizon < 1:
            raise ConfigError("horizon", "must be a positive integer")
        try:
            self.sys = PwaSystem(regions, dyn,
                                 _poly(_require(s, "initial_set", "system.initial_set"),
                                       "system.initial_set"),
                                 _poly(_require(s, "safe_set", "system.safe_set"),
                                       "system.safe_set"),
                                 horizon=horizon, name=cfg.get("name", ""))
            self.sys.validate()
        except PolytopeError as exc:
            raise ConfigError("system", str(exc)) from None
        if "unsafe" in s:
            self.unsafe = UnsafeDescription(
                [_poly(p, f"system.unsafe[{k}]") for k, p in enumerate(s["unsafe"])])
            try:
                self.unsafe.validate(self.sys.safe_set)
            except PolytopeError as exc:
                raise ConfigError("system.unsafe", str(exc)) from None
        else:
            self.unsafe = UnsafeDescription.complement_of(self.sys.safe_set)

        b = _require(cfg, "barrier")
        try:
            if "pieces" in b and "grid" in b:
                raise ConfigError("barrier", "give either 'pieces' or 'grid', not both")
            if "pieces" in b:
                self.bp = partition_from_pieces(
                    self.sys, [_poly(p, f"barrier.pieces[{k}]")
                               for k, p in enumerate(b["pieces"])], self.unsafe)
            elif "grid" in b:
                g = b["grid"]
                self.bp = build_partition(self.sys, _require(g, "breakpoints",
                                                             "barrier.grid.breakpoints"),
                                          self.unsafe, g.get("unbounded_ends", False),
                                          g.get("split_cells", False))
            else:
                raise ConfigError("barrier", "needs 'pieces' or 'grid'")
        except PartitionError as exc:
            raise ConfigError("barrier", str(exc)) from None

        sc = _require(cfg, "scenario")
        given = [k for k in ("eps", "N", "beta") if sc.get(k) is not None]
        unknown = set(sc) - {"eps", "N", "beta", "delta"}
        if unknown:
            raise ConfigError(f"scenario.{sorted(unknown)[0]}", "unknown key")
        if len(given) != 2:
            raise ConfigError("scenario", f"exactly two of eps, N, beta are required, got {given}")
        self.scenario = sc
        self.M = float(cfg.get("M", 1.0))
        if self.M < 1:
            raise ConfigError("M", "must be at least 1")

        self.noise = _require(cfg, "noise")
        if "file" in self.noise:
            path = self.base_dir / self.noise["file"]
            if not path.exists():
                raise ConfigError("noise.file", f"{path} does not exist")
            self.noise_path = path
        elif "generator" in self.noise:
            self.noise_path = None
        else:
            raise ConfigError("noise", "needs 'file' or 'generator'")
        solver = cfg.get("solver", {})
        flags = cfg.get("flags", {})
        self.options = BuildOptions(
            prune=flags.get("prune", True),
            paper_literal_unsafe=flags.get("paper_literal_unsafe", False),
            empty_tol=solver.get("empty_tol", 1e-9), lp_tol=solver.get("lp_tol", 1e-8),
            lp_method=solver.get("method", "highs-ipm"),
            cutting_planes=solver.get("cutting_planes", True))
        self.verify_tol = solver.get("verify_tol", 1e-6)
        self.seed = int(cfg.get("seed", 0))

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except FileNotFoundError:
            raise ConfigError("--config", f"{path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON ({exc})") from None
        return cls(cfg, path.parent)

    def params(self, eps=None, beta=None, N=None):
        block = dict(self.scenario)
        if eps is not None or beta is not None or N is not None:
            block = {"eps": eps, "beta": beta, "N": N}
        try:
            return resolve_scenario(self.bp, self.sys.n, block, self.M, block.get("delta"))
        except ScenarioError as exc:
            raise ConfigError("scenario", str(exc)) from None

    def samples(self, N: int, path=None, seed=None) -> NoiseDataset:
        seed = self.seed if seed is None else seed
        path = path or self.noise_path
        if path is not None:
            ds = load_csv(path, self.sys.n)
            if ds.N < N:
                raise ConfigError("noise.file", f"{ds.N} samples available, {N} required")
            return ds.head(N)
        return from_spec(self.noise["generator"], N, seed)

    def sampler(self, path=None):
        path = path or self.noise_path
        if path is not None:
            return pool_sampler(load_csv(path, self.sys.n).samples)
        return sampler_from_spec(self.noise["generator"], self.sys.n)


def config_from_preset(p: Preset, seed: int = 0) -> dict:
    """Self-contained run configuration reproducing a benchmark preset."""
    s = p.sys
    return {
        "name": p.name,
        "system": {"regions": [r.to_dict() for r in s.regions],
                   "dynamics": [f.to_dict() for f in s.dynamics],
                   "initial_set": s.initial_set.to_dict(), "safe_set": s.safe_set.to_dict(),
                   "unsafe": [u.to_dict() for u in p.unsafe.pieces]},
        "barrier": {"pieces": [q.to_dict() for q in p.bp.pieces]},
        "horizon": int(s.horizon),
        "scenario": dict(p.scenario),
        "M": p.M,
        "noise": {"generator": p.noise},
        "solver": {"lp_tol": 1e-8, "empty_tol": 1e-9, "verify_tol": 1e-6},
        "flags": {"paper_literal_unsafe": False, "prune": True},
        "seed": seed,
        "notes": p.notes,
    }


# ---------------------------------------------------------------------------
# commands


def _print_params(params, out=None):
    print(f"scenario: N={params.N} eps={params.eps:.6g} beta={params.beta:.6g} "
          f"delta={params.delta:.6g} M={params.M:g} d={params.d}", file=out or sys.stdout)


def _run_and_emit(sys_, bp, unsafe, data, params, options, seed, verify_tol, notes, args):
    _print_params(params)
    run = certify(sys_, bp, unsafe, data, params, options, seed, verify_tol, notes)
    cert = run.certificate
    rep = run.report
    report = {"counts": run.problem.counts, "timings": run.timings,
              "verification": rep.to_dict(), "scenario": params.to_dict()}
    if getattr(args, "dump_lp", None):
        run.problem.model.write_lp(args.dump_lp)
    if getattr(args, "report", None):
        with open(args.report, "w") as fh:
            json.dump(report, fh, indent=1, default=float)
    print(f"gamma={cert.gamma:.6g} c={cert.c:.6g} T={cert.T} "
          f"objective={cert.objective:.6g} safety_lower_bound={cert.safety_lower_bound:.6g}")
    print(f"verification: {'passed' if rep.passed else 'FAILED'} "
          + " ".join(f"{k}={v:.3g}" for k, v in rep.worst.items()))
    print(f"time: synthesis {run.timings['synthesis_s']:.2f}s, "
          f"verification {run.timings['verify_s']:.2f}s")
    if not rep.passed:
        print("certificate withheld: verification failed", file=sys.stderr)
        return EXIT_VERIFY, run
    if cert.safety_lower_bound == 0.0:
        print("warning: trivial certificate (gamma + c T >= 1)", file=sys.stderr)
    if args.out:
        cert.save(args.out, include_timings=getattr(args, "timings", False))
        print(f"certificate written to {args.out}")
    return EXIT_OK, run


def cmd_synth(args) -> int:
    cfg = RunConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    opt = cfg.options
    if args.no_prune:
        opt.prune = False
    if args.paper_literal_unsafe:
        opt.paper_literal_unsafe = True
    if args.full_lp:
        opt.cutting_planes = False
    params = cfg.params(args.eps, args.beta, args.n_samples)
    data = cfg.samples(params.N, args.samples)
    code, _ = _run_and_emit(cfg.sys, cfg.bp, cfg.unsafe, data, params, opt, cfg.seed,
                            cfg.verify_tol, cfg.raw.get("notes"), args)
    return code


def cmd_benchmark(args) -> int:
    kw = {}
    if args.sigma is not None:
        kw["sigma"] = args.sigma if args.name != "martingale" else args.sigma[0]
    if args.pieces is not None:
        if args.name != "vehicle":
            raise ConfigError("--pieces", "only the vehicle benchmark has several layouts")
        kw["pieces"] = args.pieces
    p = preset(args.name, **kw)
    block = dict(p.scenario)
    if args.eps is not None or args.beta is not None or args.n_samples is not None:
        block = {"eps": args.eps, "beta": args.beta, "N": args.n_samples}
    try:
        params = resolve_scenario(p.bp, p.sys.n, block, p.M)
    except ScenarioError as exc:
        raise ConfigError("scenario", str(exc)) from None
    data = from_spec(p.noise, params.N, args.seed)
    opt = BuildOptions(prune=not args.no_prune, paper_literal_unsafe=args.paper_literal_unsafe,
                       cutting_planes=not args.full_lp)
    print(f"benchmark {p.name}: " + "; ".join(f"{k}: {v}" for k, v in p.notes.items()))
    code, run = _run_and_emit(p.sys, p.bp, p.unsafe, data, params, opt, args.seed, 1e-6,
                              p.notes, args)
    row = table_row(p, run)
    print("system,n,pieces,beta,zeta,time_s")
    print(f"{row['system']},{row['n']},{row['pieces']},{row['beta']:.3g},"
          f"{row['zeta']:.4f},{row['time_s']:.2f}")
    if args.write_config:
        with open(args.write_config, "w") as fh:
            json.dump(config_from_preset(p, args.seed), fh, indent=1)
    return code


def cmd_samplecurve(args) -> int:
    rows = sample_curve(args.eps, args.d, args.beta, args.saa_constant)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["beta", "N_scenario", "N_saa_reference"])
        for b, n_sc, n_saa in rows:
            w.writerow([repr(float(b)), n_sc, n_saa])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = RunConfig.load(args.config)
    try:
        cert = Certificate.load(args.cert)
    except (CertificateError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    data = cfg.samples(cert.scenario.N, args.samples, cert.seed)
    if fingerprint(cfg.sys, cfg.bp, cfg.unsafe, data) != cert.fingerprint:
        print("error: certificate fingerprint does not match the configuration",
              file=sys.stderr)
        return EXIT_VERIFY
    x0 = start_points(cfg.sys.initial_set, "grid", args.grid)
    batch = simulate(cfg.sys, cfg.sampler(args.samples), x0, args.trials, seed=args.seed,
                     workers=args.workers)
    summary = empirical_safety(batch)
    check = soundness_check(summary, cert.objective)
    if not args.per_start:
        summary.pop("per_start")
    result = {"certificate_bound": cert.safety_lower_bound, "objective": cert.objective,
              "simulation": summary, "soundness": check}
    text = json.dumps(result, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK if check["passed"] else EXIT_VERIFY


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pwabarrier",
                                 description="Data-driven piece-wise affine barrier certificates")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def synth_flags(p):
        p.add_argument("--out", help="certificate JSON path")
        p.add_argument("--report", help="build/verification report JSON path")
        p.add_argument("--eps", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--n-samples", type=int, help="number of noise samples N")
        p.add_argument("--paper-literal-unsafe", action="store_true",
                       help="impose B >= 1 on the whole of each unsafe-touching piece")
        p.add_argument("--no-prune", action="store_true",
                       help="keep every Q_ij(w) without emptiness checks")
        p.add_argument("--full-lp", action="store_true",
                       help="dualise every scenario constraint at once instead of cutting planes")
        p.add_argument("--dump-lp", help="write the final LP in CPLEX LP format")
        p.add_argument("--timings", action="store_true",
                       help="include timings in the certificate (breaks byte reproducibility)")

    p = sub.add_parser("synth", help="synthesise a certificate from a configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--samples", help="noise CSV overriding the configured source")
    p.add_argument("--seed", type=int)
    synth_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("benchmark", help="run a built-in benchmark")
    p.add_argument("name", choices=["martingale", "drone", "vehicle"])
    p.add_argument("--pieces", type=int, choices=[18, 42, 46, 126])
    p.add_argument("--sigma", type=float, nargs="+")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--write-config", help="also write the preset as a run configuration")
    synth_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("samplecurve", help="scenario sample sizes against confidence")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--beta", type=float, nargs="+",
                   default=[10.0 ** -k for k in range(1, 13)])
    p.add_argument("--saa-constant", type=float, default=1.0,
                   help="K in the 1/beta reference curve ceil(K / beta)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_samplecurve)

    p = sub.add_parser("simulate", help="Monte Carlo soundness check of a certificate")
    p.add_argument("--config", required=True)
    p.add_argument("--cert", required=True)
    p.add_argument("--samples", help="noise CSV (also used as the simulation pool)")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--grid", type=int, default=3, help="start points per axis over X0")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--per-start", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SynthesisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for item in exc.diagnosis:
            print(f"  conflicting constraint group: {item}", file=sys.stderr)
        return EXIT_INFEASIBLE if exc.status is Status.INFEASIBLE else EXIT_SOLVER
    except SolverFailure as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except CertificateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
