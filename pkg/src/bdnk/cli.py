"""Command-line interface.

Subcommands: speeds, check-causality, verify, det-verify, evolve, picard,
norms.  Exit codes: 0 success, 1 property/monitor failure, 2 usage or
configuration error.  Every run that writes outputs also writes a
manifest.json sufficient to reproduce it bit-identically on one platform.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import characteristics as ch
from .config import RunConfig, canonical_text, config_hash, load_config
from .errors import BdnkError, ConfigError
from .evolve import evolve, write_diagnostics_csv, write_snapshot
from .grid import TorusGrid, sobolev_norm
from .picard import energy_monitor, picard_iterate, write_energy_csv, write_iteration_csv
from .verify import format_report, run_verification

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _limit_threads(n):
    if n is None:
        return
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=int(n))
    except Exception:
        print("warning: could not limit thread count (threadpoolctl missing)",
              file=sys.stderr)


def _load(args) -> RunConfig:
    if args.config is None:
        return RunConfig()
    return load_config(args.config)


def _write_manifest(outdir: Path, cfg: RunConfig, command: str, seed, wall_time):
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config_sha256": config_hash(cfg),
        "config": canonical_text(cfg),
        "seed": seed,
        "version": __version__,
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "numpy": np.__version__,
        "wall_time_s": wall_time,
    }
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)


def cmd_speeds(args) -> int:
    cfg = _load(args)
    model = cfg.model(validate=False)
    report = ch.check_causality(model)
    if not report.admissible:
        print("inadmissible model:")
        for f in report.failures:
            print(f"  {f}")
        return EXIT_OK
    speeds = ch.rest_frame_speeds(model)
    print(f"model: eta0={cfg.eta0} a1={cfg.a1} a2={cfg.a2}")
    print("rest-frame speeds (ascending):")
    for s in speeds:
        print(f"  {s:.10f}")
    print("speed ratios b^2/a.a:")
    for name, val in sorted(report.ratios.items()):
        print(f"  {name:14s} {val:.10f}")
    print(f"max ratio: {report.max_speed_ratio:.10f}")
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "speeds.csv", "w") as fh:
            fh.write("family,ratio,speed\n")
            for name, val in sorted(report.ratios.items()):
                fh.write(f"{name},{val:.17g},{np.sqrt(val):.17g}\n")
        _write_manifest(outdir, cfg, "speeds", cfg.seed, 0.0)
    return EXIT_OK


def cmd_check_causality(args) -> int:
    cfg = _load(args)
    model = cfg.model(validate=False)
    report = ch.check_causality(model)
    print(f"a1 = {cfg.a1}, a2 = {cfg.a2} "
          f"(admissibility bound a2 >= {3*cfg.a1/(cfg.a1-1):.6g})")
    for name, ok in report.conditions.items():
        print(f"  {name}: {'ok' if ok else 'VIOLATED'}")
    for name, val in sorted(report.ratios.items()):
        print(f"  ratio {name} = {val:.10f}")
    print(f"admissible: {report.admissible}")
    if args.scan:
        t0 = time.time()
        a1s = np.linspace(args.scan[0], args.scan[1], 50)
        a2s = np.linspace(args.scan[2], args.scan[3], 50)
        rows = []
        from .state import TransportModel

        for a1 in a1s:
            for a2 in a2s:
                rep = ch.check_causality(
                    TransportModel(a1=float(a1), a2=float(a2), validate=False))
                rows.append((a1, a2, int(rep.admissible), rep.max_speed_ratio))
        print(f"scanned 50x50 lattice in {time.time()-t0:.2f}s")
        if args.out:
            outdir = Path(args.out)
            outdir.mkdir(parents=True, exist_ok=True)
            with open(outdir / "causality_scan.csv", "w") as fh:
                fh.write("a1,a2,admissible,max_ratio\n")
                for a1, a2, ok, ratio in rows:
                    fh.write(f"{a1:.17g},{a2:.17g},{ok},{ratio:.17g}\n")
            _write_manifest(Path(args.out), cfg, "check-causality", cfg.seed,
                            time.time() - t0)
    return EXIT_OK


def _run_verify(args, check_roots: bool, check_eigenvectors: bool) -> int:
    cfg = _load(args)
    seed = args.seed if args.seed is not None else cfg.seed
    report = run_verification(args.samples, seed, corrupt_b=args.corrupt_b,
                              check_eigenvectors=check_eigenvectors)
    print(format_report(report))
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "verify.csv", "w") as fh:
            fh.write("check,worst_error\n")
            fh.write(f"root,{report.worst_root_error:.17g}\n")
            fh.write(f"eigvec_residual,{report.worst_eigvec_residual:.17g}\n")
            fh.write(f"det_log,{report.worst_det_log_error:.17g}\n")
            fh.write(f"identity,{report.worst_identity_error:.17g}\n")
        _write_manifest(outdir, cfg, "verify", seed, report.elapsed)
    return EXIT_OK if report.passed else EXIT_FAILURE


def cmd_verify(args) -> int:
    return _run_verify(args, check_roots=True, check_eigenvectors=True)


def cmd_det_verify(args) -> int:
    return _run_verify(args, check_roots=True, check_eigenvectors=False)


def cmd_evolve(args) -> int:
    cfg = _load(args)
    model = cfg.model()
    data = cfg.initial_data()
    evolve_cfg = cfg.evolve_config()
    outdir = Path(args.out) if args.out else Path("evolve_out")
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    traj = evolve(data, model, evolve_cfg)
    wall = time.time() - t0
    for n, (t, psi) in enumerate(zip(traj.times, traj.states)):
        write_snapshot(outdir / f"snap_{n:06d}.bin", psi.to_field(), t)
    write_diagnostics_csv(outdir / "diagnostics.csv", traj)
    if len(traj.states) >= 2:
        energy = energy_monitor(traj, model, cfg.r, TorusGrid(cfg.n))
        write_energy_csv(outdir / "energy.csv", energy)
        print(f"energy fit: M = {energy.M:.6g}, omega = {energy.omega:.6g}, "
              f"max violation = {energy.max_violation:.3e}")
    _write_manifest(outdir, cfg, "evolve", cfg.seed, wall)
    print(f"evolved to t = {traj.times[-1]:.6g} in {wall:.2f}s "
          f"({len(traj.times)} snapshots) -> {outdir}")
    if traj.monitor is not None:
        print(f"monitor tripped: {traj.monitor[0]} at t = {traj.monitor[1]:.6g}",
              file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_picard(args) -> int:
    cfg = _load(args)
    model = cfg.model()
    data = cfg.initial_data()
    evolve_cfg = cfg.evolve_config()
    outdir = Path(args.out) if args.out else Path("picard_out")
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    report = picard_iterate(data, model, evolve_cfg, n_max=args.n_max)
    wall = time.time() - t0
    write_iteration_csv(outdir / "picard.csv", report)
    _write_manifest(outdir, cfg, "picard", cfg.seed, wall)
    print(f"{report.iterations} iterations in {wall:.2f}s")
    for n, a, ratio, ok in report.rows():
        print(f"  n={n:2d}  a_n={a:.6e}  ratio={ratio:.4f}  bound_ok={int(bool(ok))}")
    if report.iterations < 4:
        print("insufficient iterations for a contraction verdict")
        return EXIT_OK
    print(f"converged: {report.converged}  non_contracting: {report.non_contracting}")
    print(f"distance to direct evolution: {report.distance_to_evolve:.6e}")
    return EXIT_FAILURE if report.non_contracting else EXIT_OK


def cmd_norms(args) -> int:
    cfg = _load(args)
    data = cfg.initial_data()
    grid = TorusGrid(cfg.n)
    rows = []
    for name, fld in (("eps", data.eps0), ("eps_dot", data.eps1),
                      ("u", data.u0), ("u_dot", data.u1)):
        for r in (0.0, 1.0, 2.0, cfg.r):
            rows.append((name, r, sobolev_norm(fld, r, grid)))
    print(f"{'field':8s} {'r':>4s} {'norm':>18s}")
    for name, r, val in rows:
        print(f"{name:8s} {r:4.1f} {val:18.12g}")
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "norms.csv", "w") as fh:
            fh.write("field,r,norm\n")
            for name, r, val in rows:
                fh.write(f"{name},{r:.17g},{val:.17g}\n")
        _write_manifest(outdir, cfg, "norms", cfg.seed, 0.0)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bdnk",
        description="Conformal causal viscous relativistic hydrodynamics toolkit",
    )
    p.add_argument("--version", action="version", version=f"bdnk {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", type=str, default=None,
                        help="run configuration file")
        if out:
            sp.add_argument("--out", type=str, default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/FFT worker threads")

    sp = sub.add_parser("speeds", help="rest-frame characteristic speeds")
    common(sp)
    sp.set_defaults(func=cmd_speeds)

    sp = sub.add_parser("check-causality", help="admissibility of the model")
    common(sp)
    sp.add_argument("--scan", type=float, nargs=4, default=None,
                    metavar=("A1MIN", "A1MAX", "A2MIN", "A2MAX"),
                    help="scan a 50x50 (a1, a2) lattice")
    sp.set_defaults(func=cmd_check_causality)

    for name, fn in (("verify", cmd_verify), ("det-verify", cmd_det_verify)):
        sp = sub.add_parser(name, help=f"{name} property suite")
        common(sp)
        sp.add_argument("--samples", type=int, default=200)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--corrupt-B", dest="corrupt_b", action="store_true",
                        help="inject a fault to demonstrate test sensitivity")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("evolve", help="evolve configured initial data")
    common(sp)
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("picard", help="frozen-coefficient iteration harness")
    common(sp)
    sp.add_argument("--n-max", type=int, default=20)
    sp.set_defaults(func=cmd_picard)

    sp = sub.add_parser("norms", help="Sobolev norms of the initial data")
    common(sp)
    sp.set_defaults(func=cmd_norms)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code) if exc.code else EXIT_OK
    _limit_threads(getattr(args, "threads", None))
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BdnkError as exc:
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
