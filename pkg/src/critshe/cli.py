"""Command-line front end: kernel tabulation, simulation, duality MC,
verification, and reporting.

Every run emits a JSON RunManifest next to its outputs (command, full config
echo, seed, version, wall time, output list).  Output files are written
atomically (temp + rename); CSV floats carry 17 significant digits so
round-trips are lossless.  Exit codes: 0 pass, 1 usage, 2 gate violation,
3 acceptance failure.  CRITSHE_THREADS caps the worker count for replica
fan-out and independent verify items.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .numcore import DomainError
from . import mollifier as mo
from . import dbg
from . import she_sim as sim
from . import duality_mc as du
from . import acceptance

EXIT_OK, EXIT_USAGE, EXIT_GATE, EXIT_ACCEPT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _atomic_write(path: Path, writer) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: Path, header: list[str], rows) -> None:
    def w(fh):
        out = csv.writer(fh)
        out.writerow(header)
        for row in rows:
            out.writerow([_fmt(v) for v in row])
    _atomic_write(path, w)


def _manifest(out_dir: Path, command: str, config: dict, seed, t0: float,
              outputs: list[str]) -> None:
    man = {
        "command": command,
        "config": config,
        "seed": seed,
        "artifact_version": __version__,
        "wall_time_s": time.time() - t0,
        "outputs": outputs,
    }
    _atomic_write(out_dir / f"manifest_{command}.json",
                  lambda fh: json.dump(man, fh, indent=2, default=str))


def _n_workers() -> int:
    try:
        return max(1, int(os.environ.get("CRITSHE_THREADS", "1")))
    except ValueError:
        return 1


def _load_config(path: str) -> dict:
    p = Path(path)
    text = p.read_text()
    if p.suffix.lower() == ".json":
        return json.loads(text)
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


def _parse_tau_grid(spec: str) -> np.ndarray:
    # e.g. log:1e-3:10:50 or lin:0:1:20
    try:
        kind, lo, hi, n = spec.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
        if kind == "log":
            return np.geomspace(lo, hi, n)
        if kind == "lin":
            return np.linspace(lo, hi, n)
    except ValueError:
        pass
    raise DomainError(f"bad grid spec {spec!r} (want log:lo:hi:n or lin:lo:hi:n)")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_kernels(args) -> int:
    t0 = time.time()
    if args.beta <= 0:
        print(f"error: --beta must be positive, got {args.beta}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out)
    taus = _parse_tau_grid(args.tau_grid)
    kernel = dbg.SBetaKernel.build(args.beta)
    outputs = []

    rows = [(float(t), "", dbg.s_beta(kernel, float(t))) for t in taus]
    _write_csv(out_dir / "sbeta.csv", ["tau", "x", "value"], rows)
    outputs.append("sbeta.csv")

    if args.mg:
        g = dbg.GaussianInitialData(1.0, 1.0)
        xs = np.linspace(0.0, 3.0, 16)
        rows = [(args.mg_time, float(x), dbg.m_g(kernel, g, (float(x), 0.0),
                                                 args.mg_time)) for x in xs]
        _write_csv(out_dir / "mg.csv", ["t", "x", "value"], rows)
        outputs.append("mg.csv")
    if args.k1:
        x0 = dbg.constant_initial(1.0)
        xs = np.linspace(0.0, 3.0, 16)
        rows = [(args.mg_time, float(x), dbg.K1(kernel, x0, (float(x), 0.0),
                                                args.mg_time)) for x in xs]
        _write_csv(out_dir / "k1.csv", ["s", "x", "value"], rows)
        outputs.append("k1.csv")
    if args.pbeta:
        xs = np.linspace(0.05, 2.0, 16)
        rows = [(args.mg_time, float(x),
                 dbg.p_beta_kernel(kernel, args.mg_time, (float(x), 0.0),
                                   (0.5, 0.0))) for x in xs]
        _write_csv(out_dir / "pbeta.csv", ["t", "x", "value"], rows)
        outputs.append("pbeta.csv")

    _manifest(out_dir, "kernels", vars(args), None, t0, outputs)
    print(f"kernels: wrote {', '.join(outputs)} in {out_dir}")
    return EXIT_OK


def _build_initial(spec) -> dbg.InitialData:
    if isinstance(spec, (int, float)):
        return dbg.constant_initial(float(spec))
    kind = spec.get("type", "constant")
    if kind == "constant":
        return dbg.constant_initial(float(spec.get("value", 1.0)))
    if kind == "gaussian":
        return dbg.GaussianInitialData(float(spec.get("amp", 1.0)),
                                       float(spec.get("sigma2", 1.0)),
                                       tuple(spec.get("center", (0.0, 0.0))))
    raise DomainError(f"unknown x0 type {kind!r}")


def _sim_config(conf: dict) -> sim.SimConfig:
    name = conf.get("mollifier", "bump")
    if name.endswith(".csv"):
        data = np.loadtxt(name, delimiter=",", skiprows=1)
        moll = mo.mollifier_from_profile(data[:, 0], data[:, 1])
        phi = mo.build_phi(moll)
    else:
        moll = mo.mollifier_by_name(name)
        phi = mo.cached_phi(name)
    params = mo.critical_params(phi, float(conf["eps"]),
                                float(conf.get("lambda", 0.0)))
    return sim.SimConfig(
        box_size=float(conf["box_size"]), grid_n=int(conf["grid_n"]),
        dt=float(conf["dt"]), T=float(conf["T"]), params=params,
        mollifier=moll, phi=phi, x0=_build_initial(conf.get("x0", 1.0)),
        n_replicas=int(conf.get("n_replicas", 2)), seed=int(conf.get("seed", 1)),
        record_times=tuple(conf.get("record_times", [float(conf["T"])])))


def cmd_simulate(args) -> int:
    t0 = time.time()
    conf = _load_config(args.config)
    out_dir = Path(args.out)
    try:
        cfg = _sim_config(conf)
        cfg.validate()
    except sim.GateViolation as e:
        print(f"gate violation: {e}", file=sys.stderr)
        return EXIT_GATE

    workers = _n_workers()
    if workers > 1:
        with cf.ThreadPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(lambda rid: sim.run_replica(cfg, rid),
                                 range(cfg.n_replicas)))
    else:
        reps = sim.simulate(cfg)

    outputs = []
    binary = conf.get("output", "csv") == "binary"
    for snap in reps[0]:
        stem = f"snapshot_t{snap.t:g}"
        if binary:
            path = out_dir / f"{stem}.npy"
            out_dir.mkdir(parents=True, exist_ok=True)
            np.save(path, snap.values)
            sidecar = {"grid_n": cfg.grid_n, "L": cfg.box_size, "t": snap.t,
                       "seed": cfg.seed, "eps": cfg.params.eps,
                       "lambda": cfg.params.lam}
            _atomic_write(out_dir / f"{stem}.json",
                          lambda fh, sc=sidecar: json.dump(sc, fh, indent=2))
            outputs += [f"{stem}.npy", f"{stem}.json"]
        else:
            n = cfg.grid_n
            rows = ((i, j, snap.values[i, j]) for i in range(n) for j in range(n))
            _write_csv(out_dir / f"{stem}.csv",
                       ["x_index", "y_index", "value"], rows)
            outputs.append(f"{stem}.csv")

    est_rows = []
    for idx, t in enumerate(sorted({s.t for s in reps[0]})):
        finals = [rep[idx] for rep in reps]
        mean_field = float(np.mean([s.values.mean() for s in finals]))
        est_rows.append((f"mean_field_t{t:g}", mean_field, "", len(reps)))
        if len(reps) >= 2:
            m2 = sim.moment2_estimator(finals, cfg, (0, 0))
            est_rows.append((f"moment2_t{t:g}", m2.mean, m2.std_err, m2.n_samples))
        neg = float(np.mean([np.mean(s.values < 0) for s in finals]))
        est_rows.append((f"negative_fraction_t{t:g}", neg, "", len(reps)))
    _write_csv(out_dir / "estimators.csv", ["name", "mean", "stderr", "n"],
               est_rows)
    outputs.append("estimators.csv")
    _manifest(out_dir, "simulate", conf, cfg.seed, t0, outputs)
    print(f"simulate: {cfg.n_replicas} replicas, wrote {len(outputs)} files in {out_dir}")
    return EXIT_OK


def cmd_duality(args) -> int:
    t0 = time.time()
    out_dir = Path(args.out)
    try:
        phi = mo.cached_phi(args.mollifier)
        params = mo.critical_params(phi, args.eps, getattr(args, "lambda"))
        substep = args.delta if args.delta else args.eps ** 2 / 10.0
        cfg = du.PathConfig(n_paths=args.paths, substep=substep, horizon=args.t,
                            params=params, phi=phi, seed=args.seed)
        cfg.validate()
    except DomainError as e:
        print(f"gate violation: {e}", file=sys.stderr)
        return EXIT_GATE
    pts = tuple((0.0, 0.0) for _ in range(args.n)) if not args.points else \
        tuple(tuple(map(float, p.split(","))) for p in args.points.split(";"))
    req = du.MomentRequest(args.n, pts, args.t, dbg.constant_initial(1.0))
    est = du.n_point_moment(req, cfg)
    echo = json.dumps({"n": args.n, "eps": args.eps,
                       "lambda": getattr(args, "lambda"), "t": args.t,
                       "paths": args.paths, "seed": args.seed,
                       "substep": substep, "points": pts}, default=str)
    _write_csv(out_dir / "duality.csv", ["estimate", "stderr", "n", "config"],
               [(est.mean, est.std_err, est.n_samples, echo)])
    _manifest(out_dir, "duality", json.loads(echo), args.seed, t0,
              ["duality.csv"])
    print(f"duality: E[prod X] = {est.mean:.6g} +- {est.std_err:.3g} "
          f"(n={est.n_samples})")
    return EXIT_OK


def cmd_verify(args) -> int:
    t0 = time.time()
    out_dir = Path(args.out)
    try:
        names = acceptance.SUITES[args.suite]
    except KeyError:
        print(f"error: unknown suite {args.suite!r}; choose from "
              f"{sorted(acceptance.SUITES)}", file=sys.stderr)
        return EXIT_USAGE
    workers = _n_workers()
    if workers > 1:
        with cf.ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(acceptance.run_criterion, names))
    else:
        results = [acceptance.run_criterion(name) for name in names]
    rows = [(r.name, "pass" if r.passed else "fail", r.residual, r.tolerance,
             r.seconds, r.details) for r in results]
    _write_csv(out_dir / f"verify_{args.suite}.csv",
               ["criterion", "status", "residual", "tolerance", "seconds",
                "details"], rows)
    _manifest(out_dir, f"verify_{args.suite}", {"suite": args.suite}, None, t0,
              [f"verify_{args.suite}.csv"])
    n_fail = sum(not r.passed for r in results)
    print(f"verify[{args.suite}]: {len(results) - n_fail}/{len(results)} passed")
    return EXIT_OK if n_fail == 0 else EXIT_ACCEPT


def cmd_report(args) -> int:
    d = Path(args.dir)
    rows = []
    for p in sorted(d.glob("verify_*.csv")):
        with open(p, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append((p.name, rec["criterion"], rec["status"],
                             rec["residual"], rec["tolerance"]))
    for p in sorted(d.glob("manifest_*.json")):
        man = json.loads(p.read_text())
        rows.append((p.name, man["command"], "ran",
                     f"{man['wall_time_s']:.1f}s", ""))
    if not rows:
        print(f"report: nothing found in {d}")
        return EXIT_OK
    _write_csv(d / "report_summary.csv",
               ["source", "item", "status", "value", "tolerance"], rows)
    for row in rows:
        print("  ".join(str(v) for v in row))
    print(f"report: wrote {d / 'report_summary.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _Parser(prog="critshe",
                     description="Numerical laboratory for the 2D SHE at "
                                 "critical coupling")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    pk = sub.add_parser("kernels", help="tabulate delta-Bose kernels to CSV")
    pk.add_argument("--beta", type=float, required=True)
    pk.add_argument("--tau-grid", default="log:1e-3:10:50")
    pk.add_argument("--mg", action="store_true", help="also tabulate m_g")
    pk.add_argument("--k1", action="store_true", help="also tabulate K1")
    pk.add_argument("--pbeta", action="store_true", help="also tabulate the pair kernel")
    pk.add_argument("--mg-time", type=float, default=0.5)
    pk.add_argument("--out", default="out")
    pk.set_defaults(func=cmd_kernels)

    ps = sub.add_parser("simulate", help="run the lattice SHE simulator")
    ps.add_argument("--config", required=True, help="TOML or JSON config")
    ps.add_argument("--out", default="out")
    ps.set_defaults(func=cmd_simulate)

    pd = sub.add_parser("duality", help="Feynman-Kac moment estimate")
    pd.add_argument("--n", type=int, required=True)
    pd.add_argument("--eps", type=float, required=True)
    pd.add_argument("--lambda", type=float, default=0.0)
    pd.add_argument("--t", type=float, required=True)
    pd.add_argument("--paths", type=int, required=True)
    pd.add_argument("--seed", type=int, default=1)
    pd.add_argument("--delta", type=float, default=None,
                    help="path substep (default eps^2/10)")
    pd.add_argument("--points", default=None,
                    help="start points 'x1,y1;x2,y2;...' (default: all origin)")
    pd.add_argument("--mollifier", default="bump")
    pd.add_argument("--out", default="out")
    pd.set_defaults(func=cmd_duality)

    pv = sub.add_parser("verify", help="run an acceptance suite")
    pv.add_argument("--suite", default="all",
                    choices=sorted(acceptance.SUITES.keys()))
    pv.add_argument("--out", default="out")
    pv.set_defaults(func=cmd_verify)

    pr = sub.add_parser("report", help="summarize manifests and verify CSVs")
    pr.add_argument("--dir", default="out")
    pr.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except sim.GateViolation as e:
        print(f"gate violation: {e}", file=sys.stderr)
        return EXIT_GATE
    except DomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
