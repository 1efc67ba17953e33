"""Command-line front end.

Every subcommand writes its outputs plus ``<output>.manifest.json`` recording
the command, parameters, seeds and output paths. Outputs are deterministic
in the arguments; the timestamp lives only in the manifest.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from . import analysis as an
from . import dyadic as dy
from . import generators as gen
from . import harmonic as hm
from . import walk as wk
from .environment import atomic_write_text, dumps_json, load_config, save_config, validate
from .errors import ConfigurationError, FormatError, GeometryError, SolverError, WindowTooSmall
from .geometry import Square, TimedCurve, dcmp, dcmp_loc

THREADS_ENV = "SCALEWALK_THREADS"

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _manifest(args, outputs: list) -> None:
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    man = {
        "command": args.command,
        "parameters": params,
        "seeds": {k: v for k, v in params.items() if "seed" in k},
        "outputs": [os.path.abspath(p) for p in outputs],
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    atomic_write_text(outputs[0] + ".manifest.json", json.dumps(man, indent=1, sort_keys=True, default=str) + "\n")


def _region(args, config) -> Square:
    if args.region is None:
        w = config.window
        return Square(w.x + w.side / 4, w.y + w.side / 4, w.side / 2)
    x, y, s = args.region
    return Square(x, y, s)


def _sigma(vals) -> np.ndarray:
    a, b, c = vals
    return np.array([[a, b], [b, c]], dtype=float)


# ----------------------------------------------------------------------
# subcommands


def cmd_gen(args):
    v = args.variant
    if v == "grid":
        cfg = gen.gen_grid(_need(args, "n"), args.law, args.shift, args.seed)
    elif v == "split_grid":
        cfg = gen.gen_split_grid(_need(args, "k"))
    elif v == "split_path":
        cfg = gen.gen_split_path(_need(args, "n"))
    elif v == "percolation":
        cfg = gen.gen_percolation_faces(_need(args, "p"), _need(args, "n"), args.seed)
    elif v == "long_range":
        cfg = gen.gen_long_range(_need(args, "N"), args.law, _need(args, "n"), args.seed)
    elif v == "big_cell":
        cfg = gen.gen_big_cell_grid(_need(args, "n"), args.block, args.law, args.seed)
    else:
        raise UsageError(f"unknown variant {v}")
    if args.vertex_cells:
        cfg = gen.vertex_cells(cfg)
    save_config(cfg, args.output)
    _manifest(args, [args.output])
    return EXIT_OK


def _need(args, name):
    v = getattr(args, name)
    if v is None:
        raise UsageError(f"--{name} is required for variant {args.variant}")
    return v


def cmd_validate(args):
    cfg = load_config(args.env)
    rep = validate(cfg, check_simple=args.check_simple)
    for issue in rep.issues:
        print(issue)
    print("ok" if rep.ok else "invalid")
    return EXIT_OK if rep.ok else EXIT_INVALID


def cmd_embed(args):
    cfg = load_config(args.env)
    if args.kind == "phi0":
        emb = hm.phi0(cfg)
    elif args.kind == "phi_m":
        d = dy.sample_uniform_2d(args.dyadic_seed)
        emb = hm.phi_m(cfg, d, args.m, _region(args, cfg), tol=args.tol)
        emb.meta = {}
    else:
        d = dy.sample_uniform_2d(args.dyadic_seed) if args.m else None
        emb, _ = hm.corrector_approx(cfg, _region(args, cfg), d, args.m, tol=args.tol)
        emb.meta = {}
    hm.save_embedding(emb, args.output)
    outs = [args.output]
    if args.svg:
        an.write_svg(args.svg, cfg, embedding=emb)
        outs.append(args.svg)
    _manifest(args, outs)
    return EXIT_OK


def cmd_energy(args):
    cfg = load_config(args.env)
    d = dy.sample_uniform_2d(args.dyadic_seed)
    masses = hm.ladder(args.m1, args.j_max)
    rep = hm.energy_decomposition(cfg, d, _region(args, cfg), masses, tol=args.tol)
    e0 = hm.dirichlet_energy(cfg, cfg.centroid)
    rows = []
    for m in masses:
        e = hm.dirichlet_energy(cfg, hm.phi_m(cfg, d, m, _region(args, cfg), tol=args.tol).values)
        rows.append((m, e, e0, rep.increment_energies[masses.index(m)]))
    rows.append(("sum_of_increments", "", "", rep.sum_increments))
    rows.append(("energy_phiM_minus_phi0", "", "", rep.total_energy))
    an.write_csv(args.output, ["m", "energy_phi_m", "energy_phi0", "increment_energy"], rows)
    _manifest(args, [args.output])
    return EXIT_OK


def cmd_walk(args):
    cfg = load_config(args.env)
    if args.horizon is None and args.steps is None:
        raise UsageError("walk needs --horizon or --steps")
    trs = wk.run_walks(cfg, tuple(args.start), args.walks, horizon=args.horizon, n_steps=args.steps, seed=args.seed)
    rows = []
    for w, tr in enumerate(trs):
        for j, (c, t) in enumerate(zip(tr.cells, tr.jump_times)):
            rows.append((w, j, int(c), float(t)))
    an.write_csv(args.output, ["walk", "jump", "cell", "tau"], rows)
    _manifest(args, [args.output])
    return EXIT_OK


def cmd_sigma(args):
    cfg = load_config(args.env)
    emb = hm.load_embedding(args.embedding) if args.embedding else hm.phi0(cfg)
    est = wk.estimate_sigma(cfg, emb, args.walks, args.horizon, seed=args.seed, start=tuple(args.start),
                            threads=args.threads)
    s = est.stderr
    an.write_csv(args.output,
                 ["c_10", "c_01", "c_diag", "rho", "stderr_c_10", "stderr_c_01", "stderr_c_diag", "stderr_rho",
                  "n_used", "n_discarded", "horizon", "sigma_assembled"],
                 [(est.c_10, est.c_01, est.c_diag, est.rho, s["c_10"], s["c_01"], s["c_diag"], s["rho"], est.n_used,
                   est.n_discarded, float(args.horizon), est.sigma is not None)])
    for f in est.flags:
        print(f, file=sys.stderr)
    _manifest(args, [args.output])
    return EXIT_OK


def cmd_recurrence(args):
    cfg = load_config(args.env)
    d = dy.sample_uniform_2d(args.dyadic_seed)
    rows = wk.recurrence_resistance(cfg, d, args.r_max, k=args.k, harmonic=args.harmonic)
    an.write_csv(args.output, ["r", "energy", "continuum", "resistance_lower", "resistance"],
                 [(r.r, r.energy, r.continuum, r.resistance_lower, "" if r.resistance is None else r.resistance)
                  for r in rows])
    _manifest(args, [args.output])
    return EXIT_OK


def cmd_exit_law(args):
    cfg = load_config(args.env)
    x, y = args.center
    sq = Square(x - args.side / 2, y - args.side / 2, args.side)
    start = tuple(args.start) if args.start else (x, y)
    rep = wk.exit_law_prokhorov(cfg, start, sq, _sigma(args.sigma), args.samples, seed=args.seed, tol=args.tol)
    an.write_csv(args.output, ["side", "samples", "prokhorov"], [(args.side, args.samples, rep.distance)])
    _manifest(args, [args.output])
    return EXIT_OK


def cmd_transport(args):
    if args.rule == "identity":
        rule, sampler = dy.identity_rule(), dy.shifted_grid_sampler(args.n, args.law)
    elif args.rule == "neighbor":
        rule, sampler = dy.neighbor_rule(), dy.shifted_grid_sampler(args.n, args.law)
    else:
        rule = dy.neighbor_rule((0.0, 1.0), normalized=False)
        sampler = dy.typical_point_sampler(gen.gen_split_grid(args.k))
    rep = dy.mass_transport_check(sampler, rule, args.envs, args.points, args.radius, seed=args.seed)
    an.write_csv(args.output, ["rule", "out_mean", "in_mean", "out_se", "in_se", "z", "n_envs", "n_points", "exact"],
                 [(rule.name, rep.out_mean, rep.in_mean, rep.out_se, rep.in_se, rep.z_score, rep.n_envs,
                   rep.n_points, rep.exact)])
    _manifest(args, [args.output])
    return EXIT_OK


def read_curve(path) -> TimedCurve:
    """Curve CSV: header ``t,x,y`` then one row per vertex."""
    with open(path) as fh:
        head = fh.readline().strip().split(",")
        if head != ["t", "x", "y"]:
            raise FormatError(f"{path}: expected header t,x,y")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return TimedCurve(data[:, 0], data[:, 1:3])


def cmd_dcmp(args):
    a, b = read_curve(args.a), read_curve(args.b)
    if args.local is not None:
        val, tail = dcmp_loc(a, b, r_max=args.local)
        rows = [("dcmp_loc", val, tail)]
    else:
        rows = [("dcmp", dcmp(a, b), 0.0)]
    an.write_csv(args.output, ["metric", "value", "tail_bound"], rows)
    _manifest(args, [args.output])
    return EXIT_OK


def cmd_report(args):
    """Index every output under a directory with its SHA-256."""
    entries = []
    for root, _, files in os.walk(args.dir):
        for f in sorted(files):
            p = os.path.join(root, f)
            if f.endswith(".manifest.json") or os.path.abspath(p) == os.path.abspath(args.output):
                continue
            with open(p, "rb") as fh:
                entries.append((os.path.relpath(p, args.dir), hashlib.sha256(fh.read()).hexdigest()))
    entries.sort()
    man = []
    for rel, _ in entries:
        mp = os.path.join(args.dir, rel + ".manifest.json")
        if os.path.exists(mp):
            with open(mp) as fh:
                man.append({"output": rel, "command": json.load(fh).get("command")})
    atomic_write_text(args.output, dumps_json({"files": [{"path": r, "sha256": h} for r, h in entries],
                                                "runs": man}) + "\n")
    _manifest(args, [args.output])
    return EXIT_OK


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scalewalk", description="Random walks on planar cell configurations.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker threads for walk batches (default ${THREADS_ENV} or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an environment")
    g.add_argument("--variant", required=True,
                   choices=["grid", "split_grid", "split_path", "percolation", "long_range", "big_cell"])
    g.add_argument("--n", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--p", type=float)
    g.add_argument("--N", type=float)
    g.add_argument("--block", type=int, default=16)
    g.add_argument("--law", default="constant")
    g.add_argument("--shift", action="store_true")
    g.add_argument("--vertex-cells", action="store_true")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("validate", help="check an environment file")
    v.add_argument("--env", required=True)
    v.add_argument("--check-simple", action="store_true")
    v.set_defaults(func=cmd_validate)

    def region_args(q):
        q.add_argument("--region", type=float, nargs=3, metavar=("X", "Y", "SIDE"))
        q.add_argument("--dyadic-seed", type=int, default=0)
        q.add_argument("--tol", type=float, default=1e-10)

    e = sub.add_parser("embed", help="compute an embedding")
    e.add_argument("--env", required=True)
    e.add_argument("--kind", choices=["phi0", "phi_m", "corrector"], default="phi0")
    e.add_argument("--m", type=float)
    e.add_argument("--svg")
    region_args(e)
    e.add_argument("-o", "--output", required=True)
    e.set_defaults(func=cmd_embed)

    en = sub.add_parser("energy", help="energy decomposition along a mass ladder")
    en.add_argument("--env", required=True)
    en.add_argument("--m1", type=float, default=1.0)
    en.add_argument("--j-max", type=int, default=5)
    region_args(en)
    en.add_argument("-o", "--output", required=True)
    en.set_defaults(func=cmd_energy)

    w = sub.add_parser("walk", help="simulate walk traces")
    w.add_argument("--env", required=True)
    w.add_argument("--start", type=float, nargs=2, default=[0.0, 0.0])
    w.add_argument("--walks", type=int, default=1)
    w.add_argument("--horizon", type=float)
    w.add_argument("--steps", type=int)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("-o", "--output", required=True)
    w.set_defaults(func=cmd_walk)

    s = sub.add_parser("sigma", help="estimate the limiting covariance")
    s.add_argument("--env", required=True)
    s.add_argument("--embedding")
    s.add_argument("--start", type=float, nargs=2, default=[0.0, 0.0])
    s.add_argument("--walks", type=int, required=True)
    s.add_argument("--horizon", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_sigma)

    r = sub.add_parser("recurrence", help="energies of logarithmic test functions")
    r.add_argument("--env", required=True)
    r.add_argument("--r-max", type=int, required=True)
    r.add_argument("--k", type=int, default=0)
    r.add_argument("--harmonic", action="store_true")
    r.add_argument("--dyadic-seed", type=int, default=0)
    r.add_argument("-o", "--output", required=True)
    r.set_defaults(func=cmd_recurrence)

    x = sub.add_parser("exit-law", help="Prokhorov distance of walk and Brownian exit laws")
    x.add_argument("--env", required=True)
    x.add_argument("--side", type=float, required=True)
    x.add_argument("--center", type=float, nargs=2, default=[0.0, 0.0])
    x.add_argument("--start", type=float, nargs=2)
    x.add_argument("--sigma", type=float, nargs=3, default=[2.0, 0.0, 2.0], metavar=("S11", "S12", "S22"))
    x.add_argument("--samples", type=int, default=10000)
    x.add_argument("--tol", type=float, default=1e-4)
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("-o", "--output", required=True)
    x.set_defaults(func=cmd_exit_law)

    t = sub.add_parser("transport-check", help="mass-transport balance of a transport rule")
    t.add_argument("--rule", choices=["identity", "neighbor", "broken"], required=True)
    t.add_argument("--envs", type=int, default=1000)
    t.add_argument("--points", type=int, default=1000)
    t.add_argument("--radius", type=float, default=4.0)
    t.add_argument("--n", type=int, default=16)
    t.add_argument("--k", type=int, default=2)
    t.add_argument("--law", default="constant")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("-o", "--output", required=True)
    t.set_defaults(func=cmd_transport)

    dc = sub.add_parser("dcmp", help="distance between two curve files")
    dc.add_argument("a")
    dc.add_argument("b")
    dc.add_argument("--local", type=float, metavar="R_MAX")
    dc.add_argument("-o", "--output", required=True)
    dc.set_defaults(func=cmd_dcmp)

    rp = sub.add_parser("report", help="index the outputs of a run directory")
    rp.add_argument("--dir", required=True)
    rp.add_argument("-o", "--output", required=True)
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"scalewalk: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, GeometryError, ConfigurationError, SolverError, WindowTooSmall, OSError, ValueError) as e:
        print(f"scalewalk: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
