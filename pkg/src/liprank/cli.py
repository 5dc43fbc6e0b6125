"""Command-line entry points: enlarge, smooth, and pipeline subcommands."""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .enlargement import EnlargementError, enlarge
from .geometry.norms import Norm
from .geometry.sets import erode, load_set
from .interpolation import MeshError
from .pipeline import ScheduleError, run_experiment
from .smoothing import SmoothedFunction, default_nodes_per_axis


def _builtin_function(spec: str, s, norm):
    """Function ids for the smooth subcommand: dist:<coords>, coord:<j>,
    maxaffine:<seed>."""
    kind, _, arg = spec.partition(":")
    if kind == "dist":
        p = np.array([float(v) for v in arg.split(",")])
        base = float(norm((s.x0 - p)[None, :])[0])
        return lambda X: norm(np.atleast_2d(X) - p) - base, 1.0
    if kind == "coord":
        j = int(arg)
        e = np.zeros(s.dim)
        e[j] = 1.0
        sc = float(norm.dual(e[None, :])[0])
        return lambda X: (np.atleast_2d(X)[:, j] - s.x0[j]) / sc, 1.0
    if kind == "maxaffine":
        rng = np.random.default_rng(int(arg or 0))
        A = rng.normal(size=(3, s.dim))
        A /= max(float(norm.dual(A).max()), 1e-12)
        b = rng.uniform(-1, 1, size=3)
        base = float(np.max(A @ s.x0 + b))
        return (lambda X: np.max(np.atleast_2d(X) @ A.T + b, axis=1) - base), 1.0
    raise SystemExit(f"unknown builtin function id {spec!r}")


def _cmd_enlarge(args) -> int:
    s = load_set(args.set)
    if args.resolution:
        s.h_geo = min(s.h_geo, args.resolution)
    norm = Norm.p_norm(args.p, s.dim)
    try:
        enl = enlarge(s, args.xi, norm, strategy=args.strategy,
                      resolution=args.resolution or None)
    except EnlargementError as exc:
        print(f"enlargement rejected at stage {exc.stage!r}: {exc}", file=sys.stderr)
        if exc.witness is not None:
            print(f"witness: {exc.witness}", file=sys.stderr)
        return 2
    with open(args.out, "w") as fh:
        json.dump(enl.to_dict(), fh, indent=1)
    c = enl.to_dict()["certificates"]
    print(f"strategy={enl.strategy}  Lip(Psi)={c['lip_measured']:.6f} "
          f"(bound {c['lip_bound']:.4f})  disp={c['disp_measured']:.6f} "
          f"(bound {c['disp_bound']:.4f})  margin={c['margin']:.6f}")
    print(f"wrote {args.out}")
    return 0


def _cmd_smooth(args) -> int:
    s = load_set(args.set)
    norm = Norm.p_norm(args.p, s.dim)
    f, lip = _builtin_function(args.f, s, norm)
    sf = SmoothedFunction(f, args.r, s.x0, s.dim,
                          nodes_per_axis=args.quad or default_nodes_per_axis(s.dim))
    region = erode(s, args.r)
    pts = np.concatenate([s.interior_samples, s.x0[None, :]])
    pts = pts[region.contains(pts)]
    if len(pts) == 0:
        print("no sample points at depth r; shrink r", file=sys.stderr)
        return 2
    fv = np.asarray(f(pts), dtype=float)
    sv = sf(pts)
    bound = 2.0 * lip * norm.K * args.r
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{k}" for k in range(s.dim)] + ["f", "smoothed", "gap", "bound"])
        for p, a, b in zip(pts, fv, sv):
            w.writerow(list(p) + [a, b, abs(b - a), bound])
    print(f"wrote {args.out} ({len(pts)} samples; max gap "
          f"{np.abs(sv - fv).max():.6f} vs bound {bound:.6f})")
    return 0


def _cmd_pipeline(args) -> int:
    try:
        report = run_experiment(args.config)
    except (EnlargementError, MeshError, ScheduleError) as exc:
        stage = getattr(exc, "stage", exc.__class__.__name__)
        print(f"pipeline failed at stage {stage!r}: {exc}", file=sys.stderr)
        witness = getattr(exc, "witness", None)
        if witness is not None:
            print(f"witness: {witness}", file=sys.stderr)
        return 2
    for row in report.rows:
        print(f"n={row['n']}  rank={row['rank']}  "
              f"norm {row['norm_measured']:.4f}<={row['norm_bound']:.4f}  "
              f"err {row['err_measured']:.4f}<={row['err_bound']:.4f}  "
              f"{'pass' if row['pass'] else 'FAIL'}")
    print(f"wrote {report.paths['csv']} and {report.paths['json']}")
    return 0 if report.ok else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="liprank",
                                 description="finite-rank Lipschitz approximation toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    ep = sub.add_parser("enlarge", help="build an enlargement with certificates")
    ep.add_argument("--set", required=True, help="set definition JSON file")
    ep.add_argument("--xi", type=float, required=True)
    ep.add_argument("--strategy", choices=["auto", "fastpath", "general"], default="auto")
    ep.add_argument("--resolution", type=float, default=0.0)
    ep.add_argument("--p", type=float, default=2.0, help="working p-norm")
    ep.add_argument("--out", default="enlargement.json")
    ep.set_defaults(fn=_cmd_enlarge)

    sp = sub.add_parser("smooth", help="smooth a builtin function and dump samples")
    sp.add_argument("--set", required=True)
    sp.add_argument("--r", type=float, required=True)
    sp.add_argument("--f", required=True, help="dist:<coords> | coord:<j> | maxaffine:<seed>")
    sp.add_argument("--quad", type=int, default=0, help="quadrature nodes per axis")
    sp.add_argument("--p", type=float, default=2.0)
    sp.add_argument("--out", default="samples.csv")
    sp.set_defaults(fn=_cmd_smooth)

    pp = sub.add_parser("pipeline", help="run the full experiment from a config")
    pp.add_argument("--config", required=True)
    pp.set_defaults(fn=_cmd_pipeline)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
