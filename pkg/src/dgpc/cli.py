"""Command line entry point: ``dgpc run | resume | compare | oracle``."""

from __future__ import annotations

import argparse
import glob
import logging
import os
import sys

import numpy as np

from . import io
from .config import PRESETS, from_dict, parse_config
from .errors import ConfigError, SnapshotError

log = logging.getLogger("dgpc")


def _snapshot_path(out_dir, j):
    return os.path.join(out_dir, "snapshots", f"restart_{j:05d}.snap")


def _write_series(out_dir, result, append=False):
    path = os.path.join(out_dir, "series.csv")
    mode = "a" if append and os.path.exists(path) else "w"
    with open(path, mode) as fh:
        if mode == "w":
            fh.write("t,interval,mean_l2,variance_l1\n")
        for t, dt, m, v in zip(result.times, result.intervals, result.mean, result.variance):
            fh.write(f"{t!r},{dt!r},{float(np.sqrt(np.mean(m ** 2)))!r},{float(np.mean(v))!r}\n")


def _run_dgpc(cfg, out_dir, state=None, append=False):
    from .solver import run
    model = cfg.build_model()
    scfg = cfg.solver_config()
    os.makedirs(os.path.join(out_dir, "snapshots"), exist_ok=True)

    def on_restart(st, _result):
        if cfg.snapshots:
            io.write_snapshot(st, _snapshot_path(out_dir, st.j))

    result = run(model, scfg, state=state, on_restart=on_restart)
    for t, mom in result.moments.items():
        io.export_moments(os.path.join(out_dir, "moments"), t, mom, model.grid)
    _write_series(out_dir, result, append)
    log.info("dgpc: %d restarts, %.2f s", result.restarts, result.wall_time)
    return result


def _run_mc(cfg, out_dir):
    from .mc import mc_run
    model = cfg.build_model()
    res = mc_run(model, cfg.mc_config())
    for t, mom in res.moments.items():
        io.export_moments(os.path.join(out_dir, "moments"), t, mom, model.grid)
    log.info("mc: %d paths (%d excluded), %.2f s", res.n_used, res.excluded, res.wall_time)
    return res


def _run_exact(cfg, out_dir, npts=400):
    from .models.exact import centered_from_raw, exact_burgers_moments
    if cfg.model != "burgers":
        raise ConfigError("the exact oracle exists for Burgers only", ["model"])
    grid = cfg.grid()
    sigma = float(cfg.sigma)
    times = cfg.moment_times or [cfg.T]
    out = {}
    for t in times:
        raw = [exact_burgers_moments(cfg.nu, sigma, n, grid.x, t, npts) for n in range(1, 5)]
        m, var, c3, c4 = centered_from_raw(raw)
        mom = {"mean": m, "variance": var, "third": c3, "fourth": c4}
        mom.update({f"raw{n}": raw[n - 1] for n in range(1, 5)})
        io.export_moments(os.path.join(out_dir, "moments"), t, mom, grid,
                          names=io.MOMENT_NAMES + ("raw1", "raw2", "raw3", "raw4"))
        out[round(t, 12)] = mom
    return out


def cmd_run(args):
    cfg = parse_config(args.config, args.set or (), args.preset)
    out_dir = args.out or cfg.output
    os.makedirs(out_dir, exist_ok=True)
    io.write_manifest(out_dir, cfg.to_dict())
    if cfg.method == "dgpc":
        _run_dgpc(cfg, out_dir)
    elif cfg.method == "mc":
        _run_mc(cfg, out_dir)
    else:
        _run_exact(cfg, out_dir)
    print(out_dir)
    return 0


def cmd_resume(args):
    out_dir = args.dir
    manifest = io.read_manifest(out_dir)
    cfg = from_dict(manifest["config"])
    if cfg.method != "dgpc":
        raise ConfigError("only dgpc runs can be resumed", ["method"])
    snaps = sorted(glob.glob(os.path.join(out_dir, "snapshots", "restart_*.snap")))
    if args.snapshot:
        snaps = [args.snapshot]
    if not snaps:
        raise SnapshotError(f"no snapshots in {out_dir}")
    state = io.read_snapshot(snaps[-1])
    log.info("resuming from %s at t=%.6g", snaps[-1], state.t)
    _run_dgpc(cfg, out_dir, state=state, append=True)
    print(out_dir)
    return 0


def cmd_compare(args):
    a = io.load_moment_dir(os.path.join(args.a, "moments"))
    b = io.load_moment_dir(os.path.join(args.b, "moments"))
    rows = io.error_summary(a, b)
    if not rows:
        print("no common output times", file=sys.stderr)
        return 1
    out = args.out or os.path.join(args.a, "errors.csv")
    io.write_error_table(out, rows)
    print("t," + ",".join(io.MOMENT_NAMES))
    for r in rows:
        print(f"{r['t']}," + ",".join(f"{r.get(n, float('nan')):.3e}" for n in io.MOMENT_NAMES))
    return 0


def cmd_oracle(args):
    data = {"preset": "example3", "method": "exact", "T": args.t, "M": args.M}
    if args.nu is not None:
        data["nu"] = args.nu
    if args.sigma is not None:
        data["sigma"] = str(args.sigma)
    cfg = from_dict(data)
    out_dir = args.out
    io.write_manifest(out_dir, cfg.to_dict())
    _run_exact(cfg, out_dir, args.points)
    print(out_dir)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="dgpc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configuration (dgpc, mc or exact)")
    r.add_argument("config", nargs="?", help="YAML configuration file")
    r.add_argument("--preset", choices=None, help=f"named scenario: {', '.join(PRESETS)}[:variant]")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    r.add_argument("--out", help="output directory (default: config 'output')")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("resume", help="continue a dgpc run from its latest snapshot")
    s.add_argument("dir")
    s.add_argument("--snapshot", help="explicit snapshot file")
    s.set_defaults(func=cmd_resume)

    c = sub.add_parser("compare", help="relative errors of run A against reference run B")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    o = sub.add_parser("oracle", help="exact moments of Burgers with constant forcing")
    o.add_argument("--t", type=float, default=1.0)
    o.add_argument("--nu", type=float)
    o.add_argument("--sigma", type=float)
    o.add_argument("--M", type=int, default=128)
    o.add_argument("--points", type=int, default=400)
    o.add_argument("--out", default="oracle")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SnapshotError) as exc:
        fields = getattr(exc, "fields", None)
        print(f"error: {exc}" + (f" [{', '.join(fields)}]" if fields else ""), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
