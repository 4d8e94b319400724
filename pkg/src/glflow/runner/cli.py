"""Command line entry point: ``glflow run|suite|analyze|inspect|keys``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ..grid import set_workers


def _threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("GLFLOW_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise SystemExit(f"GLFLOW_THREADS must be an integer, got {env!r}")
    return None


def cmd_run(args) -> int:
    from .config import RunConfig
    from .execute import resume, run
    out = Path(args.out)
    if args.resume:
        rep = resume(args.resume, out, stop_after=args.stop_after)
    else:
        if not args.config:
            raise SystemExit("run needs --config or --resume")
        cfg = RunConfig.from_file(args.config)
        if args.seed is not None:
            cfg = cfg.override(seed=args.seed)
        rep = run(cfg, out, stop_after=args.stop_after)
    if rep is None:
        print(f"halted; checkpoint in {out}")
        return 0
    sys.stdout.write(rep.summary_text())
    return 0 if rep.all_pass else 1


def cmd_suite(args) -> int:
    from .suites import suite
    rep = suite(args.name, args.out, workers=args.workers, config_dir=args.config_dir)
    sys.stdout.write(rep.summary_text())
    return 0 if rep.all_pass else 1


def cmd_analyze(args) -> int:
    import numpy as np

    from ..energy import total_energy
    from ..phase import hodge_decompose
    from ..snapshot import read_snapshot
    from ..vortex import detect_vortices, extract_filament

    rows = ["file,t,energy,sup_modulus,defects,degree_sum,hodge_residual"]
    for path in args.snapshots:
        f = read_snapshot(path)
        if f.grid.dim == 2:
            vs = detect_vortices(f)
            n, deg = len(vs), sum(v.degree for v in vs)
            hodge = f"{hodge_decompose(f).residual:.6g}"
        else:
            fs = extract_filament(f)
            n, deg, hodge = len(fs), sum(fl.degree for fl in fs.filaments), ""
        rows.append(f"{path},{f.t:.17g},{total_energy(f):.17g},{float(np.max(np.abs(f.values))):.17g},"
                    f"{n},{deg},{hodge}")
    text = "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "analysis.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_inspect(args) -> int:
    from ..snapshot import MAGIC as SNAP
    from ..snapshot import read_snapshot
    from . import checkpoint
    data = Path(args.path).read_bytes()
    if data.startswith(checkpoint.MAGIC):
        state, f, _ = checkpoint.loads(data)
        print(f"checkpoint version {checkpoint.VERSION}")
        for k in ("segment", "t", "seed", "config_sha256"):
            print(f"{k}: {state[k]}")
    elif data.startswith(SNAP):
        f = read_snapshot(data)
    else:
        raise SystemExit(f"{args.path}: neither a snapshot nor a checkpoint")
    g = f.grid
    print(f"dim {g.dim}  n {' x '.join(map(str, g.n))}  h {g.h:.17g}  epsilon {g.epsilon:.17g}  t {f.t:.17g}")
    return 0


def cmd_keys(args) -> int:
    from .config import describe
    print(describe())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="glflow", description="Parabolic Ginzburg-Landau laboratory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--threads", type=int, default=None, help="FFT workers (env GLFLOW_THREADS)")

    r = sub.add_parser("run", help="execute one configured run")
    r.add_argument("--config", help="config file")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--resume", help="continue from a checkpoint file")
    r.add_argument("--stop-after", type=int, default=None, help="halt after N segments")
    common(r)
    r.set_defaults(fn=cmd_run)

    s = sub.add_parser("suite", help="run a canonical suite")
    s.add_argument("name")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1, help="runs executed in parallel")
    s.add_argument("--config-dir", default=None, help="alternative suite config root")
    s.add_argument("--seed", type=int, default=None, help="unused; seeds live in the suite configs")
    common(s)
    s.set_defaults(fn=cmd_suite)

    a = sub.add_parser("analyze", help="diagnostics of saved snapshots")
    a.add_argument("snapshots", nargs="+")
    a.add_argument("--out", default=None)
    common(a)
    a.set_defaults(fn=cmd_analyze)

    i = sub.add_parser("inspect", help="print a snapshot or checkpoint header")
    i.add_argument("path")
    i.set_defaults(fn=cmd_inspect, threads=None)

    k = sub.add_parser("keys", help="list config keys")
    k.set_defaults(fn=cmd_keys, threads=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    set_workers(_threads(args))
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        # bad config, corrupt checkpoint or snapshot, unreadable file
        print(f"glflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
