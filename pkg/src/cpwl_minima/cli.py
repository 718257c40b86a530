"""Command-line interface.

Exit codes: 0 ok, 1 usage or input error, 2 shape mismatch, 3 max-min
consistency failure, 4 a sample on an activation boundary.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import gen_parabola, gen_vshape, get_loss, load_csv, save_csv
from .errors import ConsistencyError, CpwlError, MarginError, ShapeError
from .netbuild import CnnArch
from .network import load_network, save_network
from .partition import Partition, even_partition_1d, partition_1d, split_by_hyperplane
from .pipeline import run_pipeline
from .plot import render_svg
from .runtime import network_risk
from .verify import ProbeConfig, demonstrate_spurious, enumerate_patterns_1d

EXIT_OK, EXIT_USAGE, EXIT_SHAPE, EXIT_CONSISTENCY, EXIT_MARGIN = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _add_partition_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--boundaries", type=float, nargs="+", help="cut points on the line")
    g.add_argument("--groups", type=int, help="split distinct inputs into P runs of equal size")
    g.add_argument("--partition", help="partition JSON file")
    g.add_argument("--normal", type=float, nargs="+", help="hyperplane normal for a two-group split")
    p.add_argument("--offset", type=float, default=0.0, help="hyperplane offset (with --normal)")


def _add_arch_args(p):
    p.add_argument("--arch", choices=("fc", "cnn"), default="fc")
    p.add_argument("--patch", type=int, default=2)
    p.add_argument("--stride", type=int, default=2)
    p.add_argument("--pool", choices=("avg", "max"), default="avg")


def _partition(args, dataset) -> Partition:
    if args.boundaries is not None:
        return partition_1d(dataset, sorted(args.boundaries))
    if args.groups is not None:
        return even_partition_1d(dataset, args.groups)
    if args.partition is not None:
        part = Partition.from_dict(json.loads(Path(args.partition).read_text(encoding="utf-8")))
        part.validate(dataset.X)
        return part
    if args.normal is not None:
        return split_by_hyperplane(dataset, args.normal, args.offset)
    raise UsageError("give --boundaries, --groups, --partition or --normal")


def _arch(args):
    return None if args.arch == "fc" else CnnArch.single(args.patch, args.stride, args.pool)


def _check_partition_args(args):
    if args.boundaries is not None and len(set(args.boundaries)) != len(args.boundaries):
        raise UsageError(f"duplicate boundary in {args.boundaries}")


def cmd_gen(args) -> int:
    if args.vshape:
        ds = gen_vshape(args.n, args.dx, args.gap, args.seed)
    else:
        ds = gen_parabola(args.n, args.lo, args.hi)
    save_csv(ds, args.output)
    return EXIT_OK


def cmd_certify(args) -> int:
    _check_partition_args(args)
    ds = load_csv(args.data)
    loss = get_loss(args.loss)
    state = run_pipeline(ds, _partition(args, ds), loss, arch=_arch(args))
    cfg = ProbeConfig(args.trials, args.epsilon, args.seed)
    report = demonstrate_spurious(state, cfg)
    d = report.to_dict()
    d["config"] = {
        "data": {"n": ds.n, "dx": ds.dx, "dy": ds.dy},
        "loss": loss.name,
        "arch": args.arch,
        "groups": len(state.fits),
    }
    _write(args.output, json.dumps(d, indent=1, sort_keys=True) + "\n")
    if args.plot:
        Path(args.plot).write_text(render_svg(ds, state.predictor), encoding="utf-8")
    if args.output not in (None, "-"):
        print(report.verdict)
    return EXIT_OK


def cmd_enumerate(args) -> int:
    ds = load_csv(args.data)
    table = enumerate_patterns_1d(ds, args.pmax, get_loss(args.loss))
    _write(args.output, table.to_csv())
    summary = json.dumps(table.summary(), indent=1, sort_keys=True) + "\n"
    if args.summary:
        Path(args.summary).write_text(summary, encoding="utf-8")
    elif args.output not in (None, "-"):
        sys.stdout.write(summary)
    else:
        sys.stderr.write(summary)
    return EXIT_OK


def cmd_build(args) -> int:
    _check_partition_args(args)
    ds = load_csv(args.data)
    state = run_pipeline(ds, _partition(args, ds), get_loss(args.loss), arch=_arch(args))
    save_network(state.net, args.output)
    return EXIT_OK


def cmd_eval(args) -> int:
    net = load_network(args.model)
    ds = load_csv(args.data)
    res = network_risk(net, ds, get_loss(args.loss))
    if args.output:
        header = ",".join(f"yhat{k}" for k in range(ds.dy))
        rows = [",".join(repr(float(v)) for v in row) for row in np.atleast_2d(res.outputs)]
        Path(args.output).write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
    print(json.dumps({"risk": res.risk, "n": ds.n, "min_margin": float(np.min(res.margins))}, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cpwl-minima", description="Spurious local minima of ReLU networks, built and checked.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic dataset CSV")
    kind = g.add_mutually_exclusive_group(required=True)
    kind.add_argument("--parabola", action="store_true", help="y = x^2 on an even grid")
    kind.add_argument("--vshape", action="store_true", help="random dx-dimensional V-shaped target")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--lo", type=float, default=-1.0)
    g.add_argument("--hi", type=float, default=1.0)
    g.add_argument("--dx", type=int, default=4)
    g.add_argument("--gap", type=float, default=0.2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("certify", help="build, probe and try to refine")
    c.add_argument("-d", "--data", required=True)
    _add_partition_args(c)
    _add_arch_args(c)
    c.add_argument("--loss", default="mse")
    c.add_argument("--trials", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--epsilon", type=float, default=None, help="override the derived radius")
    c.add_argument("-o", "--output", default=None, help="report JSON (default stdout)")
    c.add_argument("--plot", default=None, help="write an SVG panel (dx = 1)")
    c.set_defaults(func=cmd_certify)

    e = sub.add_parser("enumerate", help="risk of every contiguous fitting pattern (dx = 1)")
    e.add_argument("-d", "--data", required=True)
    e.add_argument("--pmax", type=int, required=True)
    e.add_argument("--loss", default="mse")
    e.add_argument("-o", "--output", default=None, help="CSV table (default stdout)")
    e.add_argument("--summary", default=None, help="summary JSON path")
    e.set_defaults(func=cmd_enumerate)

    b = sub.add_parser("build", help="write the constructed network as JSON")
    b.add_argument("-d", "--data", required=True)
    _add_partition_args(b)
    _add_arch_args(b)
    b.add_argument("--loss", default="mse")
    b.add_argument("-o", "--output", required=True)
    b.set_defaults(func=cmd_build)

    v = sub.add_parser("eval", help="evaluate a network JSON on a dataset")
    v.add_argument("-m", "--model", required=True)
    v.add_argument("-d", "--data", required=True)
    v.add_argument("--loss", default="mse")
    v.add_argument("-o", "--output", default=None, help="predictions CSV")
    v.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ShapeError as exc:
        print(f"shape error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except ConsistencyError as exc:
        print(f"consistency error: {exc}", file=sys.stderr)
        for v in exc.violations[:5]:
            print(f"  {v}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except MarginError as exc:
        print(f"margin error: {exc}", file=sys.stderr)
        return EXIT_MARGIN
    except (CpwlError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
