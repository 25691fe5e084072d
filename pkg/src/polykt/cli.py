"""Command-line front end.

Data goes to stdout (or ``--output``), diagnostics to stderr. The exit status
is 0 only when every requested operation succeeded.
"""

from __future__ import annotations

import argparse
import csv
import sys
from contextlib import contextmanager
from typing import Sequence

import numpy as np

from . import codec, specfn
from .constraints import (
    ConstraintSet,
    IntegrationConfig,
    constrained_moment_ratio,
    dirichlet_measure,
    load_constraints,
)
from .errors import PolyKTError
from .estimator import ConstrainedKT
from .redundancy import CSV_COLUMNS, redundancy_report

MIN_SAMPLES = 1000


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--constraints", metavar="PATH", default=d(None),
                        help="constraint-config file (default: whole simplex)")
    parser.add_argument("--alphabet", type=int, metavar="M", default=d(2),
                        help="alphabet size when no constraint file is given (default 2)")
    parser.add_argument("--seed", type=int, default=d(0), help="random seed (default 0)")
    parser.add_argument("--samples", type=int, default=d(100_000),
                        help="Monte Carlo sample count (default 100000, minimum 1000)")
    parser.add_argument("--quad-tol", type=float, default=d(1e-9), help="quadrature tolerance in (0, 1e-3]")
    parser.add_argument("--quadrature-max-m", type=int, default=d(4), metavar="M",
                        help="largest reduced box dimension handled by quadrature; "
                             "beyond it Monte Carlo is used (default 4)")
    parser.add_argument("--output", "-o", metavar="PATH", default=d(None), help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polykt",
        description="Constrained KT prediction, compression and redundancy tables "
                    "for memoryless sources with polytope-constrained parameters.",
    )
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _global_options(p, suppress=True)
        return p

    p = add("predict", "print the predictive distribution after some counts or a sequence")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--counts", type=int, nargs="*", metavar="K", help="symbol counts k_1 .. k_m")
    g.add_argument("--sequence", type=int, nargs="*", metavar="X", help="symbols in 1..m, fed one at a time")

    p = add("compress", "compress a file of octets valued 0..m-1")
    p.add_argument("input", help="input symbol file")

    p = add("decompress", "invert compress")
    p.add_argument("input", help="compressed file")

    p = add("redundancy", "CSV table of exact and asymptotic redundancies")
    p.add_argument("--n", type=int, nargs="+", required=True, metavar="N", help="sequence lengths")
    p.add_argument("--no-exact", action="store_true", help="skip the exact worst-case column")
    p.add_argument("--exact-avg", action="store_true", help="add the exact average-redundancy column")
    p.add_argument("--mixture", action="store_true", help="add the mixture worst-case regret column")
    p.add_argument("--cn", action="store_true", help="add the c_n gap column")

    p = add("integrate", "print Dir(S; alpha)")
    p.add_argument("--alpha", type=float, nargs="+", required=True, metavar="A", help="Dirichlet parameters")
    return parser


def _config(args) -> IntegrationConfig:
    if args.samples < MIN_SAMPLES:
        raise PolyKTError(f"--samples must be at least {MIN_SAMPLES}")
    if not 0.0 < args.quad_tol <= 1e-3:
        raise PolyKTError("--quad-tol must lie in (0, 1e-3]")
    return IntegrationConfig(quad_tol=args.quad_tol, quadrature_max_m=args.quadrature_max_m,
                             samples=args.samples, seed=args.seed)


def _constraints(args) -> ConstraintSet:
    if args.constraints:
        return load_constraints(args.constraints)
    return ConstraintSet.full(args.alphabet)


@contextmanager
def _text_out(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _fmt(v: float) -> str:
    return repr(float(v))


def cmd_predict(args, S, cfg) -> int:
    if args.sequence:
        est = ConstrainedKT(S, cfg, args.seed)
        for s in args.sequence:
            est.update(s)
        pred = est.predict()
        probs, se = pred.probs, pred.std_errors
    else:
        k = np.asarray(args.counts or [0] * S.m, dtype=float)
        if k.shape != (S.m,) or np.any(k < 0):
            raise PolyKTError(f"--counts needs {S.m} nonnegative integers")
        cm = constrained_moment_ratio(S, k + 0.5, cfg)
        probs, se = cm.mean, cm.std_error
    with _text_out(args.output) as out:
        for i, (p, e) in enumerate(zip(probs, se), 1):
            out.write(f"{i} {_fmt(p)} {_fmt(e)}\n")
    return 0


def cmd_compress(args, S, cfg) -> int:
    with open(args.input, "rb") as fh:
        raw = fh.read()
    data = np.frombuffer(raw, dtype=np.uint8)
    if data.size and int(data.max()) >= S.m:
        raise PolyKTError(f"input contains octet {int(data.max())}, outside 0..{S.m - 1}")
    buf = codec.encode((data.astype(np.int64) + 1).tolist(), S, cfg, args.seed)
    _write_bytes(args.output, buf.data)
    return 0


def cmd_decompress(args, S, cfg) -> int:
    with open(args.input, "rb") as fh:
        raw = fh.read()
    symbols = codec.decode(raw, S, cfg)
    _write_bytes(args.output, bytes(s - 1 for s in symbols))
    return 0


def _write_bytes(path, data: bytes) -> None:
    if path is None:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        with open(path, "wb") as fh:
            fh.write(data)


def cmd_redundancy(args, S, cfg) -> int:
    columns = ["log2_C"]
    if not args.no_exact:
        columns.append("exact_worst")
    columns += ["asym_worst", "asym_avg"]
    if args.exact_avg:
        columns.append("exact_avg")
    if args.mixture:
        columns.append("mixture_worst_regret")
    if args.cn:
        columns.append("cn_gap")
    status = 0
    with _text_out(args.output) as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for n in args.n:
            rep = redundancy_report(n, S, cfg, columns)
            w.writerow(rep.csv_row())
            for err in rep.errors:
                print(f"polykt: n={n}: {err}", file=sys.stderr)
                status = 1
    return status


def cmd_integrate(args, S, cfg) -> int:
    est = dirichlet_measure(S, args.alpha, cfg)
    with _text_out(args.output) as out:
        out.write(f"value {_fmt(est.value)}\n")
        out.write(f"log_value {_fmt(est.log_value)}\n")
        out.write(f"log2_value {_fmt(specfn.to_bits(est.log_value))}\n")
        out.write(f"std_error {_fmt(est.std_error)}\n")
        out.write(f"backend {est.backend.value}\n")
    return 0


COMMANDS = {
    "predict": cmd_predict,
    "compress": cmd_compress,
    "decompress": cmd_decompress,
    "redundancy": cmd_redundancy,
    "integrate": cmd_integrate,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        S = _constraints(args)
        return COMMANDS[args.command](args, S, cfg)
    except (PolyKTError, OSError, ValueError) as exc:
        print(f"polykt: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
