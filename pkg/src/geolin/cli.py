"""Command-line front end.

    geolin validate --test-system --trials 100 --delta 1e-6 --seed 42 --out r.csv
    geolin study --test-system --deltas 1e-2 1e-4 1e-6 1e-8
    geolin bench --test-system --trials 5

Exit codes: 0 success, 1 tolerance breach (validate) or no interior error
minimum (study), 2 I/O or model parse failure.
"""

from __future__ import annotations

import argparse
import io
import statistics
import sys
import time
from typing import Callable, Sequence

import numpy as np

from .derivatives import did_dH, did_dr, did_ds, did_dv
from .dynamics import eidamb, forward_dynamics, immamb
from .findiff import (
    BLOCKS,
    NORMALIZATIONS,
    SCHEMES,
    FdConfig,
    generate_trials,
    has_interior_minimum,
    parametric_study,
    run_validation,
    thread_count,
)
from .linearization import linearize
from .model import ModelError, MultibodyModel, build_test_system, load_model

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_IO = 2

DEFAULT_DELTAS = tuple(10.0 ** -k for k in range(2, 13))
BENCH_ROWS = ("eidamb", "did_dH", "did_ds", "did_dv", "did_dr", "immamb", "linearize")


class InputError(Exception):
    """Bad input that maps to exit code 2."""


def fmt(x: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return f"{float(x):.16e}"


def error_header() -> list[str]:
    return [f"e_max_{b}" for b in BLOCKS] + [f"e_avg_{b}" for b in BLOCKS]


def _load(args: argparse.Namespace) -> MultibodyModel:
    if args.test_system:
        return build_test_system()
    try:
        with open(args.model, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read model file {args.model}: {exc.strerror}") from exc
    try:
        return load_model(text)
    except ModelError as exc:
        raise InputError(f"{args.model}: {exc}") from exc


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from exc


def _csv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def cmd_validate(args: argparse.Namespace) -> int:
    model = _load(args)
    cfg = FdConfig(args.delta, args.scheme)
    res = run_validation(
        model,
        trials=args.trials,
        seed=args.seed,
        cfg=cfg,
        random_params=args.random_params,
        workers=thread_count(),
        normalization=args.normalization,
    )
    rows = []
    for t in range(res.report.trial_count):
        rows.append(["trial", str(t)] + [fmt(x) for x in res.trial_max[t]] + [fmt(x) for x in res.trial_avg[t]])
    rep = res.report
    rows.append(["aggregate", str(rep.trial_count)] + [fmt(x) for x in rep.e_max] + [fmt(x) for x in rep.e_avg])
    _emit(_csv(["kind", "index"] + error_header(), rows), args.out)
    for name, flagged in zip(BLOCKS, rep.absolute):
        if flagged:
            print(f"warning: block {name} has a zero normalizer; absolute errors reported", file=sys.stderr)
    if not rep.within(args.max_tol, args.avg_tol):
        print(
            f"tolerance breach: e_max={rep.e_max.tolist()} (tol {args.max_tol}), "
            f"e_avg={rep.e_avg.tolist()} (tol {args.avg_tol})",
            file=sys.stderr,
        )
        return EXIT_FAIL
    return EXIT_OK


def cmd_study(args: argparse.Namespace) -> int:
    deltas = list(args.deltas)
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise InputError("--deltas must be strictly descending")
    if any(d <= 0.0 for d in deltas):
        raise InputError("--deltas must be positive")
    model = _load(args)
    reports = parametric_study(
        model,
        deltas,
        trials=args.trials,
        seed=args.seed,
        scheme=args.scheme,
        random_params=args.random_params,
        workers=thread_count(),
        normalization=args.normalization,
    )
    rows = [[fmt(r.delta)] + [fmt(x) for x in r.e_max] + [fmt(x) for x in r.e_avg] for r in reports]
    _emit(_csv(["delta"] + error_header(), rows), args.out)
    if len(reports) < 3:
        return EXIT_OK
    mean_max = [float(np.mean(r.e_max)) for r in reports]
    mean_avg = [float(np.mean(r.e_avg)) for r in reports]
    if has_interior_minimum(mean_max) and has_interior_minimum(mean_avg):
        return EXIT_OK
    print("no interior minimum in the error curves", file=sys.stderr)
    return EXIT_FAIL


def _median_time(fn: Callable[[], object], repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_timings(model: MultibodyModel, trials: int, repeats: int, seed: int) -> dict[str, float]:
    """Median wall time per operation over ``trials`` random states."""
    samples: dict[str, list[float]] = {name: [] for name in BENCH_ROWS}
    for tr in generate_trials(model, trials, seed):
        m, st, tau = tr.model, tr.state, tr.tau
        base_acc, joint_acc = forward_dynamics(m, st, tau)
        _, ws = eidamb(m, st, base_acc, joint_acc)
        ops = {
            "eidamb": lambda: eidamb(m, st, base_acc, joint_acc),
            "did_dH": lambda: did_dH(m, ws, hold="body"),
            "did_ds": lambda: did_ds(m, ws),
            "did_dv": lambda: did_dv(m, ws),
            "did_dr": lambda: did_dr(m, ws),
            "immamb": lambda: immamb(m, st.joint_pos),
            "linearize": lambda: linearize(m, st, tau),
        }
        for name in BENCH_ROWS:
            samples[name].append(_median_time(ops[name], repeats))
    return {name: statistics.median(v) for name, v in samples.items()}


def cmd_bench(args: argparse.Namespace) -> int:
    model = _load(args)
    timings = bench_timings(model, args.trials, args.repeats, args.seed)
    rows = [[name, fmt(timings[name])] for name in BENCH_ROWS]
    _emit(_csv(["operation", "median_seconds"], rows), args.out)
    return EXIT_OK


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {n}")
    return n


def _positive_float(text: str) -> float:
    x = float(text)
    if not x > 0.0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return x


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geolin",
        description="Validate and benchmark analytic linearizations of moving-base robot dynamics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", metavar="PATH", help="model file")
    src.add_argument("--test-system", action="store_true", help="use the built-in 9-joint system")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--out", metavar="PATH", help="CSV output file (default: stdout)")

    fd_opts = argparse.ArgumentParser(add_help=False)
    fd_opts.add_argument("--scheme", choices=SCHEMES, default="forward")
    fd_opts.add_argument(
        "--random-params",
        action="store_true",
        help="redraw fixed transforms and inertias of the model in every trial",
    )
    fd_opts.add_argument("--normalization", choices=NORMALIZATIONS, default="block")

    p = sub.add_parser("validate", parents=[common, fd_opts], help="analytic vs finite-difference errors")
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--delta", type=_positive_float, default=1e-6)
    p.add_argument("--max-tol", type=float, default=1e-2, help="tolerance on every e_max")
    p.add_argument("--avg-tol", type=float, default=1e-3, help="tolerance on every e_avg")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("study", parents=[common, fd_opts], help="error as a function of the FD step")
    p.add_argument("--trials", type=_positive_int, default=20)
    p.add_argument("--deltas", type=float, nargs="*", default=list(DEFAULT_DELTAS))
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("bench", parents=[common], help="median wall times")
    p.add_argument("--trials", type=_positive_int, default=5)
    p.add_argument("--repeats", type=_positive_int, default=5)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_IO if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # e.g. a malformed GEOLIN_THREADS value
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
