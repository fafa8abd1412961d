"""Command-line front end.

One binary, five subcommands: `pretrain` fits a model on auxiliary data,
`bench` reproduces the test-function comparison, `optimize` runs the full
loop against a built-in function, and `suggest`/`tell` drive a
human-in-the-loop session backed by JSON files.

Exit codes are stable across commands: 0 success, 2 input error,
3 degenerate (vanishing) model, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

import numpy as np

from .bench import (
    FUNCTION_ORDER,
    FUNCTIONS,
    METHODS,
    BenchmarkSpec,
    _initial_design,
    make_flipped_aux,
    normalize_problem,
    run_benchmark,
    write_results,
    write_summary,
)
from .bo import (
    AcquisitionSpec,
    Box,
    BoSession,
    ask,
    bo_step,
    load_session,
    new_session,
    save_session,
    tell,
)
from .errors import NumericalError, VanishingKernelError
from .gp import GpPosterior, Observations
from .mkernel import FAMILIES, FreeKernelSpec
from .pretrain import (
    DEFAULT_LAMBDA_GRID,
    DEFAULT_NU_GRID,
    HyperGrid,
    build_tuned,
    load_aux_csv,
    load_aux_model,
    pretrain,
    save_aux_model,
)

KERNEL_ALIASES = {"poly": "polynomial", "exp": "exponential", "sinh": "hyperbolic-sine"}


def _parse_float_list(text: str, flag: str) -> tuple:
    try:
        values = tuple(float(tok) for tok in text.split(",") if tok.strip() != "")
    except ValueError as exc:
        raise ValueError(f"{flag} expects comma-separated numbers: {exc}") from exc
    if not values:
        raise ValueError(f"{flag} must contain at least one number")
    return values


def _resolve_functions(text: str) -> tuple:
    if text == "all":
        return FUNCTION_ORDER
    names = tuple(tok.strip() for tok in text.split(",") if tok.strip())
    for name in names:
        if name not in FUNCTIONS:
            raise ValueError(
                f"unknown function {name!r}; valid: {', '.join(FUNCTION_ORDER)}"
            )
    return names


def _resolve_methods(text: str) -> tuple:
    if text == "all":
        return METHODS
    names = tuple(tok.strip() for tok in text.split(",") if tok.strip())
    for name in names:
        if name not in METHODS:
            raise ValueError(f"unknown method {name!r}; valid: {', '.join(METHODS)}")
    return names


def cmd_pretrain(args) -> int:
    family = KERNEL_ALIASES.get(args.kernel, args.kernel)
    if family not in FAMILIES:
        raise ValueError(
            f"unknown kernel {args.kernel!r}; valid: "
            f"{', '.join(sorted(FAMILIES) + sorted(KERNEL_ALIASES))}"
        )
    kernel = FreeKernelSpec(
        family=family, nu=args.nu, degree=args.degree, offset=args.offset
    )
    if args.aux is not None:
        data = load_aux_csv(args.aux, args.task)
    else:
        if args.task != "regression":
            raise ValueError("--aux-from-function generates regression targets")
        problem = normalize_problem(FUNCTIONS[args.aux_from_function])
        data = make_flipped_aux(problem, args.aux_size, seed=args.seed)
    grid = HyperGrid(
        _parse_float_list(args.nu_grid, "--nu-grid"),
        _parse_float_list(args.lambda_grid, "--lambda-grid"),
    )
    model = pretrain(data, kernel, grid)
    save_aux_model(model, args.out)
    print(f"kernel: {model.kernel.family}")
    print(f"nu: {model.kernel.nu!r}")
    print(f"lambda: {model.lambda_!r}")
    print(f"loo: {model.loo_error!r}")
    print(f"model written to {args.out}")
    return 0


def cmd_bench(args) -> int:
    spec = BenchmarkSpec(
        functions=_resolve_functions(args.functions),
        methods=_resolve_methods(args.methods),
        seeds=args.seeds,
        iterations=args.iters,
        aux_size=args.aux_size,
        init_size=args.init_size,
        grid_resolution=args.grid_resolution,
        sigma2=args.sigma2,
        delta=args.delta,
        refine_top=args.refine_top,
    )
    records = run_benchmark(spec)
    write_results(records, args.out)
    print(f"init_size: {spec.init_size}")
    print(f"{len(records)} records written to {args.out}")
    if args.summary is not None:
        write_summary(records, args.summary)
        print(f"summary written to {args.summary}")
    return 0


def cmd_optimize(args) -> int:
    model = load_aux_model(args.model)
    kernel = build_tuned(model)
    if args.function not in FUNCTIONS:
        raise ValueError(
            f"unknown function {args.function!r}; valid: {', '.join(FUNCTION_ORDER)}"
        )
    if kernel.input_dim != 2:
        raise ValueError("built-in functions are 2-D; the model dimension differs")
    problem = normalize_problem(FUNCTIONS[args.function])
    fn_idx = FUNCTION_ORDER.index(args.function)
    X0, y0 = _initial_design(problem, fn_idx, args.seed, args.init_size)
    spec = AcquisitionSpec(kind=args.acq, dim=2, delta=args.delta)
    session = new_session(
        kernel, spec, seed=args.seed, noise_var=args.sigma2,
        init_points=X0, init_values=y0,
    )
    print(f"function: {args.function}")
    print(f"init_size: {args.init_size}")
    for t in range(args.iters):
        session = bo_step(session, problem.objective, refine_top=args.refine_top)
        print(f"t={t + 1} best={session.best_so_far[1]!r}")
    x_best, y_best = session.best_so_far
    print("best_x: " + ",".join(repr(float(v)) for v in x_best))
    print(f"best_value: {y_best!r}")
    return 0


def _session_for(args) -> BoSession:
    """Load the session file, or start a fresh one around the model."""
    model = load_aux_model(args.model)
    kernel = build_tuned(model)
    try:
        session = load_session(args.session, kernel)
    except FileNotFoundError:
        dim = kernel.input_dim
        session = BoSession(
            gp=GpPosterior(kernel, Observations.empty(dim, args.sigma2)),
            acquisition=AcquisitionSpec(kind=args.acq, dim=dim, delta=args.delta),
            domain=Box.unit(dim),
            rng_seed=args.seed,
            model_ref=args.model,
        )
    return session


def cmd_suggest(args) -> int:
    session = _session_for(args)
    x = ask(session, refine_top=args.refine_top)
    save_session(session, args.session)
    print("suggestion: " + ",".join(repr(float(v)) for v in x))
    return 0


def cmd_tell(args) -> int:
    session = _session_for(args)
    x = np.array(_parse_float_list(args.x, "--x"), dtype=float)
    tell(session, x, args.y)
    save_session(session, args.session)
    print(f"iteration: {session.iteration}")
    print(f"observations: {session.gp.obs.size}")
    print(f"best_value: {session.best_so_far[1]!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tpbo",
        description="Bayesian optimization with covariance priors learned "
        "from auxiliary data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="fit a model on auxiliary data")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--aux", help="auxiliary CSV with header x1,...,xn,y")
    src.add_argument(
        "--aux-from-function",
        choices=FUNCTION_ORDER,
        help="draw flipped auxiliary data from a built-in test function",
    )
    p.add_argument("--task", choices=("regression", "classification"),
                   default="regression")
    p.add_argument("--kernel", default="se",
                   help="kernel family (aliases: poly, exp, sinh)")
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--nu-grid", default=",".join(str(v) for v in DEFAULT_NU_GRID))
    p.add_argument("--lambda-grid",
                   default=",".join(str(v) for v in DEFAULT_LAMBDA_GRID))
    p.add_argument("--aux-size", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output model JSON path")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("bench", help="run the benchmark protocol")
    p.add_argument("--functions", default="all")
    p.add_argument("--methods", default="all")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--iters", type=int, default=40)
    p.add_argument("--aux-size", type=int, default=50)
    p.add_argument("--init-size", type=int, default=2)
    p.add_argument("--grid-resolution", type=int, default=101)
    p.add_argument("--sigma2", type=float, default=1e-6)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--refine-top", type=int, default=8)
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--summary", help="optional summary CSV path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("optimize", help="optimize a built-in function")
    p.add_argument("--model", required=True)
    p.add_argument("--function", required=True)
    p.add_argument("--iters", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--acq", choices=("ei", "ucb"), default="ei")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--sigma2", type=float, default=1e-6)
    p.add_argument("--init-size", type=int, default=2)
    p.add_argument("--refine-top", type=int, default=8)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("suggest", help="propose the next experiment")
    p.add_argument("--session", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--acq", choices=("ei", "ucb"), default="ei")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--sigma2", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--refine-top", type=int, default=None)
    p.set_defaults(func=cmd_suggest)

    p = sub.add_parser("tell", help="record an experiment result")
    p.add_argument("--session", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--x", required=True, help="comma-separated coordinates")
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--acq", choices=("ei", "ucb"), default="ei")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--sigma2", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_tell)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports its own message
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except VanishingKernelError as exc:
        print(f"error: degenerate model: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 4
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
