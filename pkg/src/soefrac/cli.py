"""Command-line front end: soefrac <kernel|run|convergence|compare> [flags].

All numeric output is locale-independent 17-significant-digit decimal; file
writes are atomic (write to temp, rename); identical invocations produce
byte-identical files.  Exit codes: 0 success, 1 usage error, 2 numerical or
module error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import kernel as kernel_mod
from . import problems
from .errors import SoefracError
from .oracle import volterra_reference
from .schemes import RunRecord, run
from .specfun import MLParams, mittag_leffler

__all__ = ["main"]

_FMT = ".17g"


def _fmt(x: float) -> str:
    return format(float(x), _FMT)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exception (exit code 1)."""

    def error(self, message):
        raise _UsageError(message)


def _atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _worker_cap() -> int:
    raw = os.environ.get("SOEFRAC_THREADS", "")
    if raw.strip():
        try:
            cap = int(raw)
        except ValueError as exc:
            raise _UsageError(f"SOEFRAC_THREADS must be an integer, got {raw!r}") from exc
        if cap < 1:
            raise _UsageError("SOEFRAC_THREADS must be >= 1")
        return cap
    return os.cpu_count() or 1


def _read_config(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise _UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, val = line.split("=", 1)
                values[key.strip().replace("-", "_")] = val.strip()
    except OSError as exc:
        raise _UsageError(f"cannot read config file {path}: {exc}") from exc
    return values


def _merge_config(args: argparse.Namespace) -> None:
    """Fill options still at None from the --config file (flags win)."""
    if not getattr(args, "config", None):
        return
    file_values = _read_config(args.config)
    for key, raw in file_values.items():
        if not hasattr(args, key):
            raise _UsageError(f"unknown config key {key!r}")
        if getattr(args, key) is None:
            setattr(args, key, raw)


def _need(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise _UsageError(f"missing required option --{name.replace('_', '-')}")


def _as_float(args, *names):
    for name in names:
        val = getattr(args, name)
        if val is not None and not isinstance(val, float):
            try:
                setattr(args, name, float(val))
            except ValueError as exc:
                raise _UsageError(f"--{name.replace('_', '-')} expects a number") from exc


def _as_int(args, *names):
    for name in names:
        val = getattr(args, name)
        if val is not None and not isinstance(val, int):
            try:
                setattr(args, name, int(val))
            except ValueError as exc:
                raise _UsageError(f"--{name.replace('_', '-')} expects an integer") from exc


# In-process kernel cache shared by run/convergence; the build is the only
# SVD-bearing step of a command.
_KERNEL_CACHE: dict[tuple, "kernel_mod.RationalKernel"] = {}


def _get_kernel(alpha: float, h: float, T: float, tol: float, n_samples: int):
    key = (alpha, h, T, tol, n_samples)
    if key not in _KERNEL_CACHE:
        _KERNEL_CACHE[key] = kernel_mod.build_kernel(alpha, h, T, tol, n_samples)
    return _KERNEL_CACHE[key]


def _build_parser() -> _Parser:
    parser = _Parser(prog="soefrac", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", default=None,
                       help="flat key=value file supplying defaults (flags override)")
        p.add_argument("--alpha", default=None)
        p.add_argument("--T", default=None)
        p.add_argument("--tol", default=None)
        p.add_argument("--n-samples", dest="n_samples", default=None)

    pk = sub.add_parser("kernel", help="build a kernel file and print its error summary")
    add_common(pk)
    pk.add_argument("--h", default=None)
    pk.add_argument("--out", default=None)

    pr = sub.add_parser("run", help="run one problem and emit a time-series CSV")
    add_common(pr)
    pr.add_argument("--problem", default=None, choices=[None, "scalar", "heat1d", "ch2d"])
    pr.add_argument("--scheme", default=None, choices=[None, "theta", "ie", "mcn"])
    pr.add_argument("--theta", default=None)
    pr.add_argument("--h", default=None)
    pr.add_argument("--lambda", dest="lam", default=None)
    pr.add_argument("--n-cells", dest="n_cells", default=None)
    pr.add_argument("--nx", default=None)
    pr.add_argument("--ny", default=None)
    pr.add_argument("--M", dest="mobility", default=None)
    pr.add_argument("--eps", default=None)
    pr.add_argument("--snapshots", default=None,
                    help="comma-separated times at which ch2d fields are written")
    pr.add_argument("--out", default=None)

    pc = sub.add_parser("convergence", help="step-size sweep with fitted slope")
    add_common(pc)
    pc.add_argument("--problem", default=None, choices=[None, "scalar", "heat1d", "ch2d"])
    pc.add_argument("--scheme", default=None, choices=[None, "theta", "ie", "mcn"])
    pc.add_argument("--theta", default=None)
    pc.add_argument("--h-min-exp", dest="h_min_exp", default=None,
                    help="finest step is 2^-h_min_exp")
    pc.add_argument("--h-max-exp", dest="h_max_exp", default=None,
                    help="coarsest step is 2^-h_max_exp")
    pc.add_argument("--lambda", dest="lam", default=None)
    pc.add_argument("--n-cells", dest="n_cells", default=None)
    pc.add_argument("--nx", default=None)
    pc.add_argument("--ny", default=None)
    pc.add_argument("--M", dest="mobility", default=None)
    pc.add_argument("--eps", default=None)
    pc.add_argument("--out", default=None)

    pp = sub.add_parser("compare", help="scalar problem: scheme vs direct Volterra oracle")
    add_common(pp)
    pp.add_argument("--scheme", default=None, choices=[None, "theta", "ie", "mcn"])
    pp.add_argument("--theta", default=None)
    pp.add_argument("--h", default=None)
    pp.add_argument("--lambda", dest="lam", default=None)
    pp.add_argument("--out", default=None)

    return parser


def _cmd_kernel(args) -> int:
    _merge_config(args)
    _need(args, "alpha", "h", "out")
    if args.T is None:
        args.T = 1.0
    if args.tol is None:
        args.tol = 1e-12
    if args.n_samples is None:
        args.n_samples = 100
    _as_float(args, "alpha", "h", "T", "tol")
    _as_int(args, "n_samples")
    k = kernel_mod.build_kernel(args.alpha, args.h, args.T, args.tol, args.n_samples)
    _atomic_write(args.out, kernel_mod.dumps_kernel(k))
    eps_ra = kernel_mod.spectrum_sup_error(k)
    e_ra = kernel_mod.time_domain_error(k)
    print(f"alpha={_fmt(k.alpha)} m={k.m} c_inf={_fmt(k.c_inf)} "
          f"eps_ra={_fmt(eps_ra)} E_ra={_fmt(e_ra)}")
    return 0


def _problem_setup(args):
    """Common run/convergence setup: operator, initial state, norms, observers."""
    problem = args.problem
    alpha = args.alpha
    if problem == "scalar":
        lam = args.lam if args.lam is not None else -1.0
        spec = problems.ScalarLinear(float(lam))
        op = problems.scalar_operator(spec)
        u0 = 1.0
        reference = lambda t: problems.scalar_analytic(alpha, spec.lam, t, u0)
        extra = {}
    elif problem == "heat1d":
        n_cells = int(args.n_cells) if args.n_cells is not None else 1000
        spec = problems.Heat1D(n_cells)
        op = problems.heat_operator(spec)
        grid = spec.grid
        u0 = np.sin(math.pi * grid)
        reference = lambda t: problems.heat_analytic(alpha, t, grid)
        extra = {}
    elif problem == "ch2d":
        nx = int(args.nx) if args.nx is not None else 64
        ny = int(args.ny) if args.ny is not None else 64
        mob = float(args.mobility) if args.mobility is not None else 0.05
        eps = float(args.eps) if args.eps is not None else 0.03
        spec = problems.CHParams(nx, ny, mob, eps)
        op = problems.ch_operator(spec)
        u0 = problems.ch_initial(spec)
        reference = None
        extra = {"energy": lambda t, u: problems.ch_energy(spec, u),
                 "mass": lambda t, u: float(np.mean(u))}
    else:
        raise _UsageError(f"unknown problem {problem!r}")
    return spec, op, u0, reference, extra


def _cmd_run(args) -> int:
    _merge_config(args)
    _need(args, "problem", "alpha", "scheme", "h", "out")
    if args.T is None:
        args.T = 1.0
    if args.tol is None:
        args.tol = 1e-12
    if args.n_samples is None:
        args.n_samples = 100
    _as_float(args, "alpha", "h", "T", "tol", "theta")
    _as_int(args, "n_samples")
    if args.scheme == "theta" and args.theta is None:
        raise _UsageError("--theta is required when --scheme theta")
    if args.scheme != "theta" and args.theta is not None:
        raise _UsageError("--theta is only valid with --scheme theta")
    if args.h > args.T:
        raise _UsageError("--h must not exceed --T")

    spec, op, u0, reference, extra = _problem_setup(args)
    k = _get_kernel(args.alpha, args.h, args.T, args.tol, args.n_samples)

    observers = {"norm": lambda t, u: op.norm(u)}
    observers.update(extra)
    if reference is not None:
        observers["err"] = lambda t, u: op.norm(reference(t) - u)

    snapshot_times = None
    if args.problem == "ch2d":
        raw = args.snapshots if args.snapshots is not None else f"0,{args.T}"
        snapshot_times = [float(s) for s in str(raw).split(",") if s.strip()]

    record = run(u0, op, k, args.scheme, args.h, args.T, theta=args.theta,
                 observers=observers, snapshot_times=snapshot_times)
    _atomic_write(args.out, record.to_csv())

    summary = (f"problem={args.problem} alpha={_fmt(args.alpha)} scheme={args.scheme} "
               f"h={_fmt(args.h)} T={_fmt(args.T)} "
               f"final_norm={_fmt(record.columns['norm'][-1])}")
    if "mass" in record.columns:
        mass = record.columns["mass"]
        drift = float(np.max(np.abs(mass - mass[0])))
        summary += f" mass_drift={_fmt(drift)}"
    if "err" in record.columns:
        summary += f" final_err={_fmt(record.columns['err'][-1])}"
    print(summary)

    if snapshot_times:
        stem, _ = os.path.splitext(args.out)
        for ts in snapshot_times:
            grid = np.atleast_2d(record.snapshot_at(ts))
            text = "\n".join(",".join(_fmt(v) for v in row) for row in grid) + "\n"
            _atomic_write(f"{stem}_field_t{_fmt(ts)}.csv", text)
    return 0


def _cmd_convergence(args) -> int:
    _merge_config(args)
    _need(args, "problem", "alpha", "scheme", "h_min_exp", "h_max_exp", "out")
    if args.T is None:
        args.T = 1.0
    if args.tol is None:
        args.tol = None  # per-problem default inside convergence_study
    _as_float(args, "alpha", "T", "tol", "theta")
    _as_int(args, "h_min_exp", "h_max_exp", "n_samples")
    if args.scheme == "theta" and args.theta is None:
        raise _UsageError("--theta is required when --scheme theta")
    exps = range(args.h_max_exp, args.h_min_exp + 1)
    if len(exps) < 4:
        raise _UsageError("exponent range must contain at least 4 step sizes")
    h_list = [2.0**-e for e in exps]

    spec, op, u0, reference, extra = _problem_setup(args)
    result = problems.convergence_study(
        spec, args.scheme, args.alpha, h_list, args.T, theta=args.theta,
        kernel_tol=args.tol, n_samples=args.n_samples or 100,
        max_workers=_worker_cap(),
    )
    lines = ["h,E_r"]
    for h, e in zip(result.h, result.err):
        lines.append(f"{_fmt(h)},{_fmt(e)}")
    lines.append(f"# slope={_fmt(result.slope)}")
    _atomic_write(args.out, "\n".join(lines) + "\n")
    print(f"problem={args.problem} scheme={args.scheme} alpha={_fmt(args.alpha)} "
          f"slope={_fmt(result.slope)}")
    return 0


def _cmd_compare(args) -> int:
    _merge_config(args)
    _need(args, "alpha", "h")
    if args.T is None:
        args.T = 1.0
    if args.tol is None:
        args.tol = 1e-12
    if args.n_samples is None:
        args.n_samples = 100
    if args.scheme is None:
        args.scheme = "ie"
    _as_float(args, "alpha", "h", "T", "tol", "theta")
    _as_int(args, "n_samples")
    lam = float(args.lam) if args.lam is not None else -1.0
    spec = problems.ScalarLinear(lam)
    op = problems.scalar_operator(spec)
    k = _get_kernel(args.alpha, args.h, args.T, args.tol, args.n_samples)

    rec = run(1.0, op, k, args.scheme, args.h, args.T, theta=args.theta)
    orc = volterra_reference(1.0, op, args.alpha, args.h, args.T)
    u_scheme = rec.columns["norm"]  # scalar problem stays positive; norm == |u| == u
    u_oracle = orc.columns["norm"]
    lines = ["t,u_scheme,u_oracle,u_analytic,diff"]
    max_diff = 0.0
    for i, t in enumerate(rec.t):
        exact = problems.scalar_analytic(args.alpha, lam, float(t))
        diff = abs(float(u_scheme[i]) - float(u_oracle[i]))
        max_diff = max(max_diff, diff)
        lines.append(",".join(_fmt(v) for v in (t, u_scheme[i], u_oracle[i], exact, diff)))
    out = args.out
    if out:
        _atomic_write(out, "\n".join(lines) + "\n")
    else:
        print("\n".join(lines))
    print(f"alpha={_fmt(args.alpha)} h={_fmt(args.h)} scheme={args.scheme} "
          f"max_diff={_fmt(max_diff)}")
    return 0


_DISPATCH = {
    "kernel": _cmd_kernel,
    "run": _cmd_run,
    "convergence": _cmd_convergence,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _DISPATCH[args.command](args)
    except _UsageError as exc:
        print(f"soefrac: usage error: {exc}", file=sys.stderr)
        return 1
    except (SoefracError, ValueError, NotImplementedError, OSError) as exc:
        print(f"soefrac: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
