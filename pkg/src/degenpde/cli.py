"""Command-line interface: run, bounds, converge, verify.

Exit codes: 0 ok, 2 blow-up flagged, 3 solver failure, 4 config/usage error,
5 comparison-hypothesis violation.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import report as rpt
from .bounds import bounds_report
from .config import load_config
from .coupling import run_coupled
from .errors import (
    ConfigError,
    FixedPointStall,
    MonotonicityViolation,
    NonConvergence,
    OracleUnavailable,
    SolverError,
    TauTooLarge,
)
from .grid import StructuredGrid, integrate, write_snapshot
from .model import KirchhoffTransform, ProblemSpec
from .stepper import TimeGrid

EXIT_OK = 0
EXIT_BLOWUP = 2
EXIT_SOLVER = 3
EXIT_CONFIG = 4
EXIT_HYPOTHESIS = 5


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    p = _Parser(prog="degenpde", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="scenario configuration file")
    common.add_argument("--out", default=None, help="output directory (overrides config)")
    common.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    run_p = sub.add_parser("run", parents=[common], help="run the coupled solver")
    run_p.add_argument("--snapshots", type=int, default=None, metavar="K",
                       help="write field snapshots every K steps")
    run_p.add_argument("--dump-newton", action="store_true",
                       help="dump Newton iterates as field snapshots (debugging)")

    sub.add_parser("bounds", parents=[common],
                   help="emit envelopes and blow-up classification without solving")

    conv_p = sub.add_parser("converge", parents=[common], help="convergence study")
    conv_p.add_argument("--axis", choices=("tau", "h", "eps"), required=True)
    conv_p.add_argument("--levels", type=int, default=4)

    ver_p = sub.add_parser("verify", help="run a built-in property suite")
    ver_p.add_argument("suite", help="max-principle | contraction | sandwich | "
                                     "conservation | regularity | all")
    return p


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "verify":
            return cmd_verify(args.suite)
        setup = load_config(args.config)
        if args.out is not None:
            setup.out_dir = Path(args.out)
        if args.no_figures:
            setup.figures = False
        if args.command == "run":
            if args.snapshots is not None:
                setup.snapshot_stride = args.snapshots
            return cmd_run(setup, dump_newton=args.dump_newton)
        if args.command == "bounds":
            return cmd_bounds(setup)
        if args.command == "converge":
            return cmd_converge(setup, args.axis, args.levels)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TauTooLarge as exc:
        print(f"config error: TauTooLarge: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleUnavailable as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MonotonicityViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (NonConvergence, FixedPointStall) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def cmd_run(setup, dump_newton=False):
    out = Path(setup.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = setup.spec

    rep = None
    rep_note = ""
    try:
        kt = KirchhoffTransform(spec.law) if spec.grid.gamma1 else None
        rep = bounds_report(spec, transform=kt)
    except MonotonicityViolation as exc:
        rep_note = f"comparison unavailable: {exc}"
    except SolverError as exc:
        rep_note = f"bounds report unavailable: {exc}"

    ecfg = setup.elliptic
    if dump_newton:
        newton_dir = out / "newton"
        newton_dir.mkdir(exist_ok=True)
        counter = {"solve": 0, "files": 0}

        def dump(it, u):
            if counter["files"] >= 500:
                return
            path = newton_dir / f"solve{counter['solve']:06d}_it{it:02d}.txt"
            write_snapshot(path, spec.grid, np.asarray(u).reshape(spec.grid.shape),
                           float(counter["solve"]))
            counter["files"] += 1
            if it == 0:
                counter["solve"] += 1

        ecfg = replace(ecfg, dump=dump)

    result = run_coupled(spec, setup.tg, setup.eps, setup.coupling, ecfg)

    rpt.write_series_csv(out / "series.csv", result.M)
    if result.S:
        rpt.write_substrate_csv(out / "substrates.csv", result)
        rpt.write_fixedpoint_csv(out / "fixedpoint.csv", result.fp_log)
    if rep is not None:
        rpt.write_bounds_csv(out / "bounds.csv", rep)
    rpt.write_snapshots(out, result, setup.snapshot_stride)

    status = "blow-up" if result.blown_up else "ok"
    summ = {
        "status": status,
        "t_end": f"{result.M.times[-1]:.16e}",
        "steps_stored": len(result.M.times) - 1,
        "t_blowup": "" if result.t_blowup is None else f"{result.t_blowup:.16e}",
        "sweeps_total": len(result.fp_log),
        "classification": "" if rep is None else str(rep.classification),
        "delta": "" if rep is None or rep.delta is None else f"{rep.delta:.16e}",
        "notes": rep_note,
    }
    rpt.write_summary(out / "summary.txt", summ)

    if setup.figures:
        rpt.plot_series(result.M, out / "series.png", report=rep)
        rpt.plot_final_state(result, out / "final_state.png")
        if rep is not None:
            rpt.plot_bounds(rep, out / "bounds.png")
        if result.fp_log:
            rpt.plot_fixedpoint(result.fp_log, out / "fixedpoint.png")

    if result.blown_up:
        print(f"blow-up detected at t = {result.t_blowup:.6g} (artifacts in {out})")
        return EXIT_BLOWUP
    print(f"run complete: {len(result.M.times) - 1} steps, artifacts in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def cmd_bounds(setup):
    out = Path(setup.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = setup.spec
    kt = KirchhoffTransform(spec.law) if spec.grid.gamma1 else None
    rep = bounds_report(spec, transform=kt)
    rpt.write_bounds_csv(out / "bounds.csv", rep)
    if setup.figures:
        rpt.plot_bounds(rep, out / "bounds.png")
    print(f"classification: {rep.classification}")
    if rep.delta is not None:
        print(f"delta barrier margin: {rep.delta:.6g}")
    if rep.checkM is None and spec.k != 1:
        print("comparison section unavailable (needs exactly one substrate)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# converge
# ---------------------------------------------------------------------------


def _zero_kinetics_or_raise(spec):
    if spec.k > 0 or spec.kinetics.C_L > 0:
        raise OracleUnavailable("convergence oracles require zero kinetics")


def _level_error_h(setup, k):
    sol = setup.barenblatt
    base = setup.spec.grid
    n = tuple(nn * 2**k for nn in base.n)
    grid = StructuredGrid(n, base.extents, base.gamma1)
    spec = ProblemSpec(
        grid=grid, M0=sol.cell_average_initial(grid), kinetics=setup.spec.kinetics,
        law=setup.spec.law, T=setup.spec.T, substrates=(), h0=setup.spec.h0,
    )
    result = run_coupled(spec, setup.tg, setup.eps, setup.coupling, setup.elliptic)
    t_end = result.M.times[-1]
    if grid.dim == 1:
        ref = sol(grid.centers(0), t_end)
    else:
        xs, ys = grid.meshgrid()
        ref = sol(xs, t_end, y=ys)
    return grid.h[0], integrate(grid, result.M.Ms[-1] - ref, "L1")


def cmd_converge(setup, axis, levels):
    _zero_kinetics_or_raise(setup.spec)
    out = Path(setup.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    oracle = setup.oracle or ("barenblatt" if setup.barenblatt is not None else "self")

    if axis == "h":
        if oracle != "barenblatt" or setup.barenblatt is None:
            raise OracleUnavailable(
                "axis=h needs the barenblatt oracle (initial M0 = barenblatt ...)"
            )
        with ThreadPoolExecutor(max_workers=min(4, levels)) as ex:
            rows = list(ex.map(lambda k: _level_error_h(setup, k), range(levels)))
        labels = [r[0] for r in rows]
        errors = [r[1] for r in rows]
    elif axis == "tau":
        taus, runs = [], []

        def run_level(k):
            tg = TimeGrid(setup.tg.T, setup.tg.N * 2**k)
            res = run_coupled(setup.spec, tg, setup.eps, setup.coupling, setup.elliptic)
            return tg.tau, res

        n_runs = levels + (1 if oracle == "self" else 0)
        with ThreadPoolExecutor(max_workers=min(4, n_runs)) as ex:
            out_runs = list(ex.map(run_level, range(n_runs)))
        taus = [r[0] for r in out_runs[:levels]]
        if oracle == "self":
            ref = out_runs[-1][1].M.Ms[-1]
        else:
            sol = setup.barenblatt
            grid = setup.spec.grid
            t_end = out_runs[0][1].M.times[-1]
            ref = (sol(grid.centers(0), t_end) if grid.dim == 1
                   else sol(*grid.meshgrid()[:1], t_end, y=grid.meshgrid()[1]))
        errors = [
            integrate(setup.spec.grid, r[1].M.Ms[-1] - ref, "L1") for r in out_runs[:levels]
        ]
        labels = taus
    else:  # eps
        if hasattr(setup.eps, "values"):
            eps_list = list(setup.eps.values)[: levels + 1]
        else:
            eps_list = [float(setup.eps) * 0.25**k for k in range(levels + 1)]

        def run_eps(e):
            return run_coupled(setup.spec, setup.tg, e, setup.coupling, setup.elliptic)

        with ThreadPoolExecutor(max_workers=min(4, len(eps_list))) as ex:
            runs = list(ex.map(run_eps, eps_list))
        ref = runs[-1].M.Ms[-1]
        errors = [
            integrate(setup.spec.grid, r.M.Ms[-1] - ref, "L1") for r in runs[:-1]
        ]
        labels = eps_list[:-1]

    orders = [
        float(np.log2(errors[i] / errors[i + 1])) if errors[i + 1] > 0 else float("nan")
        for i in range(len(errors) - 1)
    ]
    rpt.write_convergence_csv(out / "convergence.csv", axis, labels, errors, orders)
    if setup.figures:
        rpt.plot_convergence(axis, labels, errors, out / "convergence.png")
    print(f"{axis}-convergence errors: " + ", ".join(f"{e:.4e}" for e in errors))
    print("observed orders: " + ", ".join(f"{p:.3f}" for p in orders))
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(suite):
    from .verify import run_suite

    try:
        results = run_suite(suite)
    except KeyError:
        print(f"usage error: unknown suite {suite!r}", file=sys.stderr)
        return EXIT_CONFIG
    for check in results:
        print(check.line())
    failed = [c for c in results if not c.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else 1


if __name__ == "__main__":
    raise SystemExit(main())
