"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 calibration error, 4 degenerate
posterior, 1 any other failure.  Tables are tab-separated with a header
row; files named by ``--out`` are written atomically.
"""
from __future__ import annotations

import argparse
import contextlib
import io
import math
import os
import sys
import tempfile
from typing import Sequence

from . import analysis
from .fringe import CalibrationError, CalibrationTable, load_calibration, resolve_model
from .montecarlo import SeedSpec, TrialError, run_ensemble, run_trial, trial_posterior
from .posterior import (
    DegeneratePosteriorError,
    PhaseGrid,
    asymptotic_posterior,
    default_grid_points,
    normalize,
    write_posterior,
)
from .schedule import ScheduleSyntaxError, parse_schedule

EXIT_USAGE = 2
EXIT_CALIBRATION = 3
EXIT_NUMERIC = 4


def _schedule(text: str):
    try:
        return parse_schedule(text)
    except (ScheduleSyntaxError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _prior_l(text: str) -> float:
    value = float(text)
    if not value >= 1:
        raise argparse.ArgumentTypeError(f"--prior-l must be >= 1, got {text!r}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text!r}")
    return value


def _int_list(text: str) -> list[int]:
    """``"2,3,5"``, ``"1..12"`` or a mix such as ``"1..4,8"``."""
    out: list[int] = []
    for token in text.split(","):
        token = token.strip()
        lo, dots, hi = token.partition("..")
        try:
            if dots:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ValueError
                out.extend(range(a, b + 1))
            else:
                out.append(int(token))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad integer list token {token!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return sorted(set(out))


def _p_map(text: str) -> dict[int, int]:
    out: dict[int, int] = {}
    for token in text.split(","):
        r, colon, p = token.strip().partition(":")
        try:
            if not colon:
                raise ValueError
            out[int(r)] = int(p)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad r:p token {token!r}") from None
    return out


def _theta_scan(text: str) -> tuple[float, float, int]:
    parts = text.split(",")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        if len(parts) != 3 or count < 1 or not lo <= hi:
            raise ValueError
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"--theta-scan expects lo,hi,count, got {text!r}") from None
    return lo, hi, count


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return value


class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noonphase",
        description="Bayesian phase estimation with NOON / cat-state interferometers.",
        formatter_class=_Formatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p: argparse.ArgumentParser, *, schedule: bool = True, trials: bool = False) -> None:
        if schedule:
            p.add_argument("--schedule", type=_schedule, default="geom:p=4,r=2,m=1",
                           help="schedule literal, e.g. single:15, arith:p=6,nt=1, geom:p=4,r=2,m=1, "
                                "fixed:n=3,m=10, ions:nmax=6,m=10")
            p.add_argument("--theta", type=float, default=0.0, help="true phase shift (radians)")
            p.add_argument("--prior-l", type=_prior_l, default=1.0, help="prior window [-pi/L, pi/L]")
            p.add_argument("--grid", type=_positive_int, default=None,
                           help="grid points (default max(4096, 200*N_T), made odd)")
            p.add_argument("--seed", type=_seed, default=0, help="master seed (uint64)")
            p.add_argument("--no-fold", action="store_true",
                           help="estimate on the signed phase instead of |phi|")
        if trials:
            p.add_argument("--trials", type=_positive_int, default=200, help="trials per configuration")
        p.add_argument("--calib", default=None, help="calibration CSV (n,offset,contrast); ideal if omitted")
        p.add_argument("--out", default=None, help="output file (stdout if omitted)")

    p = sub.add_parser("sense", help="simulate one experiment", formatter_class=_Formatter)
    common(p)

    p = sub.add_parser("ensemble", help="aggregate statistics over many trials", formatter_class=_Formatter)
    common(p, trials=True)
    p.add_argument("--workers", type=_positive_int, default=1, help="threads for trial evaluation")

    p = sub.add_parser("scaling", help="deterministic all-yes widths and prefactor fit",
                       formatter_class=_Formatter)
    p.add_argument("--family", choices=("geom", "arith"), default="geom", help="schedule family")
    p.add_argument("--p", type=_int_list, default=_int_list("8..14"), help="numbers of measurements")
    p.add_argument("--alpha", type=float, default=None, help="fixed exponent (default 1 geom, 0.75 arith)")
    p.add_argument("--nt", type=_positive_int, default=1, help="base cat size for arith")
    p.add_argument("--grid-factor", type=_positive_int, default=200, help="grid points per particle")
    p.add_argument("--out", default=None, help="output file (stdout if omitted)")

    p = sub.add_parser("gain-scan", help="large-M gain over shot noise versus true phase",
                       formatter_class=_Formatter)
    p.add_argument("--family", choices=("ion", "fixed"), default="ion", help="cat sizes 1..nmax or one fixed N")
    p.add_argument("--nmax", type=_positive_int, default=6, help="largest cat for the ion family")
    p.add_argument("--n", type=_positive_int, default=3, help="cat size for the fixed family")
    p.add_argument("--m", type=_positive_float, default=1e5, help="replicas per cat size (may be fractional)")
    p.add_argument("--theta-scan", type=_theta_scan, default=None,
                   help="lo,hi,count (default 50 points inside (0, prior bound))")
    p.add_argument("--prior-l", type=_prior_l, default=None, help="prior L (default N for fixed, 1 for ion)")
    p.add_argument("--grid", type=_positive_int, default=800_001, help="grid points on the prior window")
    p.add_argument("--calib", default=None, help="calibration CSV; ideal if omitted")
    p.add_argument("--out", default=None, help="output file (stdout if omitted)")

    p = sub.add_parser("fig-m", help="replica-count sweep for geometric schedules of ratio r",
                       formatter_class=_Formatter)
    p.add_argument("--r", type=_int_list, default=_int_list("2,3,4,5"), help="ratios")
    p.add_argument("--m", type=_int_list, default=_int_list("1..12"), help="replica counts")
    p.add_argument("--p", type=_p_map, default=dict(analysis.DEFAULT_FIG_M_P), help="r:p pairs",
                   dest="p_map")
    p.add_argument("--grid-factor", type=_positive_int, default=200, help="grid points per particle")
    p.add_argument("--out", default=None, help="output file (stdout if omitted)")

    p = sub.add_parser("posterior-dump", help="write (phi, density) of one simulated posterior",
                       formatter_class=_Formatter)
    common(p)
    p.add_argument("--asymptotic-m", type=_positive_float, default=None,
                   help="dump the large-M posterior with this exponent instead of a sampled one")
    return parser


@contextlib.contextmanager
def _output(path: str | None):
    """Yield a text buffer; on success copy it to stdout or atomically to ``path``."""
    buf = io.StringIO()
    yield buf
    if path is None:
        sys.stdout.write(buf.getvalue())
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".noonphase-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _load_models(path: str | None) -> CalibrationTable | None:
    if path is None:
        return None
    try:
        with open(path, "rb") as fh:
            return load_calibration(fh)
    except OSError as exc:
        raise CalibrationError(f"cannot read calibration file {path!r}: {exc.strerror}") from None


def _check_calibrated(models: CalibrationTable | None, sizes) -> None:
    for n in sizes:
        resolve_model(models, n)


def _cmd_sense(args) -> None:
    models = _load_models(args.calib)
    _check_calibrated(models, args.schedule.cat_sizes)
    res = run_trial(args.schedule, models, args.theta, args.prior_l, args.grid, SeedSpec(args.seed, 0),
                    fold_sign=not args.no_fold)
    outcomes = ";".join(f"{n}:{o.value}" for n, o in res.outcomes)
    header = ["schedule", "theta_true", "prior_l", "n_total", "estimate", "half_width", "gain_db",
              "saturated", "secondary_peak_ratio", "master_seed", "outcomes"]
    row = [str(args.schedule), res.theta_true, args.prior_l, res.n_total, res.estimate, res.half_width,
           analysis.gain_db(res.half_width, res.n_total), res.saturated, res.secondary_peak_ratio,
           args.seed, outcomes]
    with _output(args.out) as fh:
        analysis.write_table(fh, header, [row])


def _cmd_ensemble(args) -> None:
    models = _load_models(args.calib)
    _check_calibrated(models, args.schedule.cat_sizes)
    stats = run_ensemble(args.trials, args.schedule, models, args.theta, args.prior_l, args.grid,
                         args.seed, fold_sign=not args.no_fold, workers=args.workers)
    header = ["schedule", "theta_true", "L", "n_trials", "mean_half_width", "rms_error", "mean_bias",
              "saturation_fraction", "master_seed"]
    row = [str(args.schedule), args.theta, args.prior_l, stats.n_trials, stats.mean_half_width,
           stats.rms_error, stats.mean_bias, stats.saturation_fraction, args.seed]
    with _output(args.out) as fh:
        analysis.write_table(fh, header, [row])


def _cmd_scaling(args) -> None:
    alpha = args.alpha if args.alpha is not None else (1.0 if args.family == "geom" else 0.75)
    rows = analysis.scaling_points(args.family, args.p, args.nt, args.grid_factor)
    kept = [(n, w) for _p, n, w, sat in rows if not sat]
    fit = analysis.fit_prefactor(kept, alpha) if len(kept) >= 2 else None
    with _output(args.out) as fh:
        analysis.write_table(
            fh, ["p", "n_total", "delta_theta", "scaled", "saturated"],
            [(p, n, w, w * n**alpha, sat) for p, n, w, sat in rows],
        )
    summary = sys.stderr if args.out is None else sys.stdout
    if fit is None:
        print("prefactor\tnan\t(fewer than two unsaturated points)", file=summary)
    else:
        print(f"exponent\t{fit.exponent!r}\nprefactor\t{fit.prefactor!r}\nresidual\t{fit.residual!r}\n"
              f"excluded_saturated\t{len(rows) - len(kept)}", file=summary)


def _cmd_gain_scan(args) -> None:
    models = _load_models(args.calib)
    sizes = list(range(1, args.nmax + 1)) if args.family == "ion" else [args.n]
    _check_calibrated(models, sizes)
    prior_l = args.prior_l if args.prior_l is not None else (float(args.n) if args.family == "fixed" else 1.0)
    if args.theta_scan is None:
        thetas = analysis.default_theta_scan(math.pi / prior_l)
    else:
        lo, hi, count = args.theta_scan
        thetas = [lo] if count == 1 else [lo + (hi - lo) * i / (count - 1) for i in range(count)]
    rows = analysis.gain_scan(sizes, models, thetas, args.m, prior_l, args.grid)
    header = ["theta", "n_total", "estimate", "delta_theta", "gain_db", "saturated", "prior_bound"]
    with _output(args.out) as fh:
        analysis.write_table(fh, header, [
            (g.theta, g.n_total, g.estimate, g.delta_theta, g.gain_db, g.saturated, g.prior_bound)
            for g in rows
        ])


def _cmd_fig_m(args) -> None:
    missing = [r for r in args.r if r not in args.p_map]
    if missing:
        raise argparse.ArgumentTypeError(f"--p has no entry for r={missing[0]}")
    rows = analysis.fig_m_sweep(args.r, args.m, args.p_map, args.grid_factor)
    best = analysis.fig_m_optima(rows)
    with _output(args.out) as fh:
        analysis.write_table(
            fh, ["r", "p", "m", "n_total", "delta_theta", "metric", "optimal"],
            [(*row, best[row[0]] == row[2]) for row in rows],
        )


def _cmd_posterior_dump(args) -> None:
    models = _load_models(args.calib)
    sched = args.schedule
    _check_calibrated(models, sched.cat_sizes)
    n_points = args.grid or default_grid_points(sched.total_particles)
    grid = PhaseGrid.for_prior(args.prior_l, n_points)
    if args.asymptotic_m is not None:
        model_list = [resolve_model(models, n) for n in sched.cat_sizes]
        density = asymptotic_posterior(model_list, args.theta, args.asymptotic_m, grid)
    else:
        post, _ = trial_posterior(sched, models, args.theta, args.prior_l, n_points, SeedSpec(args.seed, 0))
        density = normalize(post)
    with _output(args.out) as fh:
        write_posterior(fh, density, grid)


_COMMANDS = {
    "sense": _cmd_sense,
    "ensemble": _cmd_ensemble,
    "scaling": _cmd_scaling,
    "gain-scan": _cmd_gain_scan,
    "fig-m": _cmd_fig_m,
    "posterior-dump": _cmd_posterior_dump,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _COMMANDS[args.command](args)
    except argparse.ArgumentTypeError as exc:
        parser.print_usage(sys.stderr)
        print(f"noonphase: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CalibrationError as exc:
        print(f"noonphase: calibration error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except TrialError as exc:
        if isinstance(exc.cause, CalibrationError):
            print(f"noonphase: calibration error: {exc}", file=sys.stderr)
            return EXIT_CALIBRATION
        if isinstance(exc.cause, DegeneratePosteriorError):
            print(f"noonphase: degenerate posterior: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        raise
    except DegeneratePosteriorError as exc:
        print(f"noonphase: degenerate posterior: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
