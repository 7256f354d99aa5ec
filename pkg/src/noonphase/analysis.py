"""Sensitivity baselines, gains, closed-form widths and scaling fits.

Gains use the amplitude convention ``10 log10(dTheta_sn / dTheta)``
(not ``20 log10``).  With it the ideal six-ion protocol comes out at
3.18 dB, the value this package is checked against.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .fringe import CalibrationTable, Outcome, log_prob, resolve_model
from .posterior import (
    CONFIDENCE_MASS,
    PhaseGrid,
    asymptotic_log_weights,
    confidence_interval,
    default_grid_points,
    fold,
    map_estimate,
    normalize,
)
from .schedule import Schedule, arithmetic, geometric

__all__ = [
    "Baseline",
    "SensitivityReport",
    "ScalingFit",
    "shot_noise_limit",
    "heisenberg_limit",
    "gain_db",
    "report",
    "gaussian_prediction",
    "fit_prefactor",
    "all_yes_log_weights",
    "all_yes_half_width",
    "scaling_points",
    "DEFAULT_FIG_M_P",
    "fig_m_sweep",
    "fig_m_optima",
    "GainPoint",
    "gain_scan",
    "default_theta_scan",
    "write_table",
]


class Baseline(str, enum.Enum):
    SHOT_NOISE = "shot_noise"
    HEISENBERG = "heisenberg"


@dataclass(frozen=True)
class SensitivityReport:
    n_total: int
    delta_theta: float
    gain_db: float
    baseline: Baseline = Baseline.SHOT_NOISE


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    prefactor: float
    residual: float


def _check_total(n_total: float) -> None:
    if not n_total >= 1:
        raise ValueError(f"total particle number must be >= 1, got {n_total}")


def shot_noise_limit(n_total: float) -> float:
    _check_total(n_total)
    return 1.0 / math.sqrt(n_total)


def heisenberg_limit(n_total: float) -> float:
    _check_total(n_total)
    return 1.0 / n_total


def gain_db(delta_theta: float, n_total: float) -> float:
    """Gain over shot noise, ``10 log10(dTheta_sn / dTheta)``."""
    if not delta_theta > 0:
        raise ValueError("delta_theta must be positive")
    return 10.0 * math.log10(shot_noise_limit(n_total) / delta_theta)


def report(delta_theta: float, n_total: int, baseline: Baseline = Baseline.SHOT_NOISE) -> SensitivityReport:
    if not delta_theta > 0:
        raise ValueError("delta_theta must be positive")
    ref = shot_noise_limit(n_total) if baseline is Baseline.SHOT_NOISE else heisenberg_limit(n_total)
    return SensitivityReport(n_total, delta_theta, 10.0 * math.log10(ref / delta_theta), Baseline(baseline))


def gaussian_prediction(family: str, **params) -> float:
    """Closed-form width of the all-yes posterior in the Gaussian approximation.

    Families and parameters:

    ``arith``     p, n_tilde=1   (9/2)^(1/4) / (n_tilde^(1/4) N_T^(3/4)),  N_T = n_tilde p(p+1)/2
    ``geom``      p              sqrt(6) / N_T,                            N_T = 2^p - 1
    ``ion``       n_max=6, m     (9/8)^(1/4) / (N_p^(3/4) m^(1/2)),       N_p = n_max(n_max+1)/2
    ``fixed``     n_tilde, m     1 / (sqrt(n_tilde) sqrt(N_T)),             N_T = n_tilde m
    ``geom-rep``  p, m           2.55 / (sqrt(N_p) sqrt(N_T)),              N_p = 2^p - 1, N_T = N_p m
    """
    if family == "arith":
        p, nt = params["p"], params.get("n_tilde", 1)
        n_total = nt * p * (p + 1) / 2
        return (9 / 2) ** 0.25 / (nt**0.25 * n_total**0.75)
    if family == "geom":
        return math.sqrt(6) / (2 ** params["p"] - 1)
    if family == "ion":
        n_max, m = params.get("n_max", 6), params["m"]
        n_p = n_max * (n_max + 1) / 2
        return (9 / 8) ** 0.25 / (n_p**0.75 * math.sqrt(m))
    if family == "fixed":
        nt, m = params["n_tilde"], params["m"]
        return 1.0 / (math.sqrt(nt) * math.sqrt(nt * m))
    if family == "geom-rep":
        n_p = 2 ** params["p"] - 1
        return 2.55 / (math.sqrt(n_p) * math.sqrt(n_p * params["m"]))
    raise ValueError(f"unknown schedule family {family!r}")


def fit_prefactor(points: Iterable[tuple[float, float]], exponent: float) -> ScalingFit:
    """Least squares of ``log dTheta = log c - exponent log N_T`` with fixed exponent."""
    pts = [(float(n), float(d)) for n, d in points]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    n = np.array([p[0] for p in pts])
    d = np.array([p[1] for p in pts])
    if len(np.unique(n)) != len(n):
        raise ValueError("N_T values must be distinct")
    if (n <= 0).any() or (d <= 0).any() or not np.isfinite(d).all():
        raise ValueError("N_T and dTheta must be positive and finite")
    shifted = np.log(d) + exponent * np.log(n)
    log_c = float(shifted.mean())
    residual = float(np.sqrt(np.mean((shifted - log_c) ** 2)))
    return ScalingFit(exponent, math.exp(log_c), residual)


def all_yes_log_weights(schedule: Schedule, grid: PhaseGrid, models: CalibrationTable | None = None) -> np.ndarray:
    """Log posterior after every measurement in ``schedule`` answered yes."""
    phi = grid.points
    lw = np.zeros(grid.n_points)
    for step in schedule:
        lw += step.replicas * log_prob(resolve_model(models, step.n_particles), Outcome.YES, phi)
    return lw


def all_yes_half_width(schedule: Schedule, grid_points: int | None = None,
                       grid_factor: int | None = None, mass: float = CONFIDENCE_MASS):
    """Deterministic half-width at theta = 0 on the full prior.

    Returns ``(half_width, saturated)``.  ``grid_factor`` replaces the
    default 200 points per particle.
    """
    n_total = schedule.total_particles
    if grid_points is None:
        grid_points = default_grid_points(n_total) if grid_factor is None else max(4096, grid_factor * n_total) | 1
    grid = PhaseGrid.for_prior(1.0, grid_points)
    density = normalize(all_yes_log_weights(schedule, grid), grid)
    est = map_estimate(density, grid)
    return confidence_interval(density, grid, est, mass)


def scaling_points(family: str, ps: Iterable[int], n_tilde: int = 1, grid_factor: int | None = None):
    """``(p, N_T, dTheta, saturated)`` rows for deterministic all-yes runs."""
    rows = []
    for p in ps:
        sched = geometric(p) if family == "geom" else arithmetic(p, n_tilde) if family == "arith" else None
        if sched is None:
            raise ValueError(f"unknown scaling family {family!r} (expected geom or arith)")
        width, sat = all_yes_half_width(sched, grid_factor=grid_factor)
        rows.append((p, sched.total_particles, width, sat))
    return rows


# number of cat sizes per ratio for the M sweep; the optimal replica count
# grows with p for r >= 4, so these are part of the reported configuration
DEFAULT_FIG_M_P: Mapping[int, int] = {2: 6, 3: 6, 4: 4, 5: 3}


def fig_m_sweep(r_values: Sequence[int], m_values: Sequence[int], p_per_r: Mapping[int, int] | None = None,
                grid_factor: int = 200):
    """Rows ``(r, p, M, N_T, dTheta, dTheta*N_T)`` for all-yes geometric runs at theta = 0."""
    p_per_r = dict(DEFAULT_FIG_M_P if p_per_r is None else p_per_r)
    rows = []
    for r in sorted(r_values):
        if r not in p_per_r:
            raise ValueError(f"no p given for r={r}")
        p = p_per_r[r]
        for m in sorted(m_values):
            sched = geometric(p, r, m)
            width, _ = all_yes_half_width(sched, grid_factor=grid_factor)
            n_total = sched.total_particles
            rows.append((r, p, m, n_total, width, width * n_total))
    return rows


def fig_m_optima(rows) -> dict[int, int]:
    """Replica count minimising dTheta*N_T for each ratio (first wins ties)."""
    best: dict[int, tuple[float, int]] = {}
    for r, _p, m, _n, _w, metric in rows:
        if r not in best or metric < best[r][0]:
            best[r] = (metric, m)
    return {r: m for r, (_, m) in sorted(best.items())}


@dataclass(frozen=True)
class GainPoint:
    theta: float
    n_total: float
    estimate: float
    delta_theta: float
    gain_db: float
    saturated: bool
    prior_bound: float | None


def default_theta_scan(upper: float, count: int = 50, margin: float = 0.03) -> np.ndarray:
    """``count`` evenly spaced phases on ``[margin, 1 - margin] * upper``.

    Stays clear of theta = 0 and the prior edge, where the sign-mirror
    peaks merge.
    """
    return np.linspace(margin * upper, (1.0 - margin) * upper, count)


def gain_scan(cat_sizes: Sequence[int], models: CalibrationTable | None, thetas: Iterable[float],
              M: float = 1e5, prior_L: float | None = None, grid_points: int = 800_001,
              mass: float = CONFIDENCE_MASS) -> list[GainPoint]:
    """Gain over shot noise of the large-M posterior at each true phase.

    Every cat size in ``cat_sizes`` is measured ``M`` times (``M`` may be
    fractional).  A single cat size is the fixed-N protocol; its prior
    defaults to ``[-pi/N, pi/N]`` and ``pi/N`` is reported as the bound
    beyond which the estimate is ambiguous.  The posterior is folded onto
    |phi| before the interval is taken.
    """
    sizes = list(cat_sizes)
    if not sizes:
        raise ValueError("need at least one cat size")
    model_list = [resolve_model(models, n) for n in sizes]
    single_size = len(set(sizes)) == 1
    if prior_L is None:
        prior_L = float(sizes[0]) if single_size else 1.0
    grid = PhaseGrid.for_prior(prior_L, grid_points | 1)
    phi = grid.points
    n_total = M * sum(sizes)
    bound = math.pi / sizes[0] if single_size else None
    rows = []
    for theta in thetas:
        theta = float(theta)
        density = normalize(asymptotic_log_weights(model_list, theta, M, phi), grid)
        half, half_grid = fold(density, grid)
        est = map_estimate(half, half_grid)
        width, sat = confidence_interval(half, half_grid, est, mass)
        rows.append(GainPoint(theta, n_total, est, width, gain_db(width, n_total), sat, bound))
    return rows


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def write_table(fh: TextIO, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Tab-separated table with a header row and round-trip float precision."""
    fh.write("\t".join(header) + "\n")
    for row in rows:
        fh.write("\t".join(_cell(v) for v in row) + "\n")
