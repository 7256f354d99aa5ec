"""Gridded Bayesian phase posterior accumulated in log space.

Conventions
-----------
* Quadrature is the trapezoid rule on the uniform grid.
* The confidence window wraps around +-pi only when the grid spans the
  full circle (prior L = 1); otherwise it is truncated at the grid ends.
* MAP ties (peaks equal to within ``TIE_RTOL``) are broken toward the
  smallest |phi|, then toward negative phi.
* Every likelihood ``A + (C/2) cos(N phi)`` is even in phi, so theta and
  -theta are indistinguishable.  :func:`fold` maps a symmetric posterior
  onto the identifiable half-line |phi|.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, TextIO

import numpy as np

from .fringe import FringeModel, Outcome, log_prob

__all__ = [
    "CONFIDENCE_MASS",
    "PhaseGrid",
    "LogPosterior",
    "PosteriorSummary",
    "Interval",
    "Peak",
    "DegeneratePosteriorError",
    "default_grid_points",
    "uniform_prior",
    "update",
    "update_counts",
    "normalize",
    "map_estimate",
    "confidence_interval",
    "local_maxima",
    "secondary_peak_ratio",
    "fold",
    "summarize",
    "asymptotic_log_weights",
    "asymptotic_posterior",
    "write_posterior",
]

CONFIDENCE_MASS = 0.6827
TIE_RTOL = 1e-6


class DegeneratePosteriorError(ValueError):
    """All grid weights vanished; the observations exclude every phase."""


def default_grid_points(n_total: int) -> int:
    """``max(4096, 200 N_T)`` rounded up to an odd count so phi = 0 is a node."""
    n = max(4096, 200 * int(n_total))
    return n + 1 if n % 2 == 0 else n


@dataclass(frozen=True)
class PhaseGrid:
    lower: float
    upper: float
    n_points: int

    def __post_init__(self) -> None:
        if not self.lower < self.upper:
            raise ValueError("grid needs lower < upper")
        if self.lower < -math.pi or self.upper > math.pi:
            raise ValueError("grid must lie inside [-pi, pi]")
        if self.n_points < 3:
            raise ValueError("grid needs at least 3 points")

    @classmethod
    def for_prior(cls, L: float, n_points: int) -> "PhaseGrid":
        if not L >= 1:
            raise ValueError(f"prior window parameter L must be >= 1, got {L}")
        return cls(-math.pi / L, math.pi / L, n_points)

    @property
    def step(self) -> float:
        return (self.upper - self.lower) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        if self.symmetric:
            # exact antisymmetry keeps phi = 0 a node and makes folding pair nodes exactly
            half = np.arange(self.n_points // 2 + 1) * self.step
            return np.concatenate((-half[:0:-1], half))
        return self.lower + np.arange(self.n_points) * self.step

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def full_circle(self) -> bool:
        return self.lower == -math.pi and self.upper == math.pi

    @property
    def symmetric(self) -> bool:
        return self.lower == -self.upper and self.n_points % 2 == 1


@dataclass(frozen=True)
class LogPosterior:
    grid: PhaseGrid
    log_weights: np.ndarray = field(repr=False)
    update_count: int = 0

    def __post_init__(self) -> None:
        w = np.asarray(self.log_weights, dtype=float)
        if w.shape != (self.grid.n_points,):
            raise ValueError("log_weights length must equal grid.n_points")
        if np.isnan(w).any():
            raise ValueError("log_weights contain NaN")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "log_weights", w)

    @property
    def degenerate(self) -> bool:
        return not np.isfinite(self.log_weights).any()


class Interval(NamedTuple):
    half_width: float
    saturated: bool


class Peak(NamedTuple):
    index: int
    phi: float
    log_height: float


@dataclass(frozen=True)
class PosteriorSummary:
    map_estimate: float
    half_width: float
    secondary_peak_ratio: float
    saturated: bool = False


def uniform_prior(L: float = 1.0, n_points: int = 4097) -> LogPosterior:
    grid = PhaseGrid.for_prior(L, n_points)
    return LogPosterior(grid, np.zeros(grid.n_points), 0)


def update(post: LogPosterior, model: FringeModel, outcome: Outcome) -> LogPosterior:
    """Multiply in the likelihood of one measurement."""
    lw = post.log_weights + log_prob(model, outcome, post.grid.points)
    return LogPosterior(post.grid, lw, post.update_count + 1)


def update_counts(post: LogPosterior, model: FringeModel, n_yes: int, n_no: int,
                  table: tuple[np.ndarray, np.ndarray] | None = None) -> LogPosterior:
    """Equivalent to ``n_yes`` yes-updates and ``n_no`` no-updates.

    ``table`` may carry precomputed (log P(yes), log P(no)) on the grid.
    """
    if table is None:
        phi = post.grid.points
        table = (log_prob(model, Outcome.YES, phi), log_prob(model, Outcome.NO, phi))
    lw = np.array(post.log_weights)
    # zero counts are skipped so 0 * -inf never produces NaN
    if n_yes:
        lw += n_yes * table[0]
    if n_no:
        lw += n_no * table[1]
    return LogPosterior(post.grid, lw, post.update_count + n_yes + n_no)


def _trapezoid(density: np.ndarray, h: float) -> float:
    return float(h * (density.sum() - 0.5 * (density[0] + density[-1])))


def normalize(post: LogPosterior | np.ndarray, grid: PhaseGrid | None = None) -> np.ndarray:
    """Density on the grid that trapezoid-integrates to one."""
    if isinstance(post, LogPosterior):
        lw, grid = post.log_weights, post.grid
    else:
        lw = np.asarray(post, dtype=float)
    top = lw.max()
    if not np.isfinite(top):
        raise DegeneratePosteriorError("every grid point has zero likelihood")
    dens = np.exp(lw - top)
    return dens / _trapezoid(dens, grid.step)


def _runs(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Start indices and values of maximal runs of equal consecutive entries."""
    change = np.flatnonzero(values[1:] != values[:-1]) + 1
    starts = np.concatenate(([0], change))
    return starts, values[starts]


def local_maxima(log_density: np.ndarray, grid: PhaseGrid, wrap: bool | None = None) -> list[Peak]:
    """Peaks of a log-density, with heights refined by a log-space parabola.

    Plateaus count once (their central index is reported).  With ``wrap``
    the first and last grid nodes are the same physical point.
    """
    y = np.asarray(log_density, dtype=float)
    if wrap is None:
        wrap = grid.full_circle
    n = len(y) - 1 if wrap else len(y)
    y = y[:n]
    starts, vals = _runs(y)
    ends = np.append(starts[1:], n)
    if len(starts) == 1:
        if not np.isfinite(vals[0]):
            return []
        mid = (n - 1) // 2
        return [Peak(mid, float(grid.points[mid]), float(vals[0]))]
    if wrap and vals[0] == vals[-1]:
        # the first and last runs meet across the seam
        ends = np.append(ends[1:-1], ends[0] + n)
        starts = starts[1:]
        vals = vals[1:]
    if wrap:
        left, right = np.roll(vals, 1), np.roll(vals, -1)
    else:
        left = np.concatenate(([-np.inf], vals[:-1]))
        right = np.concatenate((vals[1:], [-np.inf]))
    is_peak = np.isfinite(vals) & (vals > left) & (vals > right)
    s, e, v = starts[is_peak], ends[is_peak], vals[is_peak]
    idx = ((s + e - 1) // 2) % n
    height = v.astype(float).copy()
    single = (e - s) == 1
    il, ir = idx - 1, idx + 1
    if wrap:
        il, ir = il % n, ir % n
        inside = single
    else:
        inside = single & (il >= 0) & (ir < n)
    if inside.any():
        a = y[il[inside]]
        c = y[ir[inside]]
        b = v[inside]
        curv = a - 2 * b + c
        ok = np.isfinite(a) & np.isfinite(c) & (curv < 0)
        refined = b.copy()
        with np.errstate(invalid="ignore", divide="ignore"):
            refined[ok] = b[ok] - (a[ok] - c[ok]) ** 2 / (8 * curv[ok])
        height[inside] = refined
    phi = grid.points[idx]
    return [Peak(int(i), float(x), float(h)) for i, x, h in zip(idx, phi, height)]


def _log(density: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(density, dtype=float))


def _pick_map(peaks: Sequence[Peak]) -> Peak:
    top = max(p.log_height for p in peaks)
    tied = [p for p in peaks if p.log_height >= top + math.log1p(-TIE_RTOL)]
    return min(tied, key=lambda p: (abs(p.phi), p.phi))


def map_estimate(density: np.ndarray, grid: PhaseGrid, wrap: bool | None = None) -> float:
    """Grid point of maximum density (tie rule in the module docstring)."""
    peaks = local_maxima(_log(density), grid, wrap)
    if not peaks:
        raise DegeneratePosteriorError("density has no finite maximum")
    return _pick_map(peaks).phi


def secondary_peak_ratio(density: np.ndarray, grid: PhaseGrid, estimate: float | None = None,
                         wrap: bool | None = None) -> float:
    """Height of the tallest peak other than the MAP peak, relative to it."""
    peaks = local_maxima(_log(density), grid, wrap)
    if len(peaks) < 2:
        return 0.0
    if estimate is None:
        main = _pick_map(peaks)
    else:
        main = min(peaks, key=lambda p: abs(p.phi - estimate))
    others = [p.log_height for p in peaks if p is not main]
    return float(min(1.0, math.exp(max(others) - main.log_height)))


class _Cumulative:
    """Exact trapezoid integral of the piecewise-linear interpolant."""

    def __init__(self, density: np.ndarray, grid: PhaseGrid):
        self.d = np.asarray(density, dtype=float)
        self.h = grid.step
        self.lower = grid.lower
        self.n = len(self.d)
        cells = 0.5 * self.h * (self.d[1:] + self.d[:-1])
        self.cum = np.concatenate(([0.0], np.cumsum(cells)))
        self.total = float(self.cum[-1])

    def __call__(self, x: float) -> float:
        t = (x - self.lower) / self.h
        if t <= 0:
            return 0.0
        if t >= self.n - 1:
            return self.total
        i = int(t)
        f = t - i
        d0, d1 = self.d[i], self.d[i + 1]
        return float(self.cum[i] + self.h * (d0 * f + 0.5 * (d1 - d0) * f * f))


def confidence_interval(density: np.ndarray, grid: PhaseGrid, estimate: float,
                        mass: float = CONFIDENCE_MASS, wrap: bool | None = None,
                        tol: float | None = None) -> Interval:
    """Smallest symmetric half-width around ``estimate`` holding ``mass``.

    Found by bisection (default tolerance 1/1000 of a grid step).  If the
    window would have to be wider than the whole support, the half support
    width is returned with ``saturated=True``.
    """
    if not 0 < mass < 1:
        raise ValueError("mass must lie in (0, 1)")
    if not grid.lower - 1e-12 <= estimate <= grid.upper + 1e-12:
        raise ValueError("estimate lies outside the grid")
    if wrap is None:
        wrap = grid.full_circle
    F = _Cumulative(density, grid)
    target = mass * F.total
    span = grid.width

    def window_mass(w: float) -> float:
        a, b = estimate - w, estimate + w
        if not wrap:
            return F(b) - F(a)
        if b - a >= span:
            return F.total
        extra = 0.0
        if a < grid.lower:
            extra += F.total - F(a + span)
            a = grid.lower
        if b > grid.upper:
            extra += F(b - span)
            b = grid.upper
        return extra + F(b) - F(a)

    w_max = span / 2
    if window_mass(w_max) < target:
        return Interval(w_max, True)
    lo, hi = 0.0, w_max
    tol = grid.step * 1e-3 if tol is None else tol
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if window_mass(mid) >= target:
            hi = mid
        else:
            lo = mid
    return Interval(hi, False)


def fold(density: np.ndarray, grid: PhaseGrid) -> tuple[np.ndarray, PhaseGrid]:
    """Density of |phi| on [0, upper] from a density on a symmetric grid."""
    if not grid.symmetric:
        raise ValueError("folding needs a grid symmetric about 0 with an odd point count")
    d = np.asarray(density, dtype=float)
    mid = grid.n_points // 2
    half = d[mid:] + d[mid::-1]
    return half, PhaseGrid(0.0, grid.upper, mid + 1)


def summarize(post: LogPosterior, mass: float = CONFIDENCE_MASS, folded: bool = False) -> PosteriorSummary:
    """MAP estimate, half-width and residual multimodality in one pass."""
    density, grid = normalize(post), post.grid
    if folded:
        density, grid = fold(density, grid)
    est = map_estimate(density, grid)
    interval = confidence_interval(density, grid, est, mass)
    ratio = secondary_peak_ratio(density, grid, est)
    return PosteriorSummary(est, interval.half_width, ratio, interval.saturated)


def asymptotic_log_weights(models: Sequence[FringeModel], theta_true: float, M: float,
                           phi: np.ndarray) -> np.ndarray:
    """Expected log-likelihood of M replicas per model, at the true phase."""
    if not models:
        raise ValueError("need at least one model")
    if not M > 0:
        raise ValueError("M must be positive")
    out = np.zeros_like(np.asarray(phi, dtype=float))
    for model in models:
        for outcome in (Outcome.YES, Outcome.NO):
            q = math.exp(float(log_prob(model, outcome, theta_true)))
            if q > 0:
                out += (M * q) * log_prob(model, outcome, phi)
    return out


def asymptotic_posterior(models: Sequence[FringeModel], theta_true: float, M: float,
                         grid: PhaseGrid) -> np.ndarray:
    return normalize(asymptotic_log_weights(models, theta_true, M, grid.points), grid)


def write_posterior(fh: TextIO, density: np.ndarray, grid: PhaseGrid) -> None:
    """Two tab-separated columns ``phi``, ``density`` with round-trip precision."""
    fh.write("phi\tdensity\n")
    for x, d in zip(grid.points.tolist(), np.asarray(density, dtype=float).tolist()):
        fh.write(f"{x!r}\t{d!r}\n")
