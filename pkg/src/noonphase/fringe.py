"""Outcome probabilities for a single cat-state interferometric measurement.

A measurement with an N-particle cat state returns ``yes`` with probability

    P(yes | N, theta) = A + (C/2) cos(N theta)

where ``A`` is the fringe offset and ``C`` the contrast.  The ideal
interferometer has ``A = 1/2`` and ``C = 1``, which reduces to
``cos^2(N theta / 2)``.

Calibration tables are stored as CSV with the exact header ``n,offset,contrast``::

    # comment lines are allowed
    n,offset,contrast
    1,0.5,0.98
    2,0.49,0.88

Reals must be in plain decimal notation (no exponents, no nan/inf).
"""
from __future__ import annotations

import csv
import enum
import io
import math
import re
from dataclasses import dataclass
from typing import IO, Iterable, Mapping

import numpy as np

__all__ = [
    "Outcome",
    "FringeModel",
    "CalibrationTable",
    "CalibrationError",
    "CalibrationParseError",
    "CalibrationConstraintError",
    "MissingCalibrationError",
    "prob_yes",
    "prob_no",
    "log_prob",
    "noon_overlap_oracle",
    "load_calibration",
    "dump_calibration",
    "resolve_model",
]

CALIBRATION_FIELDS = ("n", "offset", "contrast")
_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)$")
_INTEGER = re.compile(r"^\+?\d+$")


class CalibrationError(ValueError):
    """Base class for calibration problems."""


class CalibrationParseError(CalibrationError):
    pass


class CalibrationConstraintError(CalibrationError):
    def __init__(self, n: int, message: str):
        super().__init__(f"calibration entry N={n}: {message}")
        self.n = n


class MissingCalibrationError(CalibrationError, KeyError):
    def __init__(self, n: int):
        super().__init__(f"no calibration entry for N={n}")
        self.n = n

    def __str__(self) -> str:  # KeyError would repr() the message
        return self.args[0]


class Outcome(str, enum.Enum):
    YES = "yes"
    NO = "no"


def _check_fringe(n: int, offset: float, contrast: float) -> str | None:
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        return f"particle number must be a positive integer, got {n!r}"
    if not (math.isfinite(offset) and math.isfinite(contrast)):
        return "offset and contrast must be finite"
    if contrast < 0:
        return f"contrast {contrast} is negative"
    if offset - contrast / 2 < 0:
        return f"A - C/2 = {offset - contrast / 2} < 0"
    if offset + contrast / 2 > 1:
        return f"A + C/2 = {offset + contrast / 2} > 1"
    return None


@dataclass(frozen=True)
class FringeModel:
    """Outcome law ``A + (C/2) cos(N theta)`` for one cat size."""

    n_particles: int
    offset: float = 0.5
    contrast: float = 1.0

    def __post_init__(self) -> None:
        problem = _check_fringe(self.n_particles, self.offset, self.contrast)
        if problem:
            raise ValueError(problem)

    @classmethod
    def ideal(cls, n_particles: int) -> "FringeModel":
        return cls(n_particles, 0.5, 1.0)

    @property
    def is_ideal(self) -> bool:
        return self.offset == 0.5 and self.contrast == 1.0


def prob_yes(model: FringeModel, theta):
    """Probability of a ``yes`` outcome; accepts scalars or arrays."""
    # A + (C/2)cos(x) rewritten as (A - C/2) + C cos^2(x/2): no cancellation
    # near the fringe minimum, so zeros of the ideal law stay zeros.
    half = 0.5 * model.n_particles * np.asarray(theta, dtype=float)
    p = (model.offset - 0.5 * model.contrast) + model.contrast * np.cos(half) ** 2
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def prob_no(model: FringeModel, theta):
    return 1.0 - prob_yes(model, theta)


def log_prob(model: FringeModel, outcome: Outcome, theta) -> np.ndarray:
    """Log-likelihood of ``outcome``; exact zeros map to ``-inf``.

    Both branches are evaluated in a cancellation-free form so that deep
    fringe minima keep full relative precision.
    """
    half = 0.5 * model.n_particles * np.asarray(theta, dtype=float)
    if Outcome(outcome) is Outcome.YES:
        floor = model.offset - 0.5 * model.contrast
        p = floor + model.contrast * np.cos(half) ** 2
    else:
        floor = 1.0 - model.offset - 0.5 * model.contrast
        p = floor + model.contrast * np.sin(half) ** 2
    with np.errstate(divide="ignore"):
        return np.log(np.clip(p, 0.0, 1.0))


def noon_overlap_oracle(n: int, theta: float, phase: float = 0.0) -> float:
    """|<Psi_N|Psi_N(theta)>|^2 from explicit two-mode amplitudes.

    The state is kept as its two nonzero amplitudes on |N,0> and |0,N>.
    The phase generator J_z = (N_a - N_b)/2 multiplies them by
    exp(-i N theta/2) and exp(+i N theta/2).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    psi = np.array([1.0, np.exp(1j * phase)], dtype=complex) / np.sqrt(2.0)
    jz = np.array([n / 2.0, -n / 2.0])
    shifted = np.exp(-1j * jz * theta) * psi
    return float(abs(np.vdot(psi, shifted)) ** 2)


class CalibrationTable(Mapping[int, FringeModel]):
    """Per-cat-size fringe parameters.  Lookups of missing N raise."""

    def __init__(self, entries: Mapping[int, tuple[float, float]] | Iterable[FringeModel] = ()):
        models: dict[int, FringeModel] = {}
        items = entries.items() if isinstance(entries, Mapping) else ((m.n_particles, m) for m in entries)
        for n, value in items:
            if isinstance(value, FringeModel):
                offset, contrast = value.offset, value.contrast
            else:
                offset, contrast = value
            problem = _check_fringe(n, float(offset), float(contrast))
            if problem:
                raise CalibrationConstraintError(n, problem)
            if n in models:
                raise CalibrationParseError(f"duplicate entry for N={n}")
            models[int(n)] = FringeModel(int(n), float(offset), float(contrast))
        self._models = dict(sorted(models.items()))

    def __getitem__(self, n: int) -> FringeModel:
        try:
            return self._models[n]
        except KeyError:
            raise MissingCalibrationError(n) from None

    def __iter__(self):
        return iter(self._models)

    def __len__(self) -> int:
        return len(self._models)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CalibrationTable):
            return NotImplemented
        return self._models == other._models

    def __hash__(self) -> int:
        return hash(tuple(self._models.items()))

    def __repr__(self) -> str:
        body = ", ".join(f"{n}: ({m.offset}, {m.contrast})" for n, m in self._models.items())
        return f"CalibrationTable({{{body}}})"

    @classmethod
    def ideal(cls, ns: Iterable[int]) -> "CalibrationTable":
        return cls(FringeModel.ideal(n) for n in ns)

    def model(self, n: int) -> FringeModel:
        return self[n]


def resolve_model(models: CalibrationTable | None, n: int) -> FringeModel:
    """``None`` means the ideal interferometer for every N."""
    if models is None:
        return FringeModel.ideal(n)
    return models[n]


def _parse_real(text: str, field: str, line: int) -> float:
    text = text.strip()
    if not _DECIMAL.match(text):
        raise CalibrationParseError(f"line {line}: {field}={text!r} is not a decimal number")
    return float(text)


def load_calibration(source: IO[bytes] | IO[str] | bytes | str) -> CalibrationTable:
    """Parse a calibration document (see module docstring for the format)."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CalibrationParseError(f"not UTF-8 text: {exc}") from None
    lines = [
        (i, ln) for i, ln in enumerate(source.splitlines(), start=1)
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not lines:
        return CalibrationTable()
    header_line, header = lines[0]
    fields = tuple(f.strip() for f in next(csv.reader([header])))
    if fields != CALIBRATION_FIELDS:
        raise CalibrationParseError(
            f"line {header_line}: header must be {','.join(CALIBRATION_FIELDS)}, got {header.strip()!r}"
        )
    models: list[FringeModel] = []
    seen: set[int] = set()
    for line_no, row in lines[1:]:
        cells = next(csv.reader([row]))
        if len(cells) != 3:
            raise CalibrationParseError(f"line {line_no}: expected 3 fields, got {len(cells)}")
        n_text = cells[0].strip()
        if not _INTEGER.match(n_text):
            raise CalibrationParseError(f"line {line_no}: n={n_text!r} is not a positive integer")
        n = int(n_text)
        if n in seen:
            raise CalibrationParseError(f"line {line_no}: duplicate entry for N={n}")
        seen.add(n)
        offset = _parse_real(cells[1], "offset", line_no)
        contrast = _parse_real(cells[2], "contrast", line_no)
        problem = _check_fringe(n, offset, contrast)
        if problem:
            raise CalibrationConstraintError(n, problem)
        models.append(FringeModel(n, offset, contrast))
    return CalibrationTable(models)


def _decimal(x: float) -> str:
    return np.format_float_positional(x, unique=True, trim="-")


def dump_calibration(table: CalibrationTable) -> str:
    buf = io.StringIO()
    buf.write(",".join(CALIBRATION_FIELDS) + "\n")
    for n, m in table.items():
        buf.write(f"{n},{_decimal(m.offset)},{_decimal(m.contrast)}\n")
    return buf.getvalue()
