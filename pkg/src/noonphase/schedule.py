"""Measurement plans: which cat sizes are used, in order, with how many replicas.

Schedule literal grammar (used by the CLI)::

    literal  := family ":" args
    single:N                       one shot with N particles
    arith:p=P[,nt=NT]              N = NT, 2NT, ..., P*NT        (nt defaults to 1)
    geom:p=P[,r=R][,m=M]           N = 1, R, ..., R^(P-1), M each (r=2, m=1)
    fixed:n=N,m=M                  M replicas of N
    ions:[nmax=K][,m=M]            N = 1..K, M each             (nmax=6, m=1)

Values are positive decimal integers; keys may not repeat and unknown keys
are rejected.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator

__all__ = [
    "Step",
    "Schedule",
    "ScheduleSyntaxError",
    "single",
    "arithmetic",
    "geometric",
    "fixed",
    "ion_sequence",
    "parse_schedule",
    "MAX_PARTICLES",
]

# cap on a single cat size; keeps N_T and grid sizes in exact-integer, allocatable range
MAX_PARTICLES = 2**62


class ScheduleSyntaxError(ValueError):
    def __init__(self, token: str, message: str):
        super().__init__(f"bad schedule token {token!r}: {message}")
        self.token = token


@dataclass(frozen=True)
class Step:
    n_particles: int
    replicas: int = 1


@dataclass(frozen=True)
class Schedule:
    steps: tuple[Step, ...]
    literal: str | None = None

    def __post_init__(self) -> None:
        steps = tuple(s if isinstance(s, Step) else Step(*s) for s in self.steps)
        if not steps:
            raise ValueError("a schedule needs at least one step")
        for s in steps:
            if type(s.n_particles) is not int or s.n_particles < 1:
                raise ValueError(f"particle number must be a positive integer, got {s.n_particles!r}")
            if type(s.replicas) is not int or s.replicas < 1:
                raise ValueError(f"replica count must be a positive integer, got {s.replicas!r}")
        object.__setattr__(self, "steps", steps)

    def __iter__(self) -> Iterator[Step]:
        return iter(self.steps)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def total_particles(self) -> int:
        return sum(s.n_particles * s.replicas for s in self.steps)

    @property
    def n_measurements(self) -> int:
        return sum(s.replicas for s in self.steps)

    @property
    def cat_sizes(self) -> tuple[int, ...]:
        return tuple(s.n_particles for s in self.steps)

    def __str__(self) -> str:
        if self.literal:
            return self.literal
        return ";".join(f"{s.n_particles}x{s.replicas}" for s in self.steps)


def _positive(name: str, value: int) -> None:
    if type(value) is not int or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")


def single(n_total: int) -> Schedule:
    _positive("n_total", n_total)
    return Schedule((Step(n_total, 1),), f"single:{n_total}")


def arithmetic(p: int, n_tilde: int = 1) -> Schedule:
    _positive("p", p)
    _positive("n_tilde", n_tilde)
    return Schedule(tuple(Step(k * n_tilde, 1) for k in range(1, p + 1)), f"arith:p={p},nt={n_tilde}")


def geometric(p: int, r: int = 2, m: int = 1) -> Schedule:
    _positive("p", p)
    _positive("r", r)
    _positive("m", m)
    largest = r ** (p - 1)
    if largest > MAX_PARTICLES:
        raise OverflowError(f"r^(p-1) = {r}^{p - 1} exceeds the supported particle range")
    return Schedule(tuple(Step(r**k, m) for k in range(p)), f"geom:p={p},r={r},m={m}")


def fixed(n_tilde: int, m: int) -> Schedule:
    _positive("n_tilde", n_tilde)
    _positive("m", m)
    return Schedule((Step(n_tilde, m),), f"fixed:n={n_tilde},m={m}")


def ion_sequence(n_max: int = 6, m: int = 1) -> Schedule:
    _positive("n_max", n_max)
    _positive("m", m)
    return Schedule(tuple(Step(n, m) for n in range(1, n_max + 1)), f"ions:nmax={n_max},m={m}")


_FAMILIES = {
    # family: (constructor, keyword map literal-key -> argument, required keys)
    "arith": (arithmetic, {"p": "p", "nt": "n_tilde"}, {"p"}),
    "geom": (geometric, {"p": "p", "r": "r", "m": "m"}, {"p"}),
    "fixed": (fixed, {"n": "n_tilde", "m": "m"}, {"n", "m"}),
    "ions": (ion_sequence, {"nmax": "n_max", "m": "m"}, set()),
}
_INT = re.compile(r"^[0-9]+$")


def _int_token(token: str, text: str) -> int:
    if not _INT.match(text):
        raise ScheduleSyntaxError(token, "expected a positive integer")
    value = int(text)
    if value < 1:
        raise ScheduleSyntaxError(token, "expected a positive integer")
    return value


def parse_schedule(literal: str) -> Schedule:
    """Build a :class:`Schedule` from its literal (see module docstring)."""
    text = literal.strip()
    family, sep, rest = text.partition(":")
    if not sep:
        raise ScheduleSyntaxError(text, "missing ':' after the family name")
    if family == "single":
        return single(_int_token(rest, rest.strip()))
    if family not in _FAMILIES:
        raise ScheduleSyntaxError(family, f"unknown family (expected single, {', '.join(_FAMILIES)})")
    build, keys, required = _FAMILIES[family]
    kwargs: dict[str, int] = {}
    seen: set[str] = set()
    for token in filter(None, (t.strip() for t in rest.split(","))):
        key, eq, value = token.partition("=")
        key = key.strip()
        if not eq:
            raise ScheduleSyntaxError(token, "expected key=value")
        if key not in keys:
            raise ScheduleSyntaxError(token, f"unknown key for {family} (allowed: {', '.join(keys)})")
        if key in seen:
            raise ScheduleSyntaxError(token, "repeated key")
        seen.add(key)
        kwargs[keys[key]] = _int_token(token, value.strip())
    missing = required - seen
    if missing:
        raise ScheduleSyntaxError(text, f"missing required key(s): {', '.join(sorted(missing))}")
    try:
        return build(**kwargs)
    except OverflowError as exc:
        raise ScheduleSyntaxError(text, str(exc)) from None
