"""Design-space types: configurations, profiled samples, lattices and boxes.

A configuration is a pair ``(b, h)``: encoder base width and decoder
bottleneck width, both in channels.  Optimization happens over real-valued
points and is mapped back onto an integer lattice of buildable widths.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import DomainError


@dataclass(frozen=True, order=True)
class Config:
    b: int
    h: int

    def __post_init__(self):
        for name in ("b", "h"):
            value = getattr(self, name)
            if isinstance(value, bool):
                raise DomainError(f"{name} must be an integer, got {value!r}")
            try:
                value = operator.index(value)
            except TypeError:
                if isinstance(value, float) and value.is_integer():
                    value = int(value)
                else:
                    raise DomainError(f"{name} must be an integer, got {value!r}") from None
            if value < 1:
                raise DomainError(f"{name} must be >= 1, got {value}")
            object.__setattr__(self, name, value)

    def as_point(self) -> ContinuousPoint:
        return ContinuousPoint(float(self.b), float(self.h))


@dataclass(frozen=True)
class ContinuousPoint:
    b: float
    h: float

    def __post_init__(self):
        if not (math.isfinite(self.b) and math.isfinite(self.h)):
            raise DomainError(f"non-finite point ({self.b}, {self.h})")
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "h", float(self.h))


@dataclass(frozen=True)
class Box:
    """Closed rectangle ``[b_lo, b_hi] x [h_lo, h_hi]`` in channel units."""

    b_lo: float
    b_hi: float
    h_lo: float
    h_hi: float

    def __post_init__(self):
        vals = (self.b_lo, self.b_hi, self.h_lo, self.h_hi)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"non-finite box {vals}")
        if self.b_lo > self.b_hi or self.h_lo > self.h_hi:
            raise DomainError(f"box has lo > hi: {vals}")
        for name in ("b_lo", "b_hi", "h_lo", "h_hi"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def degenerate(self) -> bool:
        return self.b_lo == self.b_hi or self.h_lo == self.h_hi

    def contains(self, b: float, h: float) -> bool:
        return self.b_lo <= b <= self.b_hi and self.h_lo <= h <= self.h_hi

    def corners(self) -> list[tuple[float, float]]:
        return [
            (self.b_lo, self.h_lo),
            (self.b_lo, self.h_hi),
            (self.b_hi, self.h_lo),
            (self.b_hi, self.h_hi),
        ]

    def to_unit(self, b, h):
        return (b - self.b_lo) / (self.b_hi - self.b_lo), (h - self.h_lo) / (self.h_hi - self.h_lo)

    def from_unit(self, u, v):
        return self.b_lo + u * (self.b_hi - self.b_lo), self.h_lo + v * (self.h_hi - self.h_lo)

    def grid(self, nb: int, nh: int) -> tuple[np.ndarray, np.ndarray]:
        """Evenly spaced axes (endpoints included) with ``nb`` and ``nh`` points."""
        if nb < 2 or nh < 2:
            raise DomainError(f"grid resolution must be >= 2 per axis, got {nb}x{nh}")
        return np.linspace(self.b_lo, self.b_hi, nb), np.linspace(self.h_lo, self.h_hi, nh)

    @classmethod
    def around(cls, configs: Iterable[Config]) -> Box:
        configs = list(configs)
        if not configs:
            raise DomainError("cannot bound an empty set of configs")
        bs = [c.b for c in configs]
        hs = [c.h for c in configs]
        return cls(min(bs), max(bs), min(hs), max(hs))


DEFAULT_BOX = Box(16, 64, 4, 32)


@dataclass(frozen=True)
class Lattice:
    b_step: int = 8
    b_lo: int = 16
    b_hi: int = 64
    h_step: int = 4
    h_lo: int = 4
    h_hi: int = 32

    def __post_init__(self):
        for axis in ("b", "h"):
            step, lo, hi = (getattr(self, f"{axis}_{k}") for k in ("step", "lo", "hi"))
            if min(step, lo, hi) < 1:
                raise DomainError(f"{axis} lattice values must be positive integers")
            if lo > hi:
                raise DomainError(f"{axis} lattice has lo > hi ({lo} > {hi})")
            if (hi - lo) % step:
                raise DomainError(f"{axis} step {step} does not divide range {hi - lo}")

    @property
    def box(self) -> Box:
        return Box(self.b_lo, self.b_hi, self.h_lo, self.h_hi)

    def b_values(self) -> range:
        return range(self.b_lo, self.b_hi + 1, self.b_step)

    def h_values(self) -> range:
        return range(self.h_lo, self.h_hi + 1, self.h_step)

    def points(self) -> Iterator[Config]:
        for b in self.b_values():
            for h in self.h_values():
                yield Config(b, h)

    def contains(self, c: Config) -> bool:
        return (
            self.b_lo <= c.b <= self.b_hi
            and self.h_lo <= c.h <= self.h_hi
            and (c.b - self.b_lo) % self.b_step == 0
            and (c.h - self.h_lo) % self.h_step == 0
        )


DEFAULT_LATTICE = Lattice()

# 4x4 profiling grid
DEFAULT_GRID_B = (16, 32, 48, 64)
DEFAULT_GRID_H = (4, 8, 16, 32)


def default_grid() -> list[Config]:
    return [Config(b, h) for b in DEFAULT_GRID_B for h in DEFAULT_GRID_H]


def _check_positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise DomainError(f"{name} must be positive and finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Sample:
    config: Config
    miou: float
    latency_ms: float
    power_w: float

    def __post_init__(self):
        miou = float(self.miou)
        if not (math.isfinite(miou) and 0.0 <= miou <= 100.0):
            raise DomainError(f"miou must lie in [0, 100], got {self.miou!r}")
        object.__setattr__(self, "miou", miou)
        object.__setattr__(self, "latency_ms", _check_positive("latency_ms", self.latency_ms))
        object.__setattr__(self, "power_w", _check_positive("power_w", self.power_w))


METRICS = ("miou", "latency_ms", "power_w")


@dataclass(frozen=True)
class SampleSet:
    """Ordered samples; ``distinct`` is True when no config repeats."""

    samples: tuple[Sample, ...]
    distinct: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        configs = [s.config for s in self.samples]
        object.__setattr__(self, "distinct", len(set(configs)) == len(configs))

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    @property
    def configs(self) -> list[Config]:
        return [s.config for s in self.samples]

    @property
    def n_configs(self) -> int:
        return len(set(self.configs))

    def column(self, name: str) -> np.ndarray:
        if name == "b":
            return np.array([s.config.b for s in self.samples], dtype=float)
        if name == "h":
            return np.array([s.config.h for s in self.samples], dtype=float)
        if name not in METRICS:
            raise KeyError(name)
        return np.array([getattr(s, name) for s in self.samples], dtype=float)

    def without(self, index: int) -> SampleSet:
        return SampleSet(self.samples[:index] + self.samples[index + 1 :])


@dataclass(frozen=True)
class DerivedMetrics:
    energy_mj: float
    fps: float
    fps_per_watt: float


def derive_metrics(latency_ms: float, power_w: float) -> DerivedMetrics:
    """Energy per image (ms x W = mJ), throughput and throughput per watt."""
    latency_ms = _check_positive("latency_ms", latency_ms)
    power_w = _check_positive("power_w", power_w)
    fps = 1000.0 / latency_ms
    return DerivedMetrics(energy_mj=latency_ms * power_w, fps=fps, fps_per_watt=fps / power_w)


def aggregate_repeats(raw: Iterable[Sample]) -> SampleSet:
    """Collapse repeated configs to their per-field arithmetic mean.

    Output order follows first appearance of each config.
    """
    groups: dict[Config, list[Sample]] = {}
    for s in raw:
        groups.setdefault(s.config, []).append(s)
    if not groups:
        raise DomainError("cannot aggregate an empty sample collection")
    out = []
    for config, reps in groups.items():
        if len(reps) == 1:
            out.append(reps[0])
            continue
        n = len(reps)
        out.append(
            Sample(
                config,
                miou=math.fsum(s.miou for s in reps) / n,
                latency_ms=math.fsum(s.latency_ms for s in reps) / n,
                power_w=math.fsum(s.power_w for s in reps) / n,
            )
        )
    return SampleSet(out)


def _axis_candidates(x: float, lo: int, step: int, hi: int) -> list[int]:
    k = (x - lo) / step
    cands = {lo + step * math.floor(k), lo + step * math.ceil(k)}
    return sorted(min(max(c, lo), hi) for c in cands)


def snap_to_lattice(
    p: ContinuousPoint,
    lat: Lattice = DEFAULT_LATTICE,
    tiebreak_scorer: Callable[[ContinuousPoint], float] | None = None,
) -> Config:
    """Nearest lattice point, distance measured in lattice steps per axis.

    The scaled distance separates by axis, so the minimizer is among the
    floor/ceil neighbours on each axis.  Exact ties go to the lower scorer
    value when a scorer is given, then to lower b, then lower h.
    """
    if not lat.box.contains(p.b, p.h):
        raise DomainError(f"point ({p.b}, {p.h}) lies outside lattice box {lat.box}")
    best_key = None
    best = None
    cands: Sequence[tuple[int, int]] = [
        (b, h)
        for b in _axis_candidates(p.b, lat.b_lo, lat.b_step, lat.b_hi)
        for h in _axis_candidates(p.h, lat.h_lo, lat.h_step, lat.h_hi)
    ]
    dists = {c: ((p.b - c[0]) / lat.b_step) ** 2 + ((p.h - c[1]) / lat.h_step) ** 2 for c in cands}
    dmin = min(dists.values())
    tied = sorted(c for c, d in dists.items() if d == dmin)
    if len(tied) == 1 or tiebreak_scorer is None:
        best = tied[0]
    else:
        for c in tied:
            key = (tiebreak_scorer(ContinuousPoint(*c)), c)
            if best_key is None or key < best_key:
                best_key, best = key, c
    return Config(*best)
