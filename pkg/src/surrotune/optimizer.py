"""Weighted, range-normalized objective over the continuous (b, h) box.

    f(b, h) = wL * (L - Lmin) / (Lmax - Lmin)
            + wP * (P - Pmin) / (Pmax - Pmin)
            - wm * (m - mmin) / (mmax - mmin)

Minimization runs multi-start projected gradient descent in unit-box
coordinates, then snaps the optimum onto the configuration lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np

from .designspace import (
    DEFAULT_BOX,
    DEFAULT_LATTICE,
    Box,
    Config,
    ContinuousPoint,
    Lattice,
    derive_metrics,
    snap_to_lattice,
)
from .errors import DegenerateBoundsError, DomainError, OptimizationError, PoleError
from .surrogate import POLE_EPS, QuadraticSurrogate, RationalSurrogate

METRIC_NAMES = ("latency", "power", "miou")


@dataclass(frozen=True)
class SurrogateSet:
    latency: QuadraticSurrogate
    power: QuadraticSurrogate
    miou: RationalSurrogate

    def predict(self, b: float, h: float) -> dict[str, float | None]:
        """All three surrogates plus derived energy/throughput at one point."""
        out = {
            "miou": float(self.miou.predict(b, h)),
            "latency_ms": float(self.latency.predict(b, h)),
            "power_w": float(self.power.predict(b, h)),
        }
        try:
            d = derive_metrics(out["latency_ms"], out["power_w"])
        except DomainError:
            out.update(energy_mj=None, fps=None, fps_per_watt=None)
        else:
            out.update(energy_mj=d.energy_mj, fps=d.fps, fps_per_watt=d.fps_per_watt)
        return out


@dataclass(frozen=True)
class NormalizationBounds:
    latency_min: float
    latency_max: float
    power_min: float
    power_max: float
    miou_min: float
    miou_max: float

    def pair(self, metric: str) -> tuple[float, float]:
        return getattr(self, f"{metric}_min"), getattr(self, f"{metric}_max")

    @property
    def degenerate(self) -> tuple[str, ...]:
        return tuple(m for m in METRIC_NAMES if not self.pair(m)[0] < self.pair(m)[1])


def compute_bounds(models: SurrogateSet, eval_points: Iterable) -> NormalizationBounds:
    """Min/max of each surrogate's predictions over ``eval_points``.

    Points may be Configs, ContinuousPoints or ``(b, h)`` pairs.
    """
    pts = []
    for p in eval_points:
        if isinstance(p, (Config, ContinuousPoint)):
            pts.append((float(p.b), float(p.h)))
        else:
            pts.append((float(p[0]), float(p[1])))
    if len(set(pts)) < 2:
        raise DomainError("normalization bounds need >= 2 distinct evaluation points")
    b = np.array([p[0] for p in pts])
    h = np.array([p[1] for p in pts])
    lat = models.latency.predict(b, h)
    pw = models.power.predict(b, h)
    mi = models.miou.predict(b, h)
    return NormalizationBounds(
        float(lat.min()), float(lat.max()), float(pw.min()), float(pw.max()), float(mi.min()), float(mi.max())
    )


def box_bounds(models: SurrogateSet, box: Box, step: float = 1.0) -> NormalizationBounds:
    """Bounds over a ``step``-spaced grid covering the continuous box."""
    B, H = np.meshgrid(_axis(box.b_lo, box.b_hi, step), _axis(box.h_lo, box.h_hi, step), indexing="ij")
    return compute_bounds(models, zip(B.ravel(), H.ravel()))


@dataclass(frozen=True)
class ObjectiveSpec:
    bounds: NormalizationBounds
    w_latency: float = 1.0
    w_power: float = 1.0
    w_miou: float = 1.0
    box: Box = DEFAULT_BOX

    def __post_init__(self):
        weights = self.weights
        if any(not math.isfinite(w) or w < 0 for w in weights):
            raise DomainError(f"weights must be finite and >= 0, got {weights}")
        if not any(w > 0 for w in weights):
            raise DomainError("at least one weight must be positive")
        if self.box.degenerate:
            raise DomainError(f"objective box is degenerate: {self.box}")
        bad = [m for m, w in zip(METRIC_NAMES, weights) if w > 0 and m in self.bounds.degenerate]
        if bad:
            raise DegenerateBoundsError(
                f"normalization range is empty for weighted metric(s) {', '.join(bad)}; "
                "set their weight to 0 or supply explicit bounds"
            )

    @property
    def weights(self) -> tuple[float, float, float]:
        return (self.w_latency, self.w_power, self.w_miou)

    @cached_property
    def scales(self) -> tuple[float, float, float]:
        """Per-metric multiplier ``w / (max - min)``, signed so the objective is a plain sum."""
        out = []
        for metric, w, sign in zip(METRIC_NAMES, self.weights, (1.0, 1.0, -1.0)):
            lo, hi = self.bounds.pair(metric)
            out.append(0.0 if w == 0 else sign * w / (hi - lo))
        return tuple(out)


def _objective(b, h, models: SurrogateSet, spec: ObjectiveSpec):
    sL, sP, sm = spec.scales
    bd = spec.bounds
    total = 0.0
    if sL:
        total = total + sL * (models.latency.predict(b, h) - bd.latency_min)
    if sP:
        total = total + sP * (models.power.predict(b, h) - bd.power_min)
    if sm:
        total = total + sm * (models.miou.predict(b, h) - bd.miou_min)
    return total


def _objective_gradient(b, h, models: SurrogateSet, spec: ObjectiveSpec) -> tuple[float, float]:
    gb = gh = 0.0
    for scale, model in zip(spec.scales, (models.latency, models.power, models.miou)):
        if scale:
            db, dh = model.gradient(b, h)
            gb += scale * db
            gh += scale * dh
    return gb, gh


def objective(p: ContinuousPoint, models: SurrogateSet, spec: ObjectiveSpec) -> float:
    return float(_objective(p.b, p.h, models, spec))


def objective_gradient(p: ContinuousPoint, models: SurrogateSet, spec: ObjectiveSpec) -> np.ndarray:
    """Analytic gradient in channel units."""
    return np.array(_objective_gradient(p.b, p.h, models, spec), dtype=float)


def objective_grid(models: SurrogateSet, spec: ObjectiveSpec, bs: np.ndarray, hs: np.ndarray) -> np.ndarray:
    """Objective on the ``bs x hs`` mesh (``ij`` indexing); pole cells are ``inf``."""
    B, H = np.meshgrid(bs, hs, indexing="ij")
    sL, sP, sm = spec.scales
    bd = spec.bounds
    vals = np.zeros_like(B)
    if sL:
        vals += sL * (models.latency.predict(B, H) - bd.latency_min)
    if sP:
        vals += sP * (models.power.predict(B, H) - bd.power_min)
    if sm:
        num, den = models.miou.parts(B, H)
        pole = np.abs(den) < POLE_EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            vals += sm * (num / den - bd.miou_min)
        vals[pole] = np.inf
    return vals


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(math.floor((hi - lo) / step + 1e-9))
    axis = lo + step * np.arange(n + 1)
    if axis[-1] < hi:
        axis = np.append(axis, hi)
    return axis


@dataclass(frozen=True)
class MinimizeSettings:
    coarse_step: float = 1.0
    n_best: int = 5
    armijo_c: float = 1e-4
    shrink: float = 0.5
    initial_step: float = 1.0
    gtol: float = 1e-8
    max_iter: int = 500
    min_step: float = 1e-20
    lattice: Lattice = DEFAULT_LATTICE


@dataclass(frozen=True)
class StartRecord:
    seed_index: int
    start: tuple[float, float]
    end: tuple[float, float] | None
    value: float | None
    iterations: int
    status: str  # converged | max_iter | stalled | failed
    error: str | None = None


@dataclass(frozen=True)
class OptimizationResult:
    continuous_opt: ContinuousPoint
    objective_value: float
    snapped: Config
    snapped_objective: float
    predicted_continuous: dict
    predicted_snapped: dict
    trace: tuple[StartRecord, ...] = field(default_factory=tuple)


def _clip01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def _descend(x0, f, grad, s: MinimizeSettings) -> tuple[tuple[float, float], float, int, str]:
    """Projected gradient descent on the unit square with Armijo backtracking.

    Works on plain float pairs: the problem is two-dimensional and the
    per-iteration cost is dominated by call overhead, not arithmetic.
    """
    u, v = _clip01(float(x0[0])), _clip01(float(x0[1]))
    fx = f(u, v)
    gu, gv = grad(u, v)
    for it in range(s.max_iter):
        # projected-gradient norm; the raw gradient need not vanish at an edge optimum
        if math.hypot(u - _clip01(u - gu), v - _clip01(v - gv)) < s.gtol:
            return (u, v), fx, it, "converged"
        t = s.initial_step
        while True:
            un, vn = _clip01(u - t * gu), _clip01(v - t * gv)
            fn = f(un, vn)
            if fn <= fx + s.armijo_c * (gu * (un - u) + gv * (vn - v)):
                break
            t *= s.shrink
            if t < s.min_step:
                return (u, v), fx, it, "stalled"
        u, v, fx = un, vn, fn
        gu, gv = grad(u, v)
    return (u, v), fx, s.max_iter, "max_iter"


def minimize(
    models: SurrogateSet, spec: ObjectiveSpec, settings: MinimizeSettings | None = None
) -> OptimizationResult:
    s = settings or MinimizeSettings()
    box = spec.box
    span_b, span_h = box.b_hi - box.b_lo, box.h_hi - box.h_lo

    def to_bh(u, v):
        b, h = box.from_unit(u, v)
        # clamp away rounding drift past the box edges
        return min(max(b, box.b_lo), box.b_hi), min(max(h, box.h_lo), box.h_hi)

    def f(u, v):
        return float(_objective(*to_bh(u, v), models, spec))

    def grad(u, v):
        gb, gh = _objective_gradient(*to_bh(u, v), models, spec)
        return gb * span_b, gh * span_h

    bs = _axis(box.b_lo, box.b_hi, s.coarse_step)
    hs = _axis(box.h_lo, box.h_hi, s.coarse_step)
    coarse = objective_grid(models, spec, bs, hs).ravel()
    order = np.argsort(coarse, kind="stable")
    seeds = []
    for k in order[: s.n_best]:
        if np.isfinite(coarse[k]):
            i, j = divmod(int(k), len(hs))
            seeds.append(box.to_unit(float(bs[i]), float(hs[j])))
    seeds += [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]

    trace = []
    best = None
    for idx, seed in enumerate(seeds):
        start = box.from_unit(*seed)
        try:
            x, fx, its, status = _descend(seed, f, grad, s)
        except PoleError as exc:
            trace.append(StartRecord(idx, start, None, None, 0, "failed", str(exc)))
            continue
        p = ContinuousPoint(*to_bh(*x))
        trace.append(StartRecord(idx, start, (p.b, p.h), fx, its, status))
        if best is None or fx < best[0]:
            best = (fx, p)
    if best is None:
        raise OptimizationError("every descent start hit a pole", trace)

    value, opt = best

    def scorer(q: ContinuousPoint) -> float:
        try:
            return objective(q, models, spec)
        except PoleError:
            return math.inf

    snapped = snap_to_lattice(opt, s.lattice, scorer)
    return OptimizationResult(
        continuous_opt=opt,
        objective_value=value,
        snapped=snapped,
        snapped_objective=scorer(snapped.as_point()),
        predicted_continuous=models.predict(opt.b, opt.h),
        predicted_snapped=models.predict(float(snapped.b), float(snapped.h)),
        trace=tuple(trace),
    )
