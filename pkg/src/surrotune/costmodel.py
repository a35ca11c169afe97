"""Synthetic stand-in for on-device profiling.

Latency and power follow calibrated quadratics, mIoU a rational surface
of the same family the tuner fits, so closed-loop tests can check exact
recovery.  Parameter counts come from an approximate per-module formula
for a width-scaled ResNet-18 encoder / selective-scan decoder network.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Iterable, Mapping

import numpy as np

from .designspace import Config, Sample, default_grid
from .surrogate import QuadraticSurrogate, RationalSurrogate

DEFAULTS_FILE = "default_costmodel.json"

# selective-scan block constants
SCAN_DIRECTIONS = 4
STATE_SIZE = 16
DECODER_STAGES = 4
MSAA_KERNELS = (3, 5, 7)


@dataclass(frozen=True)
class CostModelParams:
    latency_ms: tuple[float, ...]
    power_w: tuple[float, ...]
    miou: tuple[float, ...]  # a0..a6
    noise_sigma: Mapping[str, float] = field(
        default_factory=lambda: {"miou": 0.0, "latency_ms": 0.0, "power_w": 0.0}
    )
    rng_seed: int = 0
    classes: int = 6

    def __post_init__(self):
        object.__setattr__(self, "latency_ms", tuple(float(c) for c in self.latency_ms))
        object.__setattr__(self, "power_w", tuple(float(c) for c in self.power_w))
        object.__setattr__(self, "miou", tuple(float(c) for c in self.miou))
        if len(self.latency_ms) != 6 or len(self.power_w) != 6 or len(self.miou) != 7:
            raise ValueError("cost model needs 6 latency, 6 power and 7 miou coefficients")
        sigma = {k: float(self.noise_sigma.get(k, 0.0)) for k in ("miou", "latency_ms", "power_w")}
        if any(v < 0 or not math.isfinite(v) for v in sigma.values()):
            raise ValueError(f"noise sigma must be finite and >= 0, got {sigma}")
        object.__setattr__(self, "noise_sigma", sigma)
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")

    @property
    def latency_model(self) -> QuadraticSurrogate:
        return QuadraticSurrogate(self.latency_ms, "latency_ms")

    @property
    def power_model(self) -> QuadraticSurrogate:
        return QuadraticSurrogate(self.power_w, "power_w")

    @property
    def miou_model(self) -> RationalSurrogate:
        return RationalSurrogate.from_params(self.miou)

    def values(self, b, h) -> dict[str, Any]:
        """Noiseless model values."""
        return {
            "miou": self.miou_model.predict(b, h),
            "latency_ms": self.latency_model.predict(b, h),
            "power_w": self.power_model.predict(b, h),
        }

    def with_sigma(self, sigma) -> CostModelParams:
        """``sigma`` is a scalar applied to all metrics or a per-metric mapping."""
        if isinstance(sigma, Mapping):
            new = dict(self.noise_sigma, **sigma)
        else:
            new = {k: float(sigma) for k in self.noise_sigma}
        return replace(self, noise_sigma=new)

    def to_dict(self) -> dict:
        return {
            "latency_ms": list(self.latency_ms),
            "power_w": list(self.power_w),
            "miou": list(self.miou),
            "noise_sigma": dict(self.noise_sigma),
            "rng_seed": self.rng_seed,
            "classes": self.classes,
        }

    @classmethod
    def from_dict(cls, d: Mapping, base: CostModelParams | None = None) -> CostModelParams:
        """Build from a mapping; keys missing from ``d`` fall back to ``base``."""
        merged = base.to_dict() if base is not None else {}
        for key in ("latency_ms", "power_w", "miou", "rng_seed", "classes"):
            if key in d:
                merged[key] = d[key]
        if "noise_sigma" in d:
            merged["noise_sigma"] = dict(merged.get("noise_sigma", {}), **d["noise_sigma"])
        return cls(**merged)


def default_params() -> CostModelParams:
    text = resources.files("surrotune").joinpath("data").joinpath(DEFAULTS_FILE).read_text()
    return CostModelParams.from_dict(json.loads(text))


@dataclass(frozen=True)
class ModuleParamBreakdown:
    encoder_params: int
    bridge_params: int
    decoder_params: int
    head_params: int

    @property
    def total(self) -> int:
        return self.encoder_params + self.bridge_params + self.decoder_params + self.head_params


def _encoder_params(b: int) -> int:
    # 7x7 stem, then four stages of two basic blocks at widths b, 2b, 4b, 8b
    total = 7 * 7 * 3 * b
    total += 2 * 2 * 9 * b * b
    for k in (1, 2, 3):
        w = b * 2**k
        prev = w // 2
        first = 9 * prev * w + 9 * w * w + prev * w  # includes 1x1 downsample
        second = 2 * 9 * w * w
        total += first + second
    return total


def _bridge_params(b: int) -> int:
    total = 0
    for s in range(DECODER_STAGES):
        w = b * 2**s
        total += w * w + w  # 1x1 encoder -> decoder width
        total += sum(k * k for k in MSAA_KERNELS) * w  # depthwise multi-scale branches
        total += w * w + w  # 1x1 fusion
    return total


def _decoder_params(b: int, h: int) -> int:
    total = 0
    for s in range(DECODER_STAGES):
        w = b * 2**s
        hs = h * 2**s
        rank = math.ceil(hs / 16)
        total += 2 * w * hs  # in-projection into the bottleneck (x and gate)
        total += 9 * hs + hs  # depthwise 3x3 with bias
        total += SCAN_DIRECTIONS * hs * (rank + 2 * STATE_SIZE)  # input-dependent state maps
        total += SCAN_DIRECTIONS * (rank * hs + hs)  # step-size projection
        total += SCAN_DIRECTIONS * hs * STATE_SIZE + SCAN_DIRECTIONS * hs  # A and skip terms
        total += hs * w  # out-projection back to the outer width
        if s < DECODER_STAGES - 1:
            total += 2 * w * w  # 1x1 merge from the deeper stage
    return total


def param_count(c: Config, classes: int = 6) -> ModuleParamBreakdown:
    """Approximate per-module parameter counts (normalization affine terms excluded)."""
    b, h = c.b, c.h
    return ModuleParamBreakdown(
        encoder_params=_encoder_params(b),
        bridge_params=_bridge_params(b),
        decoder_params=_decoder_params(b, h),
        head_params=9 * b * b + classes * b + classes,
    )


def model_size_mb(c: Config, classes: int = 6, bytes_per_param: int = 4) -> float:
    return param_count(c, classes).total * bytes_per_param / 1e6


def _rng(seed: int, c: Config, draw_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, c.b, c.h, draw_index]))


def synth_sample(c: Config, params: CostModelParams, draw_index: int = 0) -> Sample:
    """One noisy observation, a pure function of ``(seed, config, draw_index)``."""
    if draw_index < 0:
        raise ValueError("draw_index must be non-negative")
    base = params.values(float(c.b), float(c.h))
    sigma = params.noise_sigma
    z = _rng(params.rng_seed, c, draw_index).standard_normal(3)
    miou = base["miou"] + sigma["miou"] * z[0]
    latency = base["latency_ms"] + sigma["latency_ms"] * z[1]
    power = base["power_w"] + sigma["power_w"] * z[2]
    return Sample(
        c,
        miou=min(max(float(miou), 0.0), 100.0),
        latency_ms=max(float(latency), 1e-3),
        power_w=max(float(power), 1e-3),
    )


def generate_dataset(
    grid: Iterable[Config] | None = None, params: CostModelParams | None = None, repeats: int = 1
) -> list[Sample]:
    """``repeats`` draws per config, config-major order."""
    grid = default_grid() if grid is None else list(grid)
    params = default_params() if params is None else params
    if not grid:
        raise ValueError("grid must be non-empty")
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    return [synth_sample(c, params, k) for c in grid for k in range(repeats)]
