"""Sample files, tuning reports, contour grids and run configuration.

Sample files are comma-separated with header ``b,h,miou,latency_ms,power_w``
(any column order); blank lines and ``#`` comments are skipped.  Reports
are JSON with sorted keys and shortest round-trip float repr, so identical
inputs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .designspace import DEFAULT_BOX, Box, Config, ContinuousPoint, Lattice, Sample
from .errors import DomainError, FormatError
from .optimizer import NormalizationBounds, OptimizationResult, StartRecord, SurrogateSet
from .surrogate import POLE_EPS, QUAD_TERMS, FitDiagnostics, QuadraticSurrogate, RationalSurrogate

SAMPLE_COLUMNS = ("b", "h", "miou", "latency_ms", "power_w")
REPORT_FORMAT = "surrotune-report/1"
NA = "NA"


# -- samples ----------------------------------------------------------------


def read_text(source) -> str:
    """Text of a path, ``-`` (stdin) or an open text stream."""
    if source == "-":
        return sys.stdin.read()
    if hasattr(source, "read"):
        return source.read()
    return Path(source).read_text(encoding="utf-8")


def _number(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise FormatError(f"row {row}, column {col}: not a number: {cell!r}") from None
    if not math.isfinite(value):
        raise FormatError(f"row {row}, column {col}: non-finite value {cell!r}")
    return value


def parse_samples_text(text: str) -> list[Sample]:
    lines = [
        (i, line) for i, line in enumerate(text.splitlines(), start=1) if line.strip() and not line.lstrip().startswith("#")
    ]
    if not lines:
        raise FormatError("no header line found")
    rows = list(csv.reader(line for _, line in lines))
    header = [c.strip() for c in rows[0]]
    for col in header:
        if col not in SAMPLE_COLUMNS:
            raise FormatError(f"unknown header column {col!r}")
    if len(set(header)) != len(header):
        raise FormatError(f"duplicate header column in {header}")
    for col in SAMPLE_COLUMNS:
        if col not in header:
            raise FormatError(f"missing header column {col!r}")
    samples = []
    for (lineno, _), cells in zip(lines[1:], rows[1:]):
        if len(cells) != len(header):
            raise FormatError(f"row {lineno}: expected {len(header)} cells, got {len(cells)}")
        vals = {col: _number(cell.strip(), lineno, col) for col, cell in zip(header, cells)}
        for col in ("b", "h"):
            if not vals[col].is_integer():
                raise FormatError(f"row {lineno}, column {col}: expected an integer width, got {vals[col]!r}")
        try:
            samples.append(
                Sample(Config(int(vals["b"]), int(vals["h"])), vals["miou"], vals["latency_ms"], vals["power_w"])
            )
        except DomainError as exc:
            raise FormatError(f"row {lineno}: {exc}") from None
    if not samples:
        raise FormatError("sample file has a header but no data rows")
    return samples


def parse_samples(path) -> list[Sample]:
    """Parse a sample file; repeated configs are kept as separate rows."""
    return parse_samples_text(read_text(path))


def format_samples(samples: Iterable[Sample]) -> str:
    out = [",".join(SAMPLE_COLUMNS)]
    for s in samples:
        out.append(f"{s.config.b},{s.config.h},{s.miou!r},{s.latency_ms!r},{s.power_w!r}")
    return "\n".join(out) + "\n"


def write_text(text: str, path) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc.strerror or exc}") from None


def write_samples(samples: Iterable[Sample], path) -> None:
    write_text(format_samples(samples), path)


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# -- report -----------------------------------------------------------------


@dataclass(frozen=True)
class TuningReport:
    latency: QuadraticSurrogate
    power: QuadraticSurrogate
    miou: RationalSurrogate
    diagnostics: Mapping[str, FitDiagnostics]
    box: Box = DEFAULT_BOX
    lattice: Lattice | None = None
    weights: tuple[float, float, float] | None = None
    bounds_policy: str | None = None
    bounds: NormalizationBounds | None = None
    optimization: OptimizationResult | None = None
    provenance: Mapping[str, Any] = field(default_factory=dict)

    @property
    def models(self) -> SurrogateSet:
        return SurrogateSet(self.latency, self.power, self.miou)


def _diag_to_dict(d: FitDiagnostics) -> dict:
    out = asdict(d)
    for k in ("residuals", "fitted", "loo_residuals"):
        if out[k] is not None:
            out[k] = list(out[k])
    return out


def _diag_from_dict(d: Mapping) -> FitDiagnostics:
    def tup(v):
        return None if v is None else tuple(float(x) for x in v)

    return FitDiagnostics(
        r_squared=float(d["r_squared"]),
        rmse=float(d["rmse"]),
        residuals=tup(d["residuals"]),
        fitted=tup(d["fitted"]),
        loo_press=None if d.get("loo_press") is None else float(d["loo_press"]),
        loo_q_squared=None if d.get("loo_q_squared") is None else float(d["loo_q_squared"]),
        loo_residuals=tup(d.get("loo_residuals")),
    )


def _opt_to_dict(r: OptimizationResult) -> dict:
    return {
        "continuous_opt": {"b": r.continuous_opt.b, "h": r.continuous_opt.h},
        "objective_value": r.objective_value,
        "snapped": {"b": r.snapped.b, "h": r.snapped.h},
        "snapped_objective": r.snapped_objective,
        "predicted_continuous": dict(r.predicted_continuous),
        "predicted_snapped": dict(r.predicted_snapped),
        "trace": [
            {
                "seed_index": t.seed_index,
                "start": list(t.start),
                "end": None if t.end is None else list(t.end),
                "value": t.value,
                "iterations": t.iterations,
                "status": t.status,
                "error": t.error,
            }
            for t in r.trace
        ],
    }


def _opt_from_dict(d: Mapping) -> OptimizationResult:
    return OptimizationResult(
        continuous_opt=ContinuousPoint(d["continuous_opt"]["b"], d["continuous_opt"]["h"]),
        objective_value=float(d["objective_value"]),
        snapped=Config(d["snapped"]["b"], d["snapped"]["h"]),
        snapped_objective=float(d["snapped_objective"]),
        predicted_continuous=dict(d["predicted_continuous"]),
        predicted_snapped=dict(d["predicted_snapped"]),
        trace=tuple(
            StartRecord(
                seed_index=t["seed_index"],
                start=tuple(t["start"]),
                end=None if t["end"] is None else tuple(t["end"]),
                value=t["value"],
                iterations=t["iterations"],
                status=t["status"],
                error=t["error"],
            )
            for t in d["trace"]
        ),
    )


def report_to_dict(report: TuningReport) -> dict:
    return {
        "format": REPORT_FORMAT,
        "surrogates": {
            "latency_ms": {"kind": "quadratic", "basis": list(QUAD_TERMS), "coeffs": list(report.latency.coeffs)},
            "power_w": {"kind": "quadratic", "basis": list(QUAD_TERMS), "coeffs": list(report.power.coeffs)},
            "miou": {
                "kind": "rational",
                "denominator": list(report.miou.denominator),
                "numerator": list(report.miou.numerator),
            },
        },
        "diagnostics": {k: _diag_to_dict(v) for k, v in report.diagnostics.items()},
        "box": asdict(report.box),
        "lattice": None if report.lattice is None else asdict(report.lattice),
        "weights": None if report.weights is None else list(report.weights),
        "bounds_policy": report.bounds_policy,
        "bounds": None if report.bounds is None else asdict(report.bounds),
        "optimization": None if report.optimization is None else _opt_to_dict(report.optimization),
        "provenance": dict(report.provenance),
    }


def report_from_dict(d: Mapping) -> TuningReport:
    if d.get("format") != REPORT_FORMAT:
        raise FormatError(f"unsupported report format {d.get('format')!r}")
    try:
        sur = d["surrogates"]
        return TuningReport(
            latency=QuadraticSurrogate(sur["latency_ms"]["coeffs"], "latency_ms"),
            power=QuadraticSurrogate(sur["power_w"]["coeffs"], "power_w"),
            miou=RationalSurrogate(sur["miou"]["numerator"], sur["miou"]["denominator"]),
            diagnostics={k: _diag_from_dict(v) for k, v in d["diagnostics"].items()},
            box=Box(**d["box"]),
            lattice=None if d.get("lattice") is None else Lattice(**d["lattice"]),
            weights=None if d.get("weights") is None else tuple(float(w) for w in d["weights"]),
            bounds_policy=d.get("bounds_policy"),
            bounds=None if d.get("bounds") is None else NormalizationBounds(**d["bounds"]),
            optimization=None if d.get("optimization") is None else _opt_from_dict(d["optimization"]),
            provenance=dict(d.get("provenance", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed report: {exc}") from None


def dumps_report(report: TuningReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def loads_report(text: str) -> TuningReport:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"report is not valid JSON: {exc}") from None
    return report_from_dict(data)


def emit_report(report: TuningReport, path) -> None:
    write_text(dumps_report(report), path)


def load_report(path) -> TuningReport:
    return loads_report(read_text(path))


# -- contours ---------------------------------------------------------------


def _cell(v: float) -> str:
    return NA if not math.isfinite(v) else repr(float(v))


def contour_tables(models: SurrogateSet, box, resolution: tuple[int, int]) -> dict[str, str]:
    """``b,h,value`` tables for each surrogate on an even grid over the box.

    ``box`` may be a Box or anything with a ``box`` attribute.
    """
    box = getattr(box, "box", box)
    nb, nh = resolution
    bs, hs = box.grid(nb, nh)
    B, H = np.meshgrid(bs, hs, indexing="ij")
    num, den = models.miou.parts(B, H)
    with np.errstate(divide="ignore", invalid="ignore"):
        miou = np.where(np.abs(den) < POLE_EPS, np.nan, num / den)
    grids = {"miou": miou, "latency": models.latency.predict(B, H), "power": models.power.predict(B, H)}
    tables = {}
    for name, values in grids.items():
        lines = ["b,h,value"]
        for i, b in enumerate(bs):
            for j, h in enumerate(hs):
                lines.append(f"{float(b)!r},{float(h)!r},{_cell(values[i, j])}")
        tables[name] = "\n".join(lines) + "\n"
    return tables


def emit_contours(models: SurrogateSet, box, resolution: tuple[int, int], path_prefix: str) -> list[Path]:
    """Write ``<prefix>_miou.csv``, ``<prefix>_latency.csv`` and ``<prefix>_power.csv``."""
    if not str(path_prefix):
        raise FormatError("contour path prefix must be non-empty")
    paths = []
    for name, text in contour_tables(models, box, resolution).items():
        path = Path(f"{path_prefix}_{name}.csv")
        write_text(text, path)
        paths.append(path)
    return paths


# -- run configuration ------------------------------------------------------

BOUNDS_POLICIES = ("sampled", "box", "explicit")


@dataclass(frozen=True)
class RunConfig:
    lattice: Lattice = Lattice()
    box: Box = DEFAULT_BOX
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    bounds_policy: str = "sampled"
    explicit_bounds: NormalizationBounds | None = None
    resolution: tuple[int, int] = (49, 29)
    seed: int = 0
    sigma: Mapping[str, float] | None = None
    repeats: int = 1
    costmodel: Mapping[str, Any] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        if self.bounds_policy not in BOUNDS_POLICIES:
            raise DomainError(f"bounds policy must be one of {BOUNDS_POLICIES}, got {self.bounds_policy!r}")
        if self.bounds_policy == "explicit" and self.explicit_bounds is None:
            raise DomainError("explicit bounds policy needs explicit_bounds")
        if min(self.resolution) < 2:
            raise DomainError(f"resolution must be >= 2 per axis, got {self.resolution}")
        if self.repeats < 1:
            raise DomainError("repeats must be >= 1")

    @classmethod
    def from_dict(cls, d: Mapping) -> RunConfig:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise FormatError(f"unknown run-config keys: {sorted(unknown)}")
        try:
            return cls._from_dict(d)
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed run config: {exc}") from None

    @classmethod
    def _from_dict(cls, d: Mapping) -> RunConfig:
        kw: dict[str, Any] = {}
        if "lattice" in d:
            kw["lattice"] = Lattice(**d["lattice"])
        if "box" in d:
            kw["box"] = Box(**d["box"])
        if "weights" in d:
            kw["weights"] = tuple(float(w) for w in d["weights"])
        if "explicit_bounds" in d:
            kw["explicit_bounds"] = NormalizationBounds(**d["explicit_bounds"])
        if "resolution" in d:
            kw["resolution"] = tuple(int(r) for r in d["resolution"])
        for key in ("bounds_policy", "seed", "sigma", "repeats", "costmodel", "label"):
            if key in d:
                kw[key] = d[key]
        return cls(**kw)

    @classmethod
    def load(cls, path) -> RunConfig:
        try:
            return cls.from_dict(json.loads(read_text(path)))
        except json.JSONDecodeError as exc:
            raise FormatError(f"run config is not valid JSON: {exc}") from None
