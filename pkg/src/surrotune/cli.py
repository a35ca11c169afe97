"""Command-line front end: synth | fit | validate | optimize | predict | contour."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import __version__
from .costmodel import CostModelParams, default_params, generate_dataset
from .designspace import Box, Config, Lattice, SampleSet, aggregate_repeats, default_grid
from .errors import DomainError, FormatError, TuneError
from .io import (
    RunConfig,
    TuningReport,
    digest,
    emit_contours,
    emit_report,
    format_samples,
    loads_report,
    parse_samples_text,
    read_text,
    write_text,
)
from .optimizer import (
    NormalizationBounds,
    ObjectiveSpec,
    MinimizeSettings,
    SurrogateSet,
    box_bounds,
    compute_bounds,
    minimize,
)
from .surrogate import fit_quadratic, fit_rational, loo_cross_validate

TARGETS = ("latency_ms", "power_w", "miou")


def _floats(text: str, n: tuple[int, ...], flag: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise FormatError(f"{flag}: expected comma-separated numbers, got {text!r}") from None
    if len(vals) not in n:
        raise FormatError(f"{flag}: expected {' or '.join(map(str, n))} values, got {len(vals)}")
    return vals


def _ints(text: str, n: int, flag: str) -> tuple[int, ...]:
    vals = _floats(text, (n,), flag)
    if not all(v.is_integer() for v in vals):
        raise FormatError(f"{flag}: expected integers, got {text!r}")
    return tuple(int(v) for v in vals)


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    kw = {}
    if getattr(args, "weights", None):
        kw["weights"] = _floats(args.weights, (3,), "--weights")
    if getattr(args, "lattice", None):
        kw["lattice"] = Lattice(*_ints(args.lattice, 6, "--lattice"))
    if getattr(args, "box", None):
        kw["box"] = Box(*_floats(args.box, (4,), "--box"))
    if getattr(args, "bounds", None):
        if args.bounds in ("sampled", "box"):
            kw["bounds_policy"] = args.bounds
        else:
            kw["bounds_policy"] = "explicit"
            kw["explicit_bounds"] = NormalizationBounds(*_floats(args.bounds, (6,), "--bounds"))
    if getattr(args, "resolution", None):
        kw["resolution"] = _ints(args.resolution, 2, "--resolution")
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "sigma", None):
        vals = _floats(args.sigma, (1, 3), "--sigma")
        kw["sigma"] = dict(zip(("miou", "latency_ms", "power_w"), vals * 3 if len(vals) == 1 else vals))
    if getattr(args, "repeats", None) is not None:
        kw["repeats"] = args.repeats
    if getattr(args, "label", None):
        kw["label"] = args.label
    return replace(cfg, **kw) if kw else cfg


def _fit_box(cfg: RunConfig, data: SampleSet) -> Box:
    hull = Box.around(data.configs)
    return Box(
        min(hull.b_lo, cfg.box.b_lo), max(hull.b_hi, cfg.box.b_hi), min(hull.h_lo, cfg.box.h_lo), max(hull.h_hi, cfg.box.h_hi)
    )


def _load_samples(source) -> tuple[SampleSet, list, str]:
    text = read_text(source)
    raw = parse_samples_text(text)
    return aggregate_repeats(raw), raw, text


def _fit_all(data: SampleSet, raw: list, text: str, cfg: RunConfig) -> TuningReport:
    latency, d_lat = fit_quadratic(data, "latency_ms")
    power, d_pow = fit_quadratic(data, "power_w")
    miou, d_miou = fit_rational(data, _fit_box(cfg, data))
    return TuningReport(
        latency=latency,
        power=power,
        miou=miou,
        diagnostics={"latency_ms": d_lat, "power_w": d_pow, "miou": d_miou},
        box=cfg.box,
        provenance={
            "tool_version": __version__,
            "input_sha256": digest(text),
            "seed": cfg.seed,
            "label": cfg.label,
            "n_samples": len(raw),
            "n_configs": len(data),
            "sampled_configs": [[c.b, c.h] for c in data.configs],
        },
    )


def _print_fit_table(report: TuningReport, out=None) -> None:
    out = out or sys.stdout
    print(f"{'surrogate':<12}{'R2':>8}{'RMSE':>12}", file=out)
    for name in TARGETS:
        d = report.diagnostics[name]
        print(f"{name:<12}{d.r_squared:>8.3f}{d.rmse:>12.4g}", file=out)


def cmd_synth(args) -> int:
    cfg = _run_config(args)
    params = default_params()
    if cfg.costmodel:
        params = CostModelParams.from_dict(cfg.costmodel, base=params)
    if args.costmodel:
        params = CostModelParams.from_dict(json.loads(read_text(args.costmodel)), base=params)
    params = replace(params, rng_seed=cfg.seed)
    if cfg.sigma is not None:
        params = params.with_sigma(cfg.sigma)
    samples = generate_dataset(default_grid(), params, cfg.repeats)
    write_text(format_samples(samples), args.out or "-")
    return 0


def cmd_fit(args) -> int:
    cfg = _run_config(args)
    data, raw, text = _load_samples(args.samples)
    report = _fit_all(data, raw, text, cfg)
    _print_fit_table(report)
    if args.out:
        emit_report(report, args.out)
    return 0


def cmd_validate(args) -> int:
    cfg = _run_config(args)
    data, _, _ = _load_samples(args.samples)
    print(f"{'surrogate':<12}{'R2':>8}{'RMSE':>12}{'PRESS':>12}{'Q2':>8}")
    for name in TARGETS:
        d = loo_cross_validate(data, name, _fit_box(cfg, data) if name == "miou" else None)
        print(f"{name:<12}{d.r_squared:>8.3f}{d.rmse:>12.4g}{d.loo_press:>12.4g}{d.loo_q_squared:>8.3f}")
    return 0


def _bounds(cfg: RunConfig, models: SurrogateSet, configs) -> NormalizationBounds:
    if cfg.bounds_policy == "explicit":
        return cfg.explicit_bounds
    if cfg.bounds_policy == "box":
        return box_bounds(models, cfg.box)
    return compute_bounds(models, configs)


def cmd_optimize(args) -> int:
    cfg = _run_config(args)
    text = read_text(args.source)
    if text.lstrip().startswith("{"):
        report = loads_report(text)
        configs = [Config(b, h) for b, h in report.provenance.get("sampled_configs", [])]
        if cfg.bounds_policy == "sampled" and len(configs) < 2:
            raise FormatError("report carries no sampled configs; use --bounds box or explicit values")
        report = replace(report, box=cfg.box)
    else:
        raw = parse_samples_text(text)
        data = aggregate_repeats(raw)
        report = _fit_all(data, raw, text, cfg)
        configs = data.configs
    models = report.models
    bounds = _bounds(cfg, models, configs)
    spec = ObjectiveSpec(bounds, *cfg.weights, box=cfg.box)
    result = minimize(models, spec, MinimizeSettings(lattice=cfg.lattice))
    report = replace(
        report,
        lattice=cfg.lattice,
        weights=tuple(cfg.weights),
        bounds_policy=cfg.bounds_policy,
        bounds=bounds,
        optimization=result,
    )
    p, s = result.continuous_opt, result.snapped
    print(f"continuous optimum: b={p.b:.4f} h={p.h:.4f} objective={result.objective_value:.6g}")
    print(f"snapped config:     b={s.b} h={s.h} objective={result.snapped_objective:.6g}")
    print(f"{'metric':<14}{'continuous':>14}{'snapped':>14}")
    for key in result.predicted_continuous:
        a, b = result.predicted_continuous[key], result.predicted_snapped[key]
        print(f"{key:<14}{_fmt(a):>14}{_fmt(b):>14}")
    if args.out:
        emit_report(report, args.out)
    return 0


def _fmt(v) -> str:
    return "NA" if v is None else f"{v:.4f}"


def cmd_predict(args) -> int:
    report = loads_report(read_text(args.report))
    if not report.box.contains(args.b, args.h):
        raise DomainError(f"point ({args.b}, {args.h}) is outside the report's domain box {report.box}")
    for key, v in report.models.predict(args.b, args.h).items():
        print(f"{key:<14}{_fmt(v):>14}")
    return 0


def cmd_contour(args) -> int:
    cfg = _run_config(args)
    report = loads_report(read_text(args.report))
    if not args.out:
        raise FormatError("contour needs --out PREFIX")
    for path in emit_contours(report.models, report.box, cfg.resolution, args.out):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surrotune", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *flags):
        p.add_argument("--config", help="JSON run configuration; flags override it")
        if "box" in flags:
            p.add_argument("--box", help="blo,bhi,hlo,hhi (default 16,64,4,32)")
        if "opt" in flags:
            p.add_argument("--weights", help="wL,wP,wm (default 1,1,1)")
            p.add_argument("--lattice", help="bstep,blo,bhi,hstep,hlo,hhi (default 8,16,64,4,4,32)")
            p.add_argument("--bounds", help="sampled | box | Lmin,Lmax,Pmin,Pmax,mmin,mmax (default sampled)")
        if "seed" in flags:
            p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output path ('-' for stdout)")

    p = sub.add_parser("synth", help="generate a synthetic profiling dataset")
    common(p, "seed")
    p.add_argument("--sigma", help="noise std: x or miou,latency_ms,power_w")
    p.add_argument("--repeats", type=int)
    p.add_argument("--costmodel", help="JSON cost-model overrides")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit all surrogates and print R2/RMSE")
    p.add_argument("samples", help="sample file or '-'")
    common(p, "box", "seed")
    p.add_argument("--label")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("validate", help="leave-one-out diagnostics")
    p.add_argument("samples", help="sample file or '-'")
    common(p, "box")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("optimize", help="fit (or load), minimize and snap")
    p.add_argument("source", help="sample file, report, or '-'")
    common(p, "box", "opt", "seed")
    p.add_argument("--label")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("predict", help="evaluate the surrogates at one point")
    p.add_argument("report", help="report file or '-'")
    p.add_argument("b", type=float)
    p.add_argument("h", type=float)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("contour", help="emit b,h,value grids for each surrogate")
    p.add_argument("report", help="report file or '-'")
    common(p)
    p.add_argument("--resolution", help="NB,NH (default 49,29)")
    p.set_defaults(func=cmd_contour)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TuneError as exc:
        return _fail(exc.category, exc)
    except OSError as exc:
        return _fail("io", f"{exc.filename}: {exc.strerror}" if exc.filename else exc)
    except ValueError as exc:
        return _fail("domain", exc)


def _fail(category: str, detail) -> int:
    detail = " ".join(str(detail).split())
    print(f"error[{category}]: {detail}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
