from __future__ import annotations

import io
import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from families import exact_dataset, random_models
from surrotune.costmodel import default_params, generate_dataset
from surrotune.designspace import DEFAULT_BOX, Box, Config, Sample, SampleSet, default_grid
from surrotune.errors import FormatError
from surrotune.io import (
    RunConfig,
    TuningReport,
    contour_tables,
    dumps_report,
    emit_contours,
    emit_report,
    format_samples,
    load_report,
    loads_report,
    parse_samples,
    parse_samples_text,
    read_text,
)
from surrotune.optimizer import ObjectiveSpec, SurrogateSet, compute_bounds, minimize
from surrotune.surrogate import QuadraticSurrogate, RationalSurrogate, fit_quadratic, fit_rational

HEADER = "b,h,miou,latency_ms,power_w\n"


class TestParse:
    def test_table_row(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text(HEADER + "64,32,50.21,178.63,7.21\n")
        (s,) = parse_samples(path)
        assert s == Sample(Config(64, 32), 50.21, 178.63, 7.21)

    def test_repeats_kept(self):
        rows = parse_samples_text(HEADER + "32,8,45,110,5.7\n32,8,46,109,5.8\n")
        assert len(rows) == 2 and rows[0].config == rows[1].config

    def test_comments_blank_lines_and_column_order(self):
        rows = parse_samples_text("# profiled\n\nlatency_ms,power_w,b,h,miou\n\n110,5.7,32,8,45\n# end\n")
        assert rows == [Sample(Config(32, 8), 45.0, 110.0, 5.7)]

    def test_header_only(self):
        with pytest.raises(FormatError, match="no data"):
            parse_samples_text(HEADER)

    def test_missing_column_named(self):
        with pytest.raises(FormatError, match="power_w"):
            parse_samples_text("b,h,miou,latency_ms\n16,4,40,80\n")

    def test_unknown_column_named(self):
        with pytest.raises(FormatError, match="fps"):
            parse_samples_text("b,h,miou,latency_ms,power_w,fps\n16,4,40,80,5,12\n")

    def test_non_numeric_cell_located(self):
        with pytest.raises(FormatError, match=r"row 3, column latency_ms"):
            parse_samples_text(HEADER + "16,4,40,80,5\n16,8,40,fast,5\n")

    def test_fractional_width(self):
        with pytest.raises(FormatError, match="column b"):
            parse_samples_text(HEADER + "16.5,4,40,80,5\n")

    def test_stream_source(self):
        assert len(parse_samples_text(read_text(io.StringIO(HEADER + "16,4,40,80,5\n")))) == 1

    @given(
        st.lists(
            st.tuples(
                st.integers(1, 512),
                st.integers(1, 512),
                st.floats(0, 100),
                st.floats(1e-3, 1e6),
                st.floats(1e-3, 1e4),
            ),
            min_size=1,
            max_size=20,
        )
    )
    def test_round_trip(self, rows):
        samples = [Sample(Config(b, h), m, l, p) for b, h, m, l, p in rows]
        assert parse_samples_text(format_samples(samples)) == samples


def _report(optimized: bool = True) -> TuningReport:
    data = SampleSet(generate_dataset(default_grid(), default_params()))
    lat, dl = fit_quadratic(data, "latency_ms")
    pw, dp = fit_quadratic(data, "power_w")
    mi, dm = fit_rational(data, DEFAULT_BOX)
    report = TuningReport(lat, pw, mi, {"latency_ms": dl, "power_w": dp, "miou": dm}, provenance={"seed": 0})
    if not optimized:
        return report
    spec = ObjectiveSpec(compute_bounds(report.models, data.configs))
    return replace(report, weights=(1.0, 1.0, 1.0), bounds_policy="sampled", bounds=spec.bounds, optimization=minimize(report.models, spec))


class TestReport:
    def test_round_trip_identity(self, tmp_path):
        for optimized in (False, True):
            report = _report(optimized)
            path = tmp_path / "r.json"
            emit_report(report, path)
            back = load_report(path)
            assert back == report
            assert dumps_report(back) == dumps_report(report)

    def test_deterministic_bytes(self):
        assert dumps_report(_report()) == dumps_report(_report())

    def test_coefficient_count(self):
        d = json.loads(dumps_report(_report()))
        sur = d["surrogates"]
        n = len(sur["latency_ms"]["coeffs"]) + len(sur["power_w"]["coeffs"])
        n += len(sur["miou"]["numerator"]) + len(sur["miou"]["denominator"])
        assert n == 6 + 6 + 7

    def test_sorted_keys(self):
        text = dumps_report(_report())
        assert text == json.dumps(json.loads(text), indent=2, sort_keys=True) + "\n"

    @pytest.mark.parametrize("text", ["not json", '{"format": "other/9"}', '{"format": "surrotune-report/1"}'])
    def test_bad_reports(self, text):
        with pytest.raises(FormatError):
            loads_report(text)


class TestContours:
    def test_four_by_four(self):
        models, _ = random_models(0)
        tables = contour_tables(models, DEFAULT_BOX, (4, 4))
        assert set(tables) == {"miou", "latency", "power"}
        rows = tables["latency"].splitlines()
        assert rows[0] == "b,h,value" and len(rows) == 17
        cells = [tuple(map(float, r.split(",")[:2])) for r in rows[1:]]
        assert sorted(cells) == cells
        assert {b for b, _ in cells} == {16.0, 32.0, 48.0, 64.0}
        np.testing.assert_allclose(sorted({h for _, h in cells}), [4, 4 + 28 / 3, 4 + 56 / 3, 32])

    def test_constant_models(self):
        const = QuadraticSurrogate((3.0, 0, 0, 0, 0, 0))
        flat = RationalSurrogate((100.0, 0, 0, 50.0), (2.0, 0, 0))  # (100 + 50bh) / (2 + bh) = 50
        for text in contour_tables(SurrogateSet(const, const, flat), DEFAULT_BOX, (5, 3)).values():
            values = {float(r.split(",")[2]) for r in text.splitlines()[1:]}
            assert len(values) == 1

    def test_values_match_generator(self):
        models, _ = random_models(2)
        tables = contour_tables(models, DEFAULT_BOX, (7, 5))
        for line in tables["miou"].splitlines()[1:]:
            b, h, v = map(float, line.split(","))
            assert v == models.miou.predict(b, h)

    def test_pole_cells_are_na(self):
        const = QuadraticSurrogate((3.0, 0, 0, 0, 0, 0))
        pole = RationalSurrogate((1.0, 0, 0, 0), (-64.0, 0, 0))  # zero at b*h = 64, e.g. (16, 4)
        tables = contour_tables(SurrogateSet(const, const, pole), DEFAULT_BOX, (4, 4))
        assert "16.0,4.0,NA" in tables["miou"].splitlines()

    def test_emit_files(self, tmp_path):
        models, _ = random_models(1)
        paths = emit_contours(models, DEFAULT_BOX, (49, 29), tmp_path / "grid")
        assert sorted(p.name for p in paths) == ["grid_latency.csv", "grid_miou.csv", "grid_power.csv"]
        for p in paths:
            assert len(p.read_text().splitlines()) == 49 * 29 + 1

    def test_empty_prefix(self):
        models, _ = random_models(1)
        with pytest.raises(FormatError):
            emit_contours(models, DEFAULT_BOX, (4, 4), "")


class TestRunConfig:
    def test_from_dict(self):
        cfg = RunConfig.from_dict(
            {"weights": [1, 0, 2], "box": {"b_lo": 16, "b_hi": 48, "h_lo": 4, "h_hi": 16}, "resolution": [5, 6], "label": "site-b"}
        )
        assert cfg.weights == (1.0, 0.0, 2.0) and cfg.box == Box(16, 48, 4, 16) and cfg.resolution == (5, 6)

    def test_unknown_key(self):
        with pytest.raises(FormatError, match="colour"):
            RunConfig.from_dict({"colour": "red"})

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            RunConfig(resolution=(1, 5))

    def test_explicit_needs_values(self):
        with pytest.raises(ValueError):
            RunConfig(bounds_policy="explicit")


def test_exact_dataset_emits_cleanly():
    models, _ = random_models(4)
    text = format_samples(exact_dataset(models))
    assert len(parse_samples_text(text)) == 16


def test_inline_comment_is_a_bad_cell():
    with pytest.raises(FormatError):
        parse_samples_text(HEADER + "32,8,45,110,5.7  # note\n")
