import math

import pytest
from hypothesis import given, strategies as st

from lorahop.engine import RngRegistry
from lorahop.mobility import (MobilityTrace, SyntheticRouteSpec, TraceFormatError,
                              TraceTable, generate_routes, load_traces, save_traces)


def make_trace(dev="d0", samples=((0, 0.0, 0.0), (100, 100.0, 0.0))):
    times = [t * 1000 for t, _, _ in samples]
    return MobilityTrace(dev, times, [x for _, x, _ in samples],
                         [y for _, _, y in samples], times[0], times[-1])


class TestLoadTraces:
    def test_two_devices_three_samples_each(self, tmp_path):
        p = tmp_path / "traces.csv"
        p.write_text(
            "# comment\n"
            "device_id, time_s, x_m, y_m\n"
            "a, 0, 0, 0\na, 10, 50, 0\na, 20, 100, 0\n"
            "b, 5, 0, 10\nb, 15, 0, 20\nb, 25, 0, 30\n")
        traces = load_traces(str(p))
        assert [t.device_id for t in traces] == ["a", "b"]
        assert all(len(t.times_ms) == 3 for t in traces)

    def test_non_monotone_time_rejected_with_device(self, tmp_path):
        p = tmp_path / "traces.csv"
        p.write_text("a, 10, 0, 0\na, 10, 5, 0\n")
        with pytest.raises(TraceFormatError, match="'a'"):
            load_traces(str(p))

    def test_malformed_line_names_line_number(self, tmp_path):
        p = tmp_path / "traces.csv"
        p.write_text("a, 0, 0, 0\na, 10, zzz, 0\n")
        with pytest.raises(TraceFormatError, match=":2"):
            load_traces(str(p))

    def test_wrong_field_count_names_line_number(self, tmp_path):
        p = tmp_path / "traces.csv"
        p.write_text("a, 0, 0\n")
        with pytest.raises(TraceFormatError, match=":1"):
            load_traces(str(p))

    def test_empty_file_gives_empty_list_with_warning(self, tmp_path, caplog):
        p = tmp_path / "empty.csv"
        p.write_text("# nothing here\n")
        with caplog.at_level("WARNING"):
            assert load_traces(str(p)) == []
        assert any("no samples" in r.message for r in caplog.records)

    def test_round_trip_through_save(self, tmp_path):
        traces = [make_trace("a"), make_trace("b", ((5, 1.0, 2.0), (10, 3.0, 4.0)))]
        p = tmp_path / "out.csv"
        save_traces(traces, str(p))
        loaded = load_traces(str(p))
        assert [t.device_id for t in loaded] == ["a", "b"]
        assert loaded[0].times_ms == traces[0].times_ms
        assert loaded[0].xs == traces[0].xs


class TestPositionAt:
    def test_midpoint_interpolation(self):
        tr = make_trace()
        assert tr.position_at(50_000) == (50.0, 0.0)

    def test_before_appear_is_inactive(self):
        tr = make_trace()
        tr2 = MobilityTrace("d", tr.times_ms, tr.xs, tr.ys, tr.appear_ms, tr.disappear_ms)
        assert tr2.position_at(-1) is None
        assert tr2.position_at(tr.disappear_ms + 1) is None

    def test_exact_sample_time_returns_sample(self):
        tr = make_trace(samples=((0, 0.0, 0.0), (10, 3.0, 4.0), (20, 10.0, -2.0)))
        assert tr.position_at(10_000) == (3.0, 4.0)

    @given(st.integers(min_value=0, max_value=100_000))
    def test_interpolation_stays_on_segment(self, t_ms):
        tr = make_trace(samples=((0, 0.0, 0.0), (40, 10.0, 30.0), (100, -20.0, 6.0)))
        pos = tr.position_at(t_ms)
        assert pos is not None
        x, y = pos
        # between some bracketing pair, the point is a convex combination
        on_some_segment = False
        for i in range(len(tr.times_ms) - 1):
            xa, xb = tr.xs[i], tr.xs[i + 1]
            ya, yb = tr.ys[i], tr.ys[i + 1]
            lo_x, hi_x = min(xa, xb) - 1e-9, max(xa, xb) + 1e-9
            lo_y, hi_y = min(ya, yb) - 1e-9, max(ya, yb) + 1e-9
            if lo_x <= x <= hi_x and lo_y <= y <= hi_y:
                cross = (xb - xa) * (y - ya) - (yb - ya) * (x - xa)
                if abs(cross) < 1e-6 * max(1.0, abs(xb - xa) + abs(yb - ya)):
                    on_some_segment = True
        assert on_some_segment

    def test_implied_speed_never_exceeds_source_speed(self):
        tr = make_trace(samples=((0, 0.0, 0.0), (10, 80.0, 60.0), (30, 80.0, 260.0)))
        max_src = 0.0
        for i in range(len(tr.times_ms) - 1):
            d = math.dist((tr.xs[i], tr.ys[i]), (tr.xs[i + 1], tr.ys[i + 1]))
            max_src = max(max_src, d / ((tr.times_ms[i + 1] - tr.times_ms[i]) / 1000))
        prev = tr.position_at(0)
        for t_ms in range(500, 30_001, 500):
            cur = tr.position_at(t_ms)
            speed = math.dist(prev, cur) / 0.5
            assert speed <= max_src + 1e-6
            prev = cur

    def test_monotonicity_validation(self):
        with pytest.raises(TraceFormatError):
            MobilityTrace("d", [0, 0], [0, 1], [0, 1], 0, 0)


class TestGenerateRoutes:
    def rng(self):
        return RngRegistry(9).stream("routes")

    def test_active_duration_is_length_over_speed(self):
        spec = SyntheticRouteSpec([(0.0, 0.0), (10_000.0, 0.0)], speed=10.0,
                                  headway=60.0, service_window=(0, 7200), vehicle_count=1)
        (tr,) = generate_routes(spec, self.rng())
        assert (tr.disappear_ms - tr.appear_ms) == pytest.approx(1_000_000, abs=2)

    def test_departures_bounded_by_window_over_headway(self):
        spec = SyntheticRouteSpec([(0.0, 0.0), (100.0, 0.0)], speed=10.0,
                                  headway=600.0, service_window=(0, 3600), vehicle_count=99)
        traces = generate_routes(spec, self.rng())
        assert len(traces) == 6

    def test_zero_vehicles_gives_empty_list(self):
        spec = SyntheticRouteSpec([(0.0, 0.0), (100.0, 0.0)], speed=10.0,
                                  headway=600.0, service_window=(0, 3600), vehicle_count=0)
        assert generate_routes(spec, self.rng()) == []

    def test_zero_length_polyline_rejected(self):
        spec = SyntheticRouteSpec([(5.0, 5.0), (5.0, 5.0)], speed=10.0,
                                  headway=600.0, service_window=(0, 3600), vehicle_count=1)
        with pytest.raises(TraceFormatError):
            generate_routes(spec, self.rng())

    def test_invalid_spec_collects_errors(self):
        spec = SyntheticRouteSpec([(0.0, 0.0)], speed=0.0, headway=0.0,
                                  service_window=(10, 5), vehicle_count=-1)
        assert len(spec.validate()) == 5

    def test_departures_follow_headway_grid(self):
        spec = SyntheticRouteSpec([(0.0, 0.0), (1000.0, 0.0)], speed=10.0,
                                  headway=300.0, service_window=(0, 1200), vehicle_count=4)
        traces = generate_routes(spec, self.rng())
        for k, tr in enumerate(traces):
            base = k * 300_000
            assert base <= tr.appear_ms <= base + 60_000


class TestTraceTable:
    def test_active_count_matches_windows(self):
        traces = [
            make_trace("a", ((0, 0.0, 0.0), (100, 10.0, 0.0))),
            make_trace("b", ((50, 0.0, 0.0), (200, 10.0, 0.0))),
            make_trace("c", ((150, 0.0, 0.0), (300, 10.0, 0.0))),
        ]
        table = TraceTable(traces)
        for t_s, expected in [(25, 1), (75, 2), (120, 1), (175, 2), (250, 1), (301, 0)]:
            _, _, active = table.positions(t_s * 1000)
            assert int(active.sum()) == expected

    def test_matches_per_trace_interpolation(self):
        traces = [make_trace("a", ((0, 0.0, 0.0), (40, 10.0, 30.0), (100, -20.0, 6.0))),
                  make_trace("b", ((10, 5.0, 5.0), (90, 85.0, 5.0)))]
        table = TraceTable(traces)
        for t_ms in (0, 9_999, 10_000, 40_000, 65_000, 100_000):
            xs, ys, active = table.positions(t_ms)
            for i, tr in enumerate(sorted(traces, key=lambda tr: tr.device_id)):
                pos = tr.position_at(t_ms)
                if pos is None:
                    assert not active[i]
                else:
                    assert active[i]
                    assert xs[i] == pytest.approx(pos[0], abs=1e-12)
                    assert ys[i] == pytest.approx(pos[1], abs=1e-12)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(TraceFormatError):
            TraceTable([make_trace("a"), make_trace("a")])
