"""Device mobility: trace files, a synthetic route generator, and fast
time-indexed position lookup.

Coordinates are planar meters (local projection); everything downstream
needs only pairwise distances. A device outside its active window does not
generate, transmit, or receive.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .engine import ms

log = logging.getLogger(__name__)

# departure stagger so co-route vehicles do not share generation phases
DEPARTURE_JITTER_S = 60.0


class TraceFormatError(ValueError):
    pass


@dataclass
class MobilityTrace:
    device_id: str
    times_ms: list[int]
    xs: list[float]
    ys: list[float]
    appear_ms: int
    disappear_ms: int

    def __post_init__(self):
        if not self.times_ms:
            raise TraceFormatError(f"trace for {self.device_id!r} has no samples")
        for a, b in zip(self.times_ms, self.times_ms[1:]):
            if b <= a:
                raise TraceFormatError(
                    f"trace for {self.device_id!r}: sample times not strictly "
                    f"increasing at t={b / 1000:.3f}s"
                )
        if self.appear_ms > self.times_ms[0]:
            raise TraceFormatError(f"trace for {self.device_id!r}: appear time after first sample")
        if self.disappear_ms < self.times_ms[-1]:
            raise TraceFormatError(f"trace for {self.device_id!r}: disappear time before last sample")

    def position_at(self, t_ms: int) -> tuple[float, float] | None:
        """Linearly interpolated position, or None outside the active window."""
        if t_ms < self.appear_ms or t_ms > self.disappear_ms:
            return None
        times = self.times_ms
        if t_ms <= times[0]:
            return (self.xs[0], self.ys[0])
        if t_ms >= times[-1]:
            return (self.xs[-1], self.ys[-1])
        lo, hi = 0, len(times) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if times[mid] <= t_ms:
                lo = mid
            else:
                hi = mid
        if t_ms == times[lo]:
            return (self.xs[lo], self.ys[lo])
        frac = (t_ms - times[lo]) / (times[hi] - times[lo])
        x = self.xs[lo] + (self.xs[hi] - self.xs[lo]) * frac
        y = self.ys[lo] + (self.ys[hi] - self.ys[lo]) * frac
        return (x, y)

    def active_at(self, t_ms: int) -> bool:
        return self.appear_ms <= t_ms <= self.disappear_ms


@dataclass
class SyntheticRouteSpec:
    """A polyline service route: vehicles depart at ``start + k*headway`` plus
    a small jitter, traverse at constant speed, and despawn at the end."""

    route_polyline: list[tuple[float, float]]
    speed: float
    headway: float
    service_window: tuple[float, float]
    vehicle_count: int
    id_prefix: str = "v"

    def validate(self) -> list[str]:
        errors = []
        if len(self.route_polyline) < 2:
            errors.append("route_polyline needs at least 2 waypoints")
        if self.speed <= 0:
            errors.append("speed must be > 0")
        if self.headway <= 0:
            errors.append("headway must be > 0")
        if self.vehicle_count < 0:
            errors.append("vehicle_count must be >= 0")
        if self.service_window[1] <= self.service_window[0]:
            errors.append("service_window must have positive length")
        return errors


def load_traces(path: str) -> list[MobilityTrace]:
    """Parse a trace file: one `device_id, time_s, x_m, y_m` record per line.

    Header line optional; `#` starts a comment. Malformed lines and
    non-monotone timestamps are rejected with the offending location.
    """
    per_device: dict[str, list[tuple[int, float, float]]] = {}
    order: list[str] = []
    first_data_line = True
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 4:
                raise TraceFormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            dev = parts[0]
            try:
                t_s = float(parts[1])
                x = float(parts[2])
                y = float(parts[3])
            except ValueError:
                if first_data_line:
                    first_data_line = False
                    continue  # tolerated header line
                raise TraceFormatError(f"{path}:{lineno}: non-numeric field in {line!r}")
            first_data_line = False
            per_device.setdefault(dev, []).append((ms(t_s), x, y))
            if dev not in order:
                order.append(dev)
    if not per_device:
        log.warning("trace file %s contains no samples", path)
        return []
    traces = []
    for dev in order:
        rows = per_device[dev]
        times = [r[0] for r in rows]
        traces.append(MobilityTrace(
            device_id=dev,
            times_ms=times,
            xs=[r[1] for r in rows],
            ys=[r[2] for r in rows],
            appear_ms=times[0],
            disappear_ms=times[-1],
        ))
    return traces


def save_traces(traces: list[MobilityTrace], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# device_id, time_s, x_m, y_m\n")
        for tr in traces:
            for t, x, y in zip(tr.times_ms, tr.xs, tr.ys):
                fh.write(f"{tr.device_id}, {t / 1000:.3f}, {x:.3f}, {y:.3f}\n")


def generate_routes(spec: SyntheticRouteSpec, rng: np.random.Generator) -> list[MobilityTrace]:
    """Expand a route spec into one trace per departing vehicle.

    Departures beyond the service window are dropped (the window divided by
    the headway bounds how many vehicles actually enter service).
    """
    errors = spec.validate()
    if errors:
        raise TraceFormatError("; ".join(errors))
    start, end = spec.service_window
    window_len = end - start
    poly = spec.route_polyline
    seg_lengths = []
    for (x0, y0), (x1, y1) in zip(poly, poly[1:]):
        seg_lengths.append(float(np.hypot(x1 - x0, y1 - y0)))
    if sum(seg_lengths) == 0:
        raise TraceFormatError("route polyline has zero length")
    traces = []
    for k in range(spec.vehicle_count):
        base_offset = k * spec.headway
        if base_offset >= window_len:
            log.warning("route %s: vehicle %d departs outside the service window; dropped",
                        spec.id_prefix, k)
            break
        depart_s = start + base_offset + rng.uniform(0.0, DEPARTURE_JITTER_S)
        t_cursor = depart_s
        times = [ms(t_cursor)]
        xs = [poly[0][0]]
        ys = [poly[0][1]]
        for seg_len, (wx, wy) in zip(seg_lengths, poly[1:]):
            if seg_len == 0.0:
                continue
            t_cursor += seg_len / spec.speed
            t_next = ms(t_cursor)
            if t_next <= times[-1]:  # degenerate short segment at ms resolution
                t_next = times[-1] + 1
                t_cursor = t_next / 1000
            times.append(t_next)
            xs.append(wx)
            ys.append(wy)
        traces.append(MobilityTrace(
            device_id=f"{spec.id_prefix}{k:04d}",
            times_ms=times, xs=xs, ys=ys,
            appear_ms=times[0], disappear_ms=times[-1],
        ))
    return traces


def check_within_area(traces: list[MobilityTrace], width_m: float, height_m: float) -> list[str]:
    """Bounding-box audit used at scenario assembly; returns violation notes."""
    problems = []
    for tr in traces:
        for x, y in zip(tr.xs, tr.ys):
            if not (0.0 <= x <= width_m and 0.0 <= y <= height_m):
                problems.append(f"device {tr.device_id!r} leaves the {width_m}x{height_m} m area at ({x}, {y})")
                break
    return problems


class TraceTable:
    """All traces packed into flat arrays for the per-event position kernel."""

    def __init__(self, traces: list[MobilityTrace]):
        traces = sorted(traces, key=lambda tr: tr.device_id)
        ids = [tr.device_id for tr in traces]
        if len(set(ids)) != len(ids):
            raise TraceFormatError("duplicate device ids in trace set")
        self.device_ids = ids
        self.index = {dev: i for i, dev in enumerate(ids)}
        self.n = len(traces)
        offsets, counts = [], []
        pos = 0
        for tr in traces:
            offsets.append(pos)
            counts.append(len(tr.times_ms))
            pos += len(tr.times_ms)
        self.sample_t = np.array([t for tr in traces for t in tr.times_ms], dtype=np.int64)
        self.sample_x = np.array([x for tr in traces for x in tr.xs], dtype=np.float64)
        self.sample_y = np.array([y for tr in traces for y in tr.ys], dtype=np.float64)
        self.offsets = np.array(offsets, dtype=np.int64)
        self.counts = np.array(counts, dtype=np.int64)
        self.appear_ms = np.array([tr.appear_ms for tr in traces], dtype=np.int64)
        self.disappear_ms = np.array([tr.disappear_ms for tr in traces], dtype=np.int64)
        self._x = np.zeros(self.n, dtype=np.float64)
        self._y = np.zeros(self.n, dtype=np.float64)
        self._active = np.zeros(self.n, dtype=np.uint8)
        self._cached_t = -1

    def positions(self, t_ms: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Positions and activity flags of every device at ``t_ms`` (cached
        per event time, since many lookups share a timestamp)."""
        if t_ms != self._cached_t:
            kernels.positions_at(self.sample_t, self.sample_x, self.sample_y,
                                 self.offsets, self.counts,
                                 self.appear_ms, self.disappear_ms,
                                 int(t_ms), self._x, self._y, self._active)
            self._cached_t = t_ms
        return self._x, self._y, self._active
