"""Scenario configuration: schema, validation, serialization, gateway
placement, and single-run orchestration with artifact output.

A scenario file is a single JSON document; every default is overridable and
the fully-resolved config is echoed into the output directory next to the
metric files, so any run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

from .channel import ChannelConfig
from .engine import RngRegistry
from .forwarding import RobcConfig, Scheme
from .mac import DeviceClass, MacConfig
from .metrics import MetricsReport, write_series, write_summary
from .mobility import (MobilityTrace, SyntheticRouteSpec, check_within_area,
                       generate_routes, load_traces)
from .simulation import ScenarioRun

CONFIG_FORMAT_VERSION = 1


class ValidationError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class ScenarioConfig:
    area_width_m: float = 6000.0
    area_height_m: float = 6000.0
    gateway_count: int = 4
    gateway_layout: str = "uniform-grid"          # or "explicit"
    gateway_coordinates: list[tuple[float, float]] = field(default_factory=list)
    scheme: str = "norouting"
    device_class: str = "modified-class-c"
    duration_s: float = 86400.0
    seed: int = 1
    message_period_s: float = 180.0
    message_size_bytes: int = 20
    alpha: float = 0.5
    q_max: int = 1000
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    mac: MacConfig = field(default_factory=MacConfig)
    robc: RobcConfig = field(default_factory=RobcConfig)
    trace_path: str | None = None
    synthetic_routes: list[SyntheticRouteSpec] = field(default_factory=list)
    output_dir: str = "out"

    def validate(self) -> list[str]:
        errors = []
        if self.area_width_m <= 0 or self.area_height_m <= 0:
            errors.append("area dimensions must be > 0")
        if self.gateway_layout not in ("uniform-grid", "explicit"):
            errors.append(f"gateway_layout {self.gateway_layout!r} not one of uniform-grid, explicit")
        if self.gateway_layout == "uniform-grid" and self.gateway_count < 1:
            errors.append("gateway_count must be >= 1")
        if self.gateway_layout == "explicit" and not self.gateway_coordinates:
            errors.append("explicit gateway layout needs gateway_coordinates")
        if self.scheme not in [s.value for s in Scheme]:
            errors.append(f"scheme {self.scheme!r} not one of "
                          + ", ".join(s.value for s in Scheme))
        if self.device_class not in [c.value for c in DeviceClass]:
            errors.append(f"device_class {self.device_class!r} not one of "
                          + ", ".join(c.value for c in DeviceClass))
        if self.duration_s <= 0:
            errors.append("duration_s must be > 0")
        if self.message_period_s <= 0:
            errors.append("message_period_s must be > 0")
        if self.message_size_bytes <= 0:
            errors.append("message_size_bytes must be > 0")
        if not (0.0 < self.alpha <= 1.0):
            errors.append("alpha must be in (0, 1]")
        if self.q_max < 1:
            errors.append("q_max must be >= 1")
        if self.trace_path is None and not self.synthetic_routes:
            errors.append("mobility missing: set trace_path or synthetic_routes")
        if self.trace_path is not None and self.synthetic_routes:
            errors.append("mobility over-specified: set only one of trace_path, synthetic_routes")
        errors.extend(self.channel.validate())
        errors.extend(self.mac.validate())
        errors.extend(self.robc.validate())
        for i, spec in enumerate(self.synthetic_routes):
            errors.extend(f"synthetic_routes[{i}]: {e}" for e in spec.validate())
        return errors

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": CONFIG_FORMAT_VERSION,
            "area": {"width_m": self.area_width_m, "height_m": self.area_height_m},
            "gateways": {
                "layout": self.gateway_layout,
                "count": self.gateway_count,
                "coordinates": [list(c) for c in self.gateway_coordinates],
            },
            "scheme": self.scheme,
            "device_class": self.device_class,
            "duration_s": self.duration_s,
            "seed": self.seed,
            "message_period_s": self.message_period_s,
            "message_size_bytes": self.message_size_bytes,
            "alpha": self.alpha,
            "q_max": self.q_max,
            "channel": asdict(self.channel),
            "mac": {k: v for k, v in asdict(self.mac).items() if k != "device_class"}
                   | {"device_class": self.mac.device_class.value},
            "robc": asdict(self.robc),
            "mobility": (
                {"trace_path": self.trace_path} if self.trace_path is not None
                else {"synthetic": [
                    {
                        "route_polyline": [list(p) for p in s.route_polyline],
                        "speed": s.speed,
                        "headway": s.headway,
                        "service_window": list(s.service_window),
                        "vehicle_count": s.vehicle_count,
                        "id_prefix": s.id_prefix,
                    } for s in self.synthetic_routes
                ]}
            ),
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        errors: list[str] = []
        data = dict(data)
        data.pop("format_version", None)
        known = {"area", "gateways", "scheme", "device_class", "duration_s", "seed",
                 "message_period_s", "message_size_bytes", "alpha", "q_max",
                 "channel", "mac", "robc", "mobility", "output_dir"}
        for key in data:
            if key not in known:
                errors.append(f"unknown config key {key!r}")

        cfg = cls()
        area = data.get("area", {})
        cfg.area_width_m = float(area.get("width_m", cfg.area_width_m))
        cfg.area_height_m = float(area.get("height_m", cfg.area_height_m))
        gw = data.get("gateways", {})
        cfg.gateway_layout = gw.get("layout", cfg.gateway_layout)
        cfg.gateway_count = int(gw.get("count", cfg.gateway_count))
        cfg.gateway_coordinates = [tuple(map(float, c)) for c in gw.get("coordinates", [])]
        for key in ("scheme", "device_class", "output_dir"):
            if key in data:
                setattr(cfg, key, data[key])
        for key in ("duration_s", "message_period_s", "alpha"):
            if key in data:
                setattr(cfg, key, float(data[key]))
        for key in ("seed", "message_size_bytes", "q_max"):
            if key in data:
                setattr(cfg, key, int(data[key]))

        def fill(dc, payload, label):
            names = {f.name for f in fields(dc)}
            for k, v in payload.items():
                if k not in names:
                    errors.append(f"unknown {label} key {k!r}")
                elif k == "device_class":
                    continue  # mirrored from the top-level setting below
                else:
                    setattr(dc, k, type(getattr(dc, k))(v))

        fill(cfg.channel, data.get("channel", {}), "channel")
        fill(cfg.mac, data.get("mac", {}), "mac")
        fill(cfg.robc, data.get("robc", {}), "robc")
        cfg.mac.device_class = (DeviceClass(cfg.device_class)
                                if cfg.device_class in [c.value for c in DeviceClass]
                                else cfg.mac.device_class)
        cfg.mac.tx_interval_s = cfg.message_period_s

        mobility = data.get("mobility", {})
        if "trace_path" in mobility:
            cfg.trace_path = mobility["trace_path"]
        for i, s in enumerate(mobility.get("synthetic", [])):
            try:
                cfg.synthetic_routes.append(SyntheticRouteSpec(
                    route_polyline=[tuple(map(float, p)) for p in s["route_polyline"]],
                    speed=float(s["speed"]),
                    headway=float(s["headway"]),
                    service_window=tuple(map(float, s["service_window"])),
                    vehicle_count=int(s["vehicle_count"]),
                    id_prefix=s.get("id_prefix", f"r{i}_"),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                errors.append(f"mobility.synthetic[{i}]: {exc}")

        if errors:
            raise ValidationError(errors)
        return cfg


def load_config(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    cfg = ScenarioConfig.from_dict(data)
    errors = cfg.validate()
    if errors:
        raise ValidationError(errors)
    return cfg


def place_gateways(count: int, width_m: float, height_m: float) -> list[tuple[float, float]]:
    """Near-square uniform grid: cols = ceil(sqrt(n)), rows = ceil(n/cols),
    cell-centered, filled row-major."""
    if count < 1:
        raise ValueError("gateway count must be >= 1")
    cols = math.ceil(math.sqrt(count))
    rows = math.ceil(count / cols)
    dx = width_m / cols
    dy = height_m / rows
    coords = []
    for r in range(rows):
        for c in range(cols):
            if len(coords) == count:
                return coords
            coords.append(((c + 0.5) * dx, (r + 0.5) * dy))
    return coords


def resolve_gateways(cfg: ScenarioConfig) -> list[tuple[float, float]]:
    if cfg.gateway_layout == "explicit":
        return list(cfg.gateway_coordinates)
    return place_gateways(cfg.gateway_count, cfg.area_width_m, cfg.area_height_m)


def resolve_traces(cfg: ScenarioConfig) -> list[MobilityTrace]:
    if cfg.trace_path is not None:
        traces = load_traces(cfg.trace_path)
    else:
        route_rng = RngRegistry(cfg.seed)
        traces = []
        for i, spec in enumerate(cfg.synthetic_routes):
            traces.extend(generate_routes(spec, route_rng.stream(f"route-{i}")))
    problems = check_within_area(traces, cfg.area_width_m, cfg.area_height_m)
    if problems:
        raise ValidationError(problems)
    return traces


def run_id_for(cfg: ScenarioConfig) -> str:
    canon = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def run_scenario(cfg: ScenarioConfig, out_root: str | None = None,
                 write_artifacts: bool = True) -> tuple[MetricsReport, str, list[str]]:
    """Execute one scenario deterministically.

    Returns (report, run directory, audit problems). Artifact files:
    config.json (effective config), summary.json, throughput.csv.
    """
    errors = cfg.validate()
    if errors:
        raise ValidationError(errors)
    traces = resolve_traces(cfg)
    run = ScenarioRun(
        traces=traces,
        gateway_xy=resolve_gateways(cfg),
        scheme=Scheme(cfg.scheme),
        chan_cfg=cfg.channel,
        mac_cfg=cfg.mac,
        robc_cfg=cfg.robc,
        duration_s=cfg.duration_s,
        seed=cfg.seed,
        message_period_s=cfg.message_period_s,
        message_size_bytes=cfg.message_size_bytes,
        q_max=cfg.q_max,
        alpha=cfg.alpha,
    )
    report = run.run()
    problems = run.audit_duty_cycle()

    run_dir = ""
    if write_artifacts:
        root = out_root or cfg.output_dir
        run_dir = os.path.join(root, f"run-{run_id_for(cfg)}")
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "config.json"), "w", encoding="utf-8") as fh:
            json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        write_summary(report, os.path.join(run_dir, "summary.json"))
        write_series(report, os.path.join(run_dir, "throughput.csv"))
    return report, run_dir, problems
