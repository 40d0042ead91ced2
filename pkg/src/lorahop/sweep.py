"""Parameter sweeps: a cartesian grid of config overrides, several seeds per
point, parallel execution, and a merged comparison table with per-point
overhead ratios against the queued-baseline scheme at the same point/seed.

Runs are keyed by content hash of their effective config, so the merged
table is identical for any parallelism degree or execution order.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .config import ScenarioConfig, ValidationError, run_id_for, run_scenario

DEFAULT_MAX_POINTS = 4096


@dataclass
class SweepSpec:
    base: dict
    axes: list[tuple[str, list]] = field(default_factory=list)
    repetitions: int = 1
    max_points: int = DEFAULT_MAX_POINTS

    @classmethod
    def from_dict(cls, data: dict, base_loader=None) -> "SweepSpec":
        base = data["base"]
        if isinstance(base, str):
            if base_loader is None:
                raise ValidationError([f"base config path {base!r} cannot be resolved here"])
            base = base_loader(base)
        axes = [(str(path), list(values)) for path, values in data.get("axes", [])]
        return cls(base=base, axes=axes,
                   repetitions=int(data.get("repetitions", 1)),
                   max_points=int(data.get("max_points", DEFAULT_MAX_POINTS)))

    def validate(self) -> list[str]:
        errors = []
        if self.repetitions < 1:
            errors.append("repetitions must be >= 1")
        n_points = self.repetitions
        for _, values in self.axes:
            if not values:
                errors.append("every axis needs at least one value")
                continue
            n_points *= len(values)
        if n_points > self.max_points:
            errors.append(f"sweep size {n_points} exceeds max_points {self.max_points}")
        return errors


def set_by_path(data: dict, path: str, value) -> None:
    keys = path.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def _combinations(axes: list[tuple[str, list]]) -> list[dict]:
    points = [{}]
    for path, values in axes:
        points = [dict(p, **{path: v}) for p in points for v in values]
    return points


def _worker(args: tuple[str, dict, str | None]) -> tuple[str, dict]:
    run_key, cfg_dict, out_root = args
    try:
        cfg = ScenarioConfig.from_dict(cfg_dict)
        report, _, problems = run_scenario(cfg, out_root=out_root,
                                           write_artifacts=out_root is not None)
        result = report.to_dict()
        result["audit_problems"] = problems
        return run_key, {"ok": True, "report": result}
    except Exception as exc:  # isolated: one failed point must not kill the sweep
        return run_key, {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


@dataclass
class SweepRow:
    point: dict
    seed: int
    status: str
    report: dict | None
    overhead_ratio: float | None


def run_sweep(spec: SweepSpec, parallelism: int = 1,
              out_root: str | None = None) -> list[SweepRow]:
    errors = spec.validate()
    if errors:
        raise ValidationError(errors)
    # axis overrides may legitimately change an invalid base, so hard
    # validation failures are deferred to the per-run configs
    base_seed = ScenarioConfig.from_dict(spec.base).seed
    points = _combinations(spec.axes)

    jobs: dict[str, dict] = {}
    cells: list[tuple[dict, int, str, str]] = []  # point, seed, run key, baseline key
    for point in points:
        for rep in range(spec.repetitions):
            seed = base_seed + rep
            cfg_dict = json.loads(json.dumps(spec.base))
            for path, value in point.items():
                set_by_path(cfg_dict, path, value)
            set_by_path(cfg_dict, "seed", seed)
            run_key = _key_for(cfg_dict)
            jobs.setdefault(run_key, cfg_dict)
            baseline_dict = json.loads(json.dumps(cfg_dict))
            set_by_path(baseline_dict, "scheme", "norouting")
            baseline_key = _key_for(baseline_dict)
            jobs.setdefault(baseline_key, baseline_dict)
            cells.append((point, seed, run_key, baseline_key))

    job_args = [(key, jobs[key], out_root) for key in sorted(jobs)]
    results: dict[str, dict] = {}
    if parallelism <= 1:
        for args in job_args:
            key, outcome = _worker(args)
            results[key] = outcome
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            for key, outcome in pool.map(_worker, job_args):
                results[key] = outcome

    rows = []
    for point, seed, run_key, baseline_key in cells:
        outcome = results[run_key]
        if not outcome["ok"]:
            rows.append(SweepRow(point, seed, f"failed: {outcome['error']}", None, None))
            continue
        report = outcome["report"]
        overhead = None
        base_outcome = results.get(baseline_key)
        if base_outcome and base_outcome["ok"]:
            base_sent = base_outcome["report"]["messages_sent_per_node"]
            if base_sent > 0:
                overhead = report["messages_sent_per_node"] / base_sent
        rows.append(SweepRow(point, seed, "ok", report, overhead))
    return rows


def _key_for(cfg_dict: dict) -> str:
    try:
        return run_id_for(ScenarioConfig.from_dict(cfg_dict))
    except ValidationError:
        return "invalid-" + json.dumps(cfg_dict, sort_keys=True)[:64]


TABLE_METRICS = ["total_delivered", "mean_delay_s", "mean_hops",
                 "messages_sent_per_node"]


def format_rows(rows: list[SweepRow], axes: list[tuple[str, list]],
                style: str = "table") -> str:
    header = [path for path, _ in axes] + ["seed"] + TABLE_METRICS + ["overhead_ratio", "status"]
    body = []
    for row in rows:
        cells = [str(row.point.get(path, "")) for path, _ in axes] + [str(row.seed)]
        if row.report is None:
            cells += ["" for _ in TABLE_METRICS] + ["", row.status]
        else:
            for metric in TABLE_METRICS:
                value = row.report.get(metric)
                cells.append("" if value is None else
                             f"{value:.4f}" if isinstance(value, float) else str(value))
            cells.append("" if row.overhead_ratio is None else f"{row.overhead_ratio:.4f}")
            cells.append(row.status)
        body.append(cells)
    if style == "delimited":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(body)
        return buf.getvalue()
    widths = [max(len(header[i]), *(len(r[i]) for r in body)) if body else len(header[i])
              for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    for cells in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip())
    return "\n".join(lines) + "\n"
