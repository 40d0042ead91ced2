"""Run metrics: end-to-end delay, throughput time series, hop counts, and
per-node transmission overhead, plus the post-run conservation and
duty-cycle audits.

Delay statistics cover delivered messages only; traffic still queued at the
end of the run is reported as a residual count instead of contributing a
fake delay.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

THROUGHPUT_BIN_S = 600
FORMAT_VERSION = 1


class ConservationError(RuntimeError):
    """A message was duplicated or lost; the run result is invalid."""


@dataclass
class DeliveryRecord:
    message_id: str
    origin: str
    created_ms: int
    delivered_ms: int
    hops: int
    relay_path: tuple[str, ...]

    @property
    def delay_s(self) -> float:
        return (self.delivered_ms - self.created_ms) / 1000.0


@dataclass
class TxLogEntry:
    device: str
    start_ms: int
    end_ms: int
    kind: str
    n_messages: int


@dataclass
class MetricsCollector:
    generated: int = 0
    records: list[DeliveryRecord] = field(default_factory=list)
    _delivered_ids: set = field(default_factory=set)
    drops: int = 0
    tx_log: list[TxLogEntry] = field(default_factory=list)

    def note_generated(self, n: int = 1) -> None:
        self.generated += n

    def note_drop(self, n: int = 1) -> None:
        self.drops += n

    def note_tx(self, device: str, start_ms: int, end_ms: int, kind: str, n_messages: int) -> None:
        self.tx_log.append(TxLogEntry(device, start_ms, end_ms, kind, n_messages))

    def record_delivery(self, message, t_ms: int) -> None:
        if message.id in self._delivered_ids:
            raise ConservationError(f"message {message.id} delivered twice")
        self._delivered_ids.add(message.id)
        self.records.append(DeliveryRecord(
            message_id=message.id,
            origin=message.origin,
            created_ms=message.created_ms,
            delivered_ms=t_ms,
            hops=len(message.hop_trail),
            relay_path=message.hop_trail,
        ))


@dataclass
class MetricsReport:
    scheme: str
    duration_s: float
    device_count: int
    generated: int
    total_delivered: int
    residual_queued: int
    drops: int
    mean_delay_s: float | None
    delay_stddev_s: float | None
    delay_stderr_s: float | None
    mean_hops: float | None
    throughput_series: list[int]
    messages_sent_per_node: float
    overhead_ratio_vs_baseline: float | None
    listen_time_per_node_s: float
    tx_count_total: int
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "scheme": self.scheme,
            "duration_s": self.duration_s,
            "device_count": self.device_count,
            "generated": self.generated,
            "total_delivered": self.total_delivered,
            "residual_queued": self.residual_queued,
            "drops": self.drops,
            "mean_delay_s": self.mean_delay_s,
            "delay_stddev_s": self.delay_stddev_s,
            "delay_stderr_s": self.delay_stderr_s,
            "mean_hops": self.mean_hops,
            "throughput_series": self.throughput_series,
            "messages_sent_per_node": self.messages_sent_per_node,
            "overhead_ratio_vs_baseline": self.overhead_ratio_vs_baseline,
            "listen_time_per_node_s": self.listen_time_per_node_s,
            "tx_count_total": self.tx_count_total,
        }


def finalize(collector: MetricsCollector, scheme: str, duration_ms: int,
             device_count: int, residual_queued: int,
             listen_time_total_ms: int,
             baseline_sent_per_node: float | None = None) -> MetricsReport:
    """Aggregate a finished run. Raises ConservationError when generated
    messages are not fully accounted for."""
    delivered = len(collector.records)
    if collector.generated != delivered + residual_queued + collector.drops:
        raise ConservationError(
            f"conservation breach: generated={collector.generated} != "
            f"delivered={delivered} + residual={residual_queued} + drops={collector.drops}"
        )
    delays = [r.delay_s for r in collector.records]
    if delays:
        mean_delay = sum(delays) / len(delays)
        if len(delays) > 1:
            var = sum((d - mean_delay) ** 2 for d in delays) / (len(delays) - 1)
            stddev = math.sqrt(var)
            stderr = stddev / math.sqrt(len(delays))
        else:
            stddev = stderr = 0.0
        mean_hops = sum(r.hops for r in collector.records) / delivered
    else:
        mean_delay = stddev = stderr = mean_hops = None

    n_bins = max(1, math.ceil(duration_ms / (THROUGHPUT_BIN_S * 1000)))
    series = [0] * n_bins
    for r in collector.records:
        idx = min(r.delivered_ms // (THROUGHPUT_BIN_S * 1000), n_bins - 1)
        series[idx] += 1

    tx_total = len(collector.tx_log)
    sent_per_node = tx_total / device_count if device_count else 0.0
    overhead = None
    if baseline_sent_per_node is not None and baseline_sent_per_node > 0:
        overhead = sent_per_node / baseline_sent_per_node

    return MetricsReport(
        scheme=scheme,
        duration_s=duration_ms / 1000.0,
        device_count=device_count,
        generated=collector.generated,
        total_delivered=delivered,
        residual_queued=residual_queued,
        drops=collector.drops,
        mean_delay_s=mean_delay,
        delay_stddev_s=stddev,
        delay_stderr_s=stderr,
        mean_hops=mean_hops,
        throughput_series=series,
        messages_sent_per_node=sent_per_node,
        overhead_ratio_vs_baseline=overhead,
        listen_time_per_node_s=(listen_time_total_ms / 1000.0) / device_count if device_count else 0.0,
        tx_count_total=tx_total,
    )


def write_summary(report: MetricsReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_series(report: MetricsReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# format_version={report.format_version}\n")
        fh.write("bin_start_s,delivered_count\n")
        for i, count in enumerate(report.throughput_series):
            fh.write(f"{i * THROUGHPUT_BIN_S},{count}\n")


def duty_cycle_violations(tx_log: list[TxLogEntry], duty_cycle: float,
                          window_ms: int = 3_600_000) -> list[str]:
    """Sliding-window duty audit over the transmission log.

    For every device and every window position, on-air time divided by the
    window must stay at or below the duty fraction plus one in-flight packet
    straddling the edge. Returns human-readable violations (empty = pass).
    """
    by_device: dict[str, list[TxLogEntry]] = {}
    for e in tx_log:
        by_device.setdefault(e.device, []).append(e)
    problems = []
    for device, entries in sorted(by_device.items()):
        entries.sort(key=lambda e: e.start_ms)
        max_airtime = max(e.end_ms - e.start_ms for e in entries)
        budget = duty_cycle * window_ms + max_airtime
        # candidate window anchors: each tx start (worst case begins there)
        for i, anchor in enumerate(entries):
            w_lo, w_hi = anchor.start_ms, anchor.start_ms + window_ms
            on_air = 0
            for e in entries[i:]:
                if e.start_ms >= w_hi:
                    break
                on_air += min(e.end_ms, w_hi) - max(e.start_ms, w_lo)
            if on_air > budget:
                problems.append(
                    f"device {device}: {on_air} ms on-air in window starting at "
                    f"{w_lo} ms exceeds budget {budget:.0f} ms"
                )
                break
    return problems
