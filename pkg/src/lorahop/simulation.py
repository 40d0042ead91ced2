"""Scenario orchestration: devices, gateways, uplinks, overhearing and
relaying, wired into the discrete-event core.

Per-device transmission priority when the duty gate reopens: the first
uplink attempt of a slot goes out first, then any positive relay decision
against fresh overheard headers, then uplink retries. Relay transfers are
transactional: messages move from sender to receiver only when the receiver
provably covered the whole airtime, otherwise the sender keeps them, so no
message can be lost in flight.

A gateway that hears any data packet (uplink or relay) delivers its
messages and acknowledges the transmitter; an acknowledged relay is
therefore a delivery, and the addressed device does not enqueue it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import channel, forwarding, mac
from .channel import ChannelConfig, LinkKind
from .engine import Event, EventKind, Simulator, ms, ms_ceil, seconds
from .forwarding import (ContactTracker, DataPacket, DeviceQueue, Message,
                         OverheardHeader, RobcConfig, Scheme)
from .mac import DeviceClass, MacConfig, MacState
from .metrics import MetricsCollector, MetricsReport, duty_cycle_violations, finalize
from .mobility import MobilityTrace, TraceTable


@dataclass
class DeviceRuntime:
    id: str
    index: int
    queue: DeviceQueue
    tracker: ContactTracker
    mac: MacState
    headers: dict[str, OverheardHeader] = field(default_factory=dict)
    msg_seq: int = 0
    next_gen_ms: int = 0
    appear_ms: int = 0
    disappear_ms: int = 0


@dataclass
class PlannedTx:
    sender: int
    kind: str                      # "uplink" | "relay"
    messages: tuple[Message, ...]
    addressed_to: int | None
    start_ms: int
    end_ms: int
    acked: bool
    gateway_capacity_bps: float
    receivers: list[tuple[int, float]]   # (device index, received rssi)
    header_metric_s: float
    header_queue_len: int | None


class ScenarioRun:
    """One deterministic simulation of a configured scenario."""

    def __init__(self, traces: list[MobilityTrace], gateway_xy: list[tuple[float, float]],
                 scheme: Scheme, chan_cfg: ChannelConfig, mac_cfg: MacConfig,
                 robc_cfg: RobcConfig, duration_s: float, seed: int,
                 message_period_s: float = 180.0, message_size_bytes: int = 20,
                 q_max: int = 1000, alpha: float = 0.5):
        self.scheme = scheme
        self.chan_cfg = chan_cfg
        self.mac_cfg = mac_cfg
        self.robc_cfg = robc_cfg
        self.q_max = q_max
        self.message_size = message_size_bytes
        self.period_ms = ms(message_period_s)
        self.duration_ms = ms(duration_s)

        self.sim = Simulator(seed)
        self.table = TraceTable(traces)
        self.devices = []
        for idx, dev_id in enumerate(self.table.device_ids):
            self.devices.append(DeviceRuntime(
                id=dev_id, index=idx,
                queue=DeviceQueue(q_max=q_max),
                tracker=ContactTracker(alpha=alpha),
                mac=MacState(),
                appear_ms=int(self.table.appear_ms[idx]),
                disappear_ms=int(self.table.disappear_ms[idx]),
            ))
        gw_x = np.array([p[0] for p in gateway_xy], dtype=np.float64)
        gw_y = np.array([p[1] for p in gateway_xy], dtype=np.float64)
        shadow_rng = (self.sim.rng.stream("shadowing")
                      if chan_cfg.shadowing_sigma_db > 0 else None)
        self.scanner = channel.LinkScanner(chan_cfg, self.table.n, gw_x, gw_y, shadow_rng)
        self.jitter_rng = (self.sim.rng.stream("tx-jitter")
                           if mac_cfg.tx_jitter_max_s > 0 else None)
        self.metrics = MetricsCollector()

        self.sim.on(EventKind.MESSAGE_GENERATION, self._on_generation)
        self.sim.on(EventKind.TX_END, self._on_tx_end)
        self.sim.on(EventKind.DUTY_CYCLE_RELEASE, self._on_release)

        for dev in self.devices:
            first = dev.appear_ms + self.period_ms
            dev.next_gen_ms = first
            if first <= min(dev.disappear_ms, self.duration_ms):
                self.sim.schedule(Event(first, EventKind.MESSAGE_GENERATION, dev.id))

    # -- helpers ----------------------------------------------------------

    def _bundle_bits(self, dev: DeviceRuntime) -> float:
        n = min(len(dev.queue), forwarding.BUNDLE_MAX_MESSAGES)
        return 8.0 * forwarding.packet_size_bytes(max(n, 1), self.scheme, self.message_size)

    def _init_prior_s(self, packet_bits: float) -> float:
        return self.mac_cfg.tx_interval_s + packet_bits / self.chan_cfg.c_max_bps

    def _t_delta_s(self, dev: DeviceRuntime, now_ms: int) -> float:
        if dev.mac.has_pending:
            candidate = dev.mac.next_tx_allowed_ms
        else:
            candidate = max(dev.next_gen_ms, dev.mac.next_tx_allowed_ms)
        return max(candidate - now_ms, 0) / 1000.0

    def _self_metric_s(self, dev: DeviceRuntime, now_ms: int) -> float:
        bits = self._bundle_bits(dev)
        sample = forwarding.rpst(dev.tracker, now_ms / 1000.0, self._t_delta_s(dev, now_ms),
                                 bits, self._init_prior_s(bits))
        return forwarding.peek_ewma(dev.tracker, sample)

    def _advertised_metric_s(self, dev: DeviceRuntime, now_ms: int) -> float:
        if dev.tracker.ewma_rpst_s is not None:
            return dev.tracker.ewma_rpst_s
        bits = self._bundle_bits(dev)
        return forwarding.rpst(dev.tracker, now_ms / 1000.0, self._t_delta_s(dev, now_ms),
                               bits, self._init_prior_s(bits))

    def _jitter_ms(self) -> int:
        if self.jitter_rng is None:
            return 0
        return ms(float(self.jitter_rng.uniform(0.0, self.mac_cfg.tx_jitter_max_s)))

    def _schedule_release(self, dev: DeviceRuntime, at_ms: int) -> None:
        at_ms = max(at_ms, self.sim.clock_ms)
        if at_ms <= self.duration_ms:
            self.sim.schedule(Event(at_ms, EventKind.DUTY_CYCLE_RELEASE, dev.id))

    def _device(self, dev_id: str) -> DeviceRuntime:
        return self.devices[self.table.index[dev_id]]

    # -- event handlers ---------------------------------------------------

    def _on_generation(self, event: Event) -> None:
        dev = self._device(event.subject)
        now = self.sim.clock_ms
        if now > dev.disappear_ms:
            return
        dev.msg_seq += 1
        msg = Message(id=f"{dev.id}:{dev.msg_seq:05d}", origin=dev.id,
                      created_ms=now, size_bytes=self.message_size,
                      hop_trail=(dev.id,))
        self.metrics.note_generated()
        if not dev.queue.push_local(msg):
            self.metrics.note_drop()

        # new slot: reset the retransmission budget, fold one service-time
        # sample into the moving average, then try to send
        dev.mac.retransmission_count = 0
        dev.mac.attempt_epoch += 1
        dev.mac.has_pending = True
        bits = self._bundle_bits(dev)
        sample = forwarding.rpst(dev.tracker, now / 1000.0, self._t_delta_s(dev, now),
                                 bits, self._init_prior_s(bits))
        forwarding.update_ewma(dev.tracker, sample)

        next_gen = now + self.period_ms
        dev.next_gen_ms = next_gen
        if next_gen <= min(dev.disappear_ms, self.duration_ms):
            self.sim.schedule(Event(next_gen, EventKind.MESSAGE_GENERATION, dev.id))

        if now >= dev.mac.next_tx_allowed_ms and not dev.mac.transmitting_at(now):
            self._start_tx(dev, "uplink", dev.queue.oldest(forwarding.BUNDLE_MAX_MESSAGES), None)
        else:
            self._schedule_release(dev, max(dev.mac.next_tx_allowed_ms, dev.mac.last_tx_end_ms))

    def _on_release(self, event: Event) -> None:
        dev = self._device(event.subject)
        now = self.sim.clock_ms
        if now < dev.appear_ms or now > dev.disappear_ms:
            return
        if now < dev.mac.next_tx_allowed_ms or dev.mac.transmitting_at(now):
            self._schedule_release(dev, max(dev.mac.next_tx_allowed_ms, dev.mac.last_tx_end_ms))
            return
        if dev.mac.has_pending and not dev.queue.entries:
            dev.mac.has_pending = False
        if dev.mac.has_pending and dev.mac.retransmission_count == 0:
            self._start_tx(dev, "uplink", dev.queue.oldest(forwarding.BUNDLE_MAX_MESSAGES), None)
            return
        if self._try_relay(dev, now):
            return
        if dev.mac.has_pending and dev.mac.retransmission_count < self.mac_cfg.max_retransmissions:
            self._start_tx(dev, "uplink", dev.queue.oldest(forwarding.BUNDLE_MAX_MESSAGES), None)

    def _try_relay(self, dev: DeviceRuntime, now: int) -> bool:
        """Evaluate all sufficiently fresh overheard headers and launch the
        best-ranked relay, if any qualifies."""
        if self.scheme is Scheme.NOROUTING or not dev.queue.entries:
            return False
        stale_before = now - self.period_ms
        fresh = [h for h in dev.headers.values() if h.heard_ms >= stale_before]
        if not fresh:
            return False
        self_metric = self._self_metric_s(dev, now)
        plans = []
        for header in sorted(fresh, key=lambda h: h.sender):
            plan = forwarding.plan_relay(self.scheme, self_metric, dev.queue, header,
                                         self.chan_cfg, self.robc_cfg, self.q_max,
                                         self.message_size)
            if plan is not None:
                plans.append(plan)
        if not plans:
            return False
        best = min(plans, key=lambda p: p.rank_key)
        self._start_tx(dev, "relay", best.messages, self.table.index[best.target])
        return True

    def _start_tx(self, dev: DeviceRuntime, kind: str, messages: list[Message],
                  addressed_to: int | None) -> None:
        now = self.sim.clock_ms
        if not messages:
            dev.mac.has_pending = False
            return
        xs, ys, active = self.table.positions(now)
        if not active[dev.index]:
            return
        size = forwarding.packet_size_bytes(len(messages), self.scheme, self.message_size)
        airtime_s = mac.airtime(size, self.mac_cfg)
        airtime_ms = ms_ceil(airtime_s)
        end_ms = now + airtime_ms

        x0, y0 = float(xs[dev.index]), float(ys[dev.index])
        gw_dist, gw_rssi = self.scanner.scan_gateways(x0, y0)
        acked = False
        gw_capacity = 0.0
        for g in range(len(gw_dist)):
            if channel.contact(LinkKind.DEVICE_TO_GATEWAY, gw_dist[g], gw_rssi[g], self.chan_cfg):
                acked = True
                gw_capacity = max(gw_capacity, channel.link_capacity(gw_rssi[g], self.chan_cfg))
        dev_dist, dev_rssi = self.scanner.scan_devices(x0, y0, xs, ys, active)
        receivers = []
        for j in range(self.table.n):
            if j == dev.index or not active[j]:
                continue
            if channel.contact(LinkKind.DEVICE_TO_DEVICE, dev_dist[j], dev_rssi[j], self.chan_cfg):
                receivers.append((j, float(dev_rssi[j])))

        dev.mac.accrue_window(now)
        dev.mac.last_tx_start_ms = now
        dev.mac.last_tx_end_ms = end_ms
        dev.mac.tx_count += 1
        dev.mac.airtime_accum_ms += airtime_ms
        release_ms = ms_ceil(mac.duty_cycle_release(seconds(airtime_ms), self.mac_cfg))
        dev.mac.next_tx_allowed_ms = now + release_ms
        self.metrics.note_tx(dev.id, now, end_ms, kind, len(messages))

        planned = PlannedTx(
            sender=dev.index, kind=kind, messages=tuple(messages),
            addressed_to=addressed_to, start_ms=now, end_ms=end_ms,
            acked=acked, gateway_capacity_bps=gw_capacity, receivers=receivers,
            header_metric_s=self._advertised_metric_s(dev, now),
            header_queue_len=len(dev.queue) if self.scheme is Scheme.ROBC else None,
        )
        self.sim.schedule(Event(end_ms, EventKind.TX_END, dev.id, planned))

    def _on_tx_end(self, event: Event) -> None:
        p: PlannedTx = event.payload
        dev = self.devices[p.sender]
        now = self.sim.clock_ms

        dev.tracker.note_attempt(now, p.gateway_capacity_bps, p.acked)
        if self.mac_cfg.device_class is DeviceClass.QUEUE_BASED_CLASS_A:
            self._open_class_a_window(dev, now)

        transferred_to: int | None = None
        if p.acked:
            for msg in p.messages:
                self.metrics.record_delivery(msg, now)
            dev.queue.remove(list(p.messages))
            if p.kind == "uplink":
                dev.mac.has_pending = False
        elif p.kind == "uplink":
            dev.mac.retransmission_count += 1
            if (dev.mac.retransmission_count < self.mac_cfg.max_retransmissions
                    and dev.queue.entries):
                self._schedule_release(dev, dev.mac.next_tx_allowed_ms + self._jitter_ms())
            else:
                # budget exhausted: hold everything until the next slot
                dev.mac.has_pending = False
        else:
            transferred_to = self._resolve_relay_transfer(dev, p, now)
            if dev.mac.has_pending:
                if dev.queue.entries:
                    self._schedule_release(dev, dev.mac.next_tx_allowed_ms + self._jitter_ms())
                else:
                    dev.mac.has_pending = False

        if p.kind == "relay" and p.acked and dev.mac.has_pending and not dev.queue.entries:
            dev.mac.has_pending = False

        self._process_overhearers(dev, p, now, transferred_to)

    def _resolve_relay_transfer(self, sender: DeviceRuntime, p: PlannedTx, now: int) -> int | None:
        """Move relayed messages to the addressed device when it actually
        covered the transmission; refused overflow stays with the sender."""
        if p.addressed_to is None:
            return None
        rx = self.devices[p.addressed_to]
        rssi_at_rx = next((r for j, r in p.receivers if j == p.addressed_to), None)
        if rssi_at_rx is None:
            return None
        _, _, active = self.table.positions(now)
        if not active[p.addressed_to]:
            return None
        if not rx.mac.listening_over(p.start_ms, p.end_ms, self.mac_cfg.device_class):
            return None
        relabeled = [m.relayed_to(rx.id) for m in p.messages]
        accepted, refused = rx.queue.accept_relayed(relabeled, sender.id)
        if not accepted:
            return None
        accepted_ids = {m.id for m in accepted}
        sender.queue.remove([m for m in p.messages if m.id in accepted_ids])
        if sender.mac.has_pending and not sender.queue.entries:
            sender.mac.has_pending = False
        return p.addressed_to

    def _open_class_a_window(self, dev: DeviceRuntime, now: int) -> None:
        dev.mac.accrue_window(now)
        metric = self._advertised_metric_s(dev, now)
        phi = forwarding.rgq(metric, self.robc_cfg)
        gamma = mac.receive_window_fraction(len(dev.queue), self.q_max, phi, self.robc_cfg.phi_max)
        win_ms = int(round(self.period_ms * gamma))
        if win_ms > 0:
            dev.mac.window_start_ms = now
            dev.mac.window_end_ms = min(now + win_ms, dev.disappear_ms)

    def _process_overhearers(self, sender: DeviceRuntime, p: PlannedTx, now: int,
                             transferred_to: int | None) -> None:
        _, _, active = self.table.positions(now)
        for j, rssi_j in p.receivers:
            rx = self.devices[j]
            if not active[j]:
                continue
            if not rx.mac.listening_over(p.start_ms, p.end_ms, self.mac_cfg.device_class):
                continue
            rx.headers[sender.id] = OverheardHeader(
                sender=sender.id, rca_etx_s=p.header_metric_s,
                queue_len=p.header_queue_len, heard_ms=now, rssi_dbm=rssi_j)
            if self.scheme is Scheme.NOROUTING or not rx.queue.entries:
                continue
            plan = forwarding.plan_relay(self.scheme, self._self_metric_s(rx, now),
                                         rx.queue, rx.headers[sender.id],
                                         self.chan_cfg, self.robc_cfg, self.q_max,
                                         self.message_size)
            if plan is None:
                continue
            if now >= rx.mac.next_tx_allowed_ms and not rx.mac.transmitting_at(now):
                self._start_tx(rx, "relay", plan.messages, sender.index)
            else:
                self._schedule_release(rx, max(rx.mac.next_tx_allowed_ms, rx.mac.last_tx_end_ms))

    # -- run & report -----------------------------------------------------

    def run(self) -> MetricsReport:
        summary = self.sim.run_until(self.duration_ms)
        residual = sum(len(d.queue) for d in self.devices)
        listen_total_ms = 0
        for dev in self.devices:
            if self.mac_cfg.device_class is DeviceClass.MODIFIED_CLASS_C:
                span = max(min(dev.disappear_ms, self.duration_ms) - min(dev.appear_ms, self.duration_ms), 0)
                listen_total_ms += max(span - dev.mac.airtime_accum_ms, 0)
            else:
                dev.mac.accrue_window(min(self.duration_ms, dev.disappear_ms))
                listen_total_ms += dev.mac.listen_accum_ms
        report = finalize(self.metrics, self.scheme.value, self.duration_ms,
                          device_count=len(self.devices), residual_queued=residual,
                          listen_time_total_ms=listen_total_ms)
        report_extras = {
            "events_scheduled": summary.scheduled,
            "events_processed": summary.processed,
        }
        self.run_extras = report_extras
        return report

    def audit_duty_cycle(self, window_s: float = 3600.0) -> list[str]:
        return duty_cycle_violations(self.metrics.tx_log, self.mac_cfg.duty_cycle,
                                     window_ms=ms(window_s))
