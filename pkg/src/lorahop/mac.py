"""LoRa MAC layer: airtime, 1% duty-cycle gating, retransmission policy, and
the two receive-window disciplines (always-listening class C variant and the
queue-proportional class A variant).

Acknowledgements are out-of-band, instant and lossless, and consume no
gateway duty cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

MAX_PAYLOAD_BYTES = 255


class DeviceClass(Enum):
    MODIFIED_CLASS_C = "modified-class-c"
    QUEUE_BASED_CLASS_A = "queue-based-class-a"


@dataclass
class MacConfig:
    spreading_factor: int = 7
    bandwidth_hz: float = 125_000.0
    coding_rate: str = "4/5"
    preamble_symbols: int = 8
    duty_cycle: float = 0.01
    max_retransmissions: int = 8
    device_class: DeviceClass = DeviceClass.MODIFIED_CLASS_C
    tx_interval_s: float = 180.0
    tx_jitter_max_s: float = 1.0  # retry de-synchronization; 0 disables

    def validate(self) -> list[str]:
        errors = []
        if not (0.0 < self.duty_cycle <= 1.0):
            errors.append("duty_cycle must be in (0, 1]")
        if self.max_retransmissions < 1:
            errors.append("max_retransmissions must be >= 1")
        if self.coding_rate not in ("4/5", "4/6", "4/7", "4/8"):
            errors.append(f"unsupported coding_rate {self.coding_rate!r}")
        if self.spreading_factor not in range(6, 13):
            errors.append("spreading_factor must be in 6..12")
        if self.tx_interval_s <= 0:
            errors.append("tx_interval_s must be > 0")
        if self.tx_jitter_max_s < 0:
            errors.append("tx_jitter_max_s must be >= 0")
        return errors

    @property
    def coding_rate_index(self) -> int:
        return int(self.coding_rate.split("/")[1]) - 4


def airtime(payload_bytes: int, cfg: MacConfig) -> float:
    """On-air seconds of one uplink frame (explicit header, CRC on, and low
    data rate optimisation off, which holds for SF7/125 kHz)."""
    if payload_bytes <= 0:
        raise ValueError("payload must be at least 1 byte")
    if payload_bytes > MAX_PAYLOAD_BYTES:
        raise ValueError(f"payload {payload_bytes} B exceeds the {MAX_PAYLOAD_BYTES} B maximum")
    sf = cfg.spreading_factor
    t_symbol = (2 ** sf) / cfg.bandwidth_hz
    t_preamble = (cfg.preamble_symbols + 4.25) * t_symbol
    crc, explicit_header, low_dr_opt = 1, 1, 0
    numerator = 8 * payload_bytes - 4 * sf + 28 + 16 * crc - 20 * (1 - explicit_header)
    n_payload = 8 + max(
        math.ceil(numerator / (4 * (sf - 2 * low_dr_opt))) * (cfg.coding_rate_index + 4), 0
    )
    return t_preamble + n_payload * t_symbol


def duty_cycle_release(tx_airtime_s: float, cfg: MacConfig) -> float:
    """Seconds from transmission start until the next transmission is
    permitted (airtime divided by the duty-cycle fraction)."""
    if tx_airtime_s <= 0:
        raise ValueError("airtime must be > 0")
    return tx_airtime_s / cfg.duty_cycle


def receive_window_fraction(q_len: int, q_max: int, phi: float, phi_max: float) -> float:
    """Queue-based class A window fraction: phi_max * Q / (phi * Q_max),
    clamped into [0, 1]."""
    if q_max <= 0 or phi <= 0:
        raise ValueError("q_max and phi must be > 0")
    return min(phi_max * q_len / (phi * q_max), 1.0)


def receive_window_s(q_len: int, q_max: int, phi: float, phi_max: float, interval_s: float) -> float:
    return interval_s * receive_window_fraction(q_len, q_max, phi, phi_max)


@dataclass
class MacState:
    """Per-device MAC bookkeeping, mutated only by the event loop."""

    next_tx_allowed_ms: int = 0
    retransmission_count: int = 0
    has_pending: bool = False
    attempt_epoch: int = 0          # bumps on every new bundle/cancellation
    tx_count: int = 0
    last_tx_start_ms: int = -1
    last_tx_end_ms: int = -1
    airtime_accum_ms: int = 0
    # listening bookkeeping
    window_start_ms: int = -1       # queue-based class A: current window
    window_end_ms: int = -1
    listen_accum_ms: int = 0

    def transmitting_at(self, t_ms: int) -> bool:
        return self.last_tx_start_ms <= t_ms < self.last_tx_end_ms

    def tx_overlaps(self, start_ms: int, end_ms: int) -> bool:
        return self.last_tx_start_ms < end_ms and start_ms < self.last_tx_end_ms

    def listening_over(self, start_ms: int, end_ms: int, cls: DeviceClass) -> bool:
        """Whether the receiver covers the whole span [start, end]; partial
        coverage never yields a reception."""
        if self.tx_overlaps(start_ms, end_ms):
            return False
        if cls is DeviceClass.MODIFIED_CLASS_C:
            return True
        return self.window_start_ms <= start_ms and end_ms <= self.window_end_ms

    def accrue_window(self, until_ms: int) -> None:
        """Close out listened time of the current class A window up to a
        transmission start or deactivation."""
        if self.window_start_ms >= 0:
            span = min(self.window_end_ms, until_ms) - self.window_start_ms
            if span > 0:
                self.listen_accum_ms += span
            self.window_start_ms = -1
            self.window_end_ms = -1
