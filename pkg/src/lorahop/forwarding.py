"""Forwarding core: contact-history service-time estimation, its EWMA, the
greedy relay decision, queue dynamics, and backpressure weights/transfers.

Service-time units: both the node-to-sink estimate and the node-to-node link
metric are expressed as the transmission time of the current bundle in
seconds, so the relay decision compares commensurable quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .channel import ChannelConfig, link_capacity

BUNDLE_MAX_MESSAGES = 12
MESSAGE_SIZE_BYTES = 20

# wire header: sender id u32, scheme tag u8, metric ms u32, [queue len u16], count u8
HEADER_BYTES_BASE = 10
HEADER_BYTES_QUEUE = 2


class Scheme(Enum):
    NOROUTING = "norouting"
    RCA_ETX = "rca-etx"
    ROBC = "robc"


@dataclass(frozen=True)
class Message:
    id: str
    origin: str
    created_ms: int
    size_bytes: int = MESSAGE_SIZE_BYTES
    hop_trail: tuple[str, ...] = ()
    previous_hop: str | None = None

    def relayed_to(self, next_hop: str) -> "Message":
        assert self.hop_trail and next_hop != self.hop_trail[-1]
        return Message(self.id, self.origin, self.created_ms, self.size_bytes,
                       self.hop_trail + (next_hop,), self.hop_trail[-1])


def packet_size_bytes(n_messages: int, scheme: Scheme,
                      message_size: int = MESSAGE_SIZE_BYTES) -> int:
    header = HEADER_BYTES_BASE + (HEADER_BYTES_QUEUE if scheme is Scheme.ROBC else 0)
    return header + n_messages * message_size


@dataclass
class DataPacket:
    sender: str
    messages: tuple[Message, ...]
    header_rca_etx_s: float
    header_queue_len: int | None  # advertised only under the backpressure scheme
    sent_ms: int
    kind: str = "uplink"          # "uplink" | "relay"
    addressed_to: str | None = None

    def size_bytes(self, scheme: Scheme) -> int:
        return packet_size_bytes(len(self.messages), scheme,
                                 self.messages[0].size_bytes if self.messages else MESSAGE_SIZE_BYTES)


class QueueOverflow(Exception):
    pass


@dataclass
class DeviceQueue:
    """FIFO message buffer with a hard capacity.

    Local generation into a full queue drops the new message (counted);
    relayed arrivals that would overflow are refused so the sender keeps
    them and no message is ever silently lost.
    """

    q_max: int
    entries: list[Message] = field(default_factory=list)
    received_from: dict[str, str] = field(default_factory=dict)
    drop_count: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def free_space(self) -> int:
        return self.q_max - len(self.entries)

    def push_local(self, msg: Message) -> bool:
        if len(self.entries) >= self.q_max:
            self.drop_count += 1
            return False
        self.entries.append(msg)
        return True

    def accept_relayed(self, batch: list[Message], from_device: str) -> tuple[list[Message], list[Message]]:
        """Take as many relayed messages as capacity allows.

        On overflow the oldest messages of the batch are the ones refused.
        Returns (accepted, refused).
        """
        room = self.free_space
        if room >= len(batch):
            accepted, refused = list(batch), []
        else:
            refused = list(batch[:len(batch) - room])
            accepted = list(batch[len(batch) - room:])
        for msg in accepted:
            self.entries.append(msg)
            self.received_from[msg.id] = from_device
        return accepted, refused

    def remove(self, messages: list[Message]) -> None:
        ids = {m.id for m in messages}
        kept = [m for m in self.entries if m.id not in ids]
        if len(kept) != len(self.entries) - len(ids):
            raise QueueOverflow("attempted to remove messages not present in queue")
        self.entries = kept

    def oldest(self, limit: int) -> list[Message]:
        return self.entries[:limit]

    def oldest_eligible(self, limit: int, next_hop: str) -> list[Message]:
        """Oldest messages that may travel to ``next_hop``: anything whose
        hop trail already visited that device is held back (loop
        suppression, which also covers never-send-back)."""
        out = []
        for m in self.entries:
            if next_hop in m.hop_trail:
                continue
            out.append(m)
            if len(out) == limit:
                break
        return out


def update_queue(queue: DeviceQueue, generated: list[Message], incoming: list[Message],
                 outgoing: list[Message], incoming_from: str = "") -> dict:
    """One slot of queue dynamics at message granularity: drop what was
    delivered or forwarded, then append newly generated, then relayed
    arrivals (refusing what would overflow)."""
    queue.remove(outgoing)
    dropped = 0
    for msg in generated:
        if not queue.push_local(msg):
            dropped += 1
    accepted, refused = queue.accept_relayed(incoming, incoming_from) if incoming else ([], [])
    return {"accepted": accepted, "refused": refused, "dropped": dropped}


@dataclass
class ContactTracker:
    """Per-device view of its own gateway-contact history, learned purely
    from acknowledgements to its transmissions."""

    alpha: float = 0.5
    capacity_at_prev_slot: float | None = None   # gateway capacity at the latest attempt, 0 if unacked
    capacity_at_last_success: float = 0.0
    last_contact_start_ms: int | None = None
    last_contact_end_ms: int | None = None
    ewma_rpst_s: float | None = None

    def note_attempt(self, t_end_ms: int, gateway_capacity_bps: float, acked: bool) -> None:
        if acked:
            if self.capacity_at_prev_slot is None or self.capacity_at_prev_slot <= 0.0:
                self.last_contact_start_ms = t_end_ms
            self.last_contact_end_ms = t_end_ms
            self.capacity_at_last_success = gateway_capacity_bps
            self.capacity_at_prev_slot = gateway_capacity_bps
        else:
            self.capacity_at_prev_slot = 0.0


def packet_service_time(packet_bits: float, capacity_bps: float) -> float:
    """Seconds to push one bundle through a link; unusable links are +inf."""
    if capacity_bps <= 0.0:
        return math.inf
    return packet_bits / capacity_bps


def rpst(tracker: ContactTracker, t_s: float, t_delta_s: float,
         packet_bits: float, init_prior_s: float) -> float:
    """Real-time packet service time toward the gateways.

    In contact at the previous slot: transmission time at that capacity plus
    the wait until the next broadcast opportunity. Otherwise: transmission
    time at the last successful contact plus the time elapsed since it.
    Before any contact history exists, a configured pessimistic prior is
    returned.
    """
    if tracker.capacity_at_prev_slot is not None and tracker.capacity_at_prev_slot > 0.0:
        return packet_service_time(packet_bits, tracker.capacity_at_prev_slot) + t_delta_s
    if tracker.last_contact_end_ms is None:
        return init_prior_s
    elapsed = t_s - tracker.last_contact_end_ms / 1000.0
    return (packet_service_time(packet_bits, tracker.capacity_at_last_success)
            + elapsed + t_delta_s)


def update_ewma(tracker: ContactTracker, current_rpst_s: float) -> float:
    """Fold one service-time sample into the tracker's moving average."""
    if current_rpst_s < 0.0:
        raise ValueError("service-time sample must be non-negative")
    if tracker.ewma_rpst_s is None:
        tracker.ewma_rpst_s = current_rpst_s
    else:
        tracker.ewma_rpst_s = (1.0 - tracker.alpha) * tracker.ewma_rpst_s + tracker.alpha * current_rpst_s
    return tracker.ewma_rpst_s


def peek_ewma(tracker: ContactTracker, current_rpst_s: float) -> float:
    """The value the EWMA would take for this sample, without committing it.

    Used when a relay decision needs the node-to-sink metric between uplink
    slots: the estimate reflects the current sample but the stored average
    keeps its one-sample-per-slot cadence.
    """
    if tracker.ewma_rpst_s is None:
        return current_rpst_s
    return (1.0 - tracker.alpha) * tracker.ewma_rpst_s + tracker.alpha * current_rpst_s


def node_to_node_rca_etx(rssi_dbm: float, cfg: ChannelConfig, packet_bits: float) -> float:
    """Link metric toward an overheard neighbor: bundle transmission time at
    the RSSI-estimated capacity; +inf encodes an unusable link."""
    return packet_service_time(packet_bits, link_capacity(rssi_dbm, cfg))


def rca_etx_forward_decision(self_metric_s: float, neighbor_metric_s: float,
                             link_metric_s: float) -> bool:
    """Greedy handover test: forward only when the neighbor's route estimate
    plus the hop cost is strictly better than holding the data."""
    return self_metric_s > neighbor_metric_s + link_metric_s


@dataclass
class RobcConfig:
    phi_min: float = 1.0 / 86400.0   # one contact per day
    phi_max: float = 100.0           # ten-millisecond service time

    def validate(self) -> list[str]:
        if not (0.0 < self.phi_min <= self.phi_max < math.inf):
            return ["phi bounds must satisfy 0 < phi_min <= phi_max < inf"]
        return []


def rgq(rca_etx_s: float, cfg: RobcConfig) -> float:
    """Real-time gateway quality: reciprocal service time, clamped into the
    stability bounds."""
    phi = 0.0 if math.isinf(rca_etx_s) else 1.0 / rca_etx_s if rca_etx_s > 0 else cfg.phi_max
    return min(max(phi, cfg.phi_min), cfg.phi_max)


def robc_weight(q_self: int, phi_self: float, q_neighbor: int, phi_neighbor: float) -> float:
    """Backpressure weight from queue lengths corrected by gateway quality;
    phi values must already be clamped."""
    return q_self / phi_self - q_neighbor / phi_neighbor


def robc_transfer_amount(q_self: int, phi_self: float, q_neighbor: int, phi_neighbor: float,
                         bundle_cap: int = BUNDLE_MAX_MESSAGES,
                         receiver_free: int | None = None) -> int:
    """Backpressure transfer size, floored to whole messages and capped by
    the per-packet bundle limit and the receiver's free capacity."""
    delta = q_self - q_neighbor * phi_self / phi_neighbor
    amount = max(int(math.floor(delta)), 0)
    amount = min(amount, bundle_cap)
    if receiver_free is not None:
        amount = min(amount, max(receiver_free, 0))
    return amount


@dataclass(frozen=True)
class OverheardHeader:
    sender: str
    rca_etx_s: float
    queue_len: int | None
    heard_ms: int
    rssi_dbm: float


@dataclass
class RelayPlan:
    target: str
    messages: list[Message]
    rank_key: tuple  # smaller sorts first among competing candidates


def plan_relay(scheme: Scheme, self_metric_s: float, queue: DeviceQueue,
               header: OverheardHeader, chan_cfg: ChannelConfig,
               robc_cfg: RobcConfig, q_max: int,
               message_size: int = MESSAGE_SIZE_BYTES) -> RelayPlan | None:
    """Decide whether the overhearing device hands data to the transmitter it
    just heard, and which messages. Pure given the snapshots passed in."""
    if scheme is Scheme.NOROUTING or not queue.entries:
        return None
    eligible = queue.oldest_eligible(BUNDLE_MAX_MESSAGES, header.sender)
    if not eligible:
        return None
    if scheme is Scheme.RCA_ETX:
        bits = 8.0 * packet_size_bytes(len(eligible), scheme, message_size)
        link_metric = node_to_node_rca_etx(header.rssi_dbm, chan_cfg, bits)
        if not rca_etx_forward_decision(self_metric_s, header.rca_etx_s, link_metric):
            return None
        return RelayPlan(header.sender, eligible,
                         rank_key=(header.rca_etx_s + link_metric, header.sender))
    # backpressure
    if header.queue_len is None:
        return None
    phi_self = rgq(self_metric_s, robc_cfg)
    phi_neighbor = rgq(header.rca_etx_s, robc_cfg)
    q_self = len(queue)
    weight = robc_weight(q_self, phi_self, header.queue_len, phi_neighbor)
    if weight <= 0.0:
        return None
    amount = robc_transfer_amount(q_self, phi_self, header.queue_len, phi_neighbor,
                                  receiver_free=q_max - header.queue_len)
    amount = min(amount, len(eligible))
    if amount < 1:
        return None
    return RelayPlan(header.sender, eligible[:amount], rank_key=(-weight, header.sender))


def bundle_for_uplink(sender: str, queue: DeviceQueue, advertised_metric_s: float,
                      scheme: Scheme, sent_ms: int,
                      limit: int = BUNDLE_MAX_MESSAGES) -> DataPacket | None:
    """Over-the-air bundle of the oldest queued messages plus the advertised
    metric header; None when there is nothing to send."""
    picked = queue.oldest(limit)
    if not picked:
        return None
    return DataPacket(
        sender=sender,
        messages=tuple(picked),
        header_rca_etx_s=advertised_metric_s,
        header_queue_len=len(queue) if scheme is Scheme.ROBC else None,
        sent_ms=sent_ms,
    )
