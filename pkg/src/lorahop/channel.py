"""Pairwise radio model: log-distance path loss with shadowing, RSSI,
range/sensitivity contact checks, and the RSSI-to-capacity map.

Contact is the conjunction of a hard range disc and an RSSI floor; the RSSI
additionally drives the piecewise-linear capacity estimate. Collisions and
capture are not modeled: a transmission reaches every listener in contact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels


class LinkKind(Enum):
    DEVICE_TO_DEVICE = "d2d"
    DEVICE_TO_GATEWAY = "d2g"


@dataclass
class ChannelConfig:
    ploss_exponent: float = 2.32
    reference_loss_db: float = 127.41
    reference_distance_m: float = 40.0
    shadowing_sigma_db: float = 0.0
    tx_power_dbm: float = 14.0
    d2d_range_m: float = 500.0
    d2g_range_m: float = 1000.0
    rssi_min_dbm: float = -123.0
    rssi_max_dbm: float = -60.0
    c_max_bps: float = 5470.0

    def validate(self) -> list[str]:
        errors = []
        if self.rssi_max_dbm <= self.rssi_min_dbm:
            errors.append("rssi_max_dbm must exceed rssi_min_dbm")
        if self.d2d_range_m <= 0 or self.d2g_range_m <= 0:
            errors.append("communication ranges must be > 0")
        if self.c_max_bps <= 0:
            errors.append("c_max_bps must be > 0")
        if self.reference_distance_m <= 0:
            errors.append("reference_distance_m must be > 0")
        if self.shadowing_sigma_db < 0:
            errors.append("shadowing_sigma_db must be >= 0")
        return errors

    def range_for(self, kind: LinkKind) -> float:
        return self.d2d_range_m if kind is LinkKind.DEVICE_TO_DEVICE else self.d2g_range_m


@dataclass
class ChannelSample:
    rssi_dbm: float
    capacity_bps: float
    in_contact: bool
    distance_m: float


def rssi(distance_m: float, cfg: ChannelConfig, rng: np.random.Generator | None = None) -> float:
    """Received power over a link: log-distance loss plus one shadowing draw.

    Zero distance is clamped to the reference distance (co-located radios).
    """
    d = distance_m if distance_m > 0.0 else cfg.reference_distance_m
    value = cfg.tx_power_dbm - (cfg.reference_loss_db
                                + 10.0 * cfg.ploss_exponent * math.log10(d / cfg.reference_distance_m))
    if cfg.shadowing_sigma_db > 0.0 and rng is not None:
        value += cfg.shadowing_sigma_db * rng.standard_normal()
    return value


def link_capacity(rssi_dbm: float, cfg: ChannelConfig) -> float:
    """Capacity estimate: zero below the sensitivity floor, maximal above the
    saturation point, linear in between."""
    if rssi_dbm < cfg.rssi_min_dbm:
        return 0.0
    if rssi_dbm > cfg.rssi_max_dbm:
        return cfg.c_max_bps
    span = cfg.rssi_max_dbm - cfg.rssi_min_dbm
    return cfg.c_max_bps * (rssi_dbm - cfg.rssi_min_dbm) / span


def contact(kind: LinkKind, distance_m: float, rssi_dbm: float, cfg: ChannelConfig) -> bool:
    return distance_m <= cfg.range_for(kind) and rssi_dbm >= cfg.rssi_min_dbm


def sample_link(kind: LinkKind, distance_m: float, cfg: ChannelConfig,
                rng: np.random.Generator | None = None) -> ChannelSample:
    val = rssi(distance_m, cfg, rng)
    in_c = contact(kind, distance_m, val, cfg)
    cap = link_capacity(val, cfg) if in_c else 0.0
    return ChannelSample(rssi_dbm=val, capacity_bps=cap, in_contact=in_c, distance_m=distance_m)


class LinkScanner:
    """Per-transmission link evaluation from one transmitter to every device
    and gateway, on the compiled kernel when available.

    Shadowing draws are made in a fixed order (gateways by index, then
    devices by index, in-disc candidates only) so a run is reproducible for
    a given seed regardless of backend.
    """

    def __init__(self, cfg: ChannelConfig, n_devices: int,
                 gw_x: np.ndarray, gw_y: np.ndarray,
                 rng: np.random.Generator | None):
        self.cfg = cfg
        self.rng = rng
        self.gw_x = np.asarray(gw_x, dtype=np.float64)
        self.gw_y = np.asarray(gw_y, dtype=np.float64)
        n_gw = len(self.gw_x)
        self._gw_active = np.ones(n_gw, dtype=np.uint8)
        self._gw_dist = np.zeros(n_gw, dtype=np.float64)
        self._gw_rssi = np.zeros(n_gw, dtype=np.float64)
        self._dev_dist = np.zeros(n_devices, dtype=np.float64)
        self._dev_rssi = np.zeros(n_devices, dtype=np.float64)

    def _apply_shadowing(self, dist: np.ndarray, base_rssi: np.ndarray, max_range: float) -> None:
        sigma = self.cfg.shadowing_sigma_db
        if sigma <= 0.0 or self.rng is None:
            return
        for j in range(len(dist)):
            if dist[j] <= max_range:
                base_rssi[j] += sigma * self.rng.standard_normal()

    def scan_gateways(self, x0: float, y0: float) -> tuple[np.ndarray, np.ndarray]:
        """Distances and per-transmission RSSI from (x0, y0) to all gateways."""
        cfg = self.cfg
        kernels.link_scan(float(x0), float(y0), self.gw_x, self.gw_y, self._gw_active,
                          cfg.reference_distance_m, cfg.reference_loss_db,
                          cfg.ploss_exponent, cfg.tx_power_dbm,
                          self._gw_dist, self._gw_rssi)
        self._apply_shadowing(self._gw_dist, self._gw_rssi, cfg.d2g_range_m)
        return self._gw_dist, self._gw_rssi

    def scan_devices(self, x0: float, y0: float, xs: np.ndarray, ys: np.ndarray,
                     active: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distances and per-transmission RSSI from (x0, y0) to all devices."""
        cfg = self.cfg
        kernels.link_scan(float(x0), float(y0), xs, ys, active,
                          cfg.reference_distance_m, cfg.reference_loss_db,
                          cfg.ploss_exponent, cfg.tx_power_dbm,
                          self._dev_dist, self._dev_rssi)
        self._apply_shadowing(self._dev_dist, self._dev_rssi, cfg.d2d_range_m)
        return self._dev_dist, self._dev_rssi


def neighbors_in_contact(device_index: int, xs: np.ndarray, ys: np.ndarray,
                         active: np.ndarray, scanner: LinkScanner) -> set[int]:
    """Indices of active peers currently overhearable by ``device_index``.

    Used only to gate packet reception; devices never see this set as
    global knowledge.
    """
    if not active[device_index]:
        return set()
    dist, rssi_vals = scanner.scan_devices(xs[device_index], ys[device_index], xs, ys, active)
    cfg = scanner.cfg
    out = set()
    for j in range(len(dist)):
        if j == device_index or not active[j]:
            continue
        if contact(LinkKind.DEVICE_TO_DEVICE, dist[j], rssi_vals[j], cfg):
            out.add(j)
    return out
