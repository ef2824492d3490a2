"""Vehicle kinematics and link geometry for the RSU / target-mounted STARS scene.

Coordinates are meters in the standard frame: the RSU arrays lie in the YOZ
plane, elevation is measured from +z and azimuth is atan2(dy, dx).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np

Vec3 = Tuple[float, float, float]

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Raised for degenerate geometry (coincident points, bad trajectories)."""


def _dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and episode constants.

    Defaults describe the reference full-size scene. Path-loss reference, RCS
    spread and user placement are calibration choices. All powers are
    milliwatts, SNR floors are linear.
    """

    rsu_position: Vec3 = (-50.0, 0.0, 30.0)
    start_position: Vec3 = (10.0, 50.0, 0.0)
    stars_height: float = 2.0
    waypoints: Tuple[Tuple[float, float], ...] = ((10.0, -50.0),)
    speed_profile: Tuple[float, ...] = (20.0,) * 11
    n_slots: int = 11
    slot_duration: float = 0.1
    n_tx_y: int = 5
    n_tx_z: int = 5
    n_rx_y: int = 5
    n_rx_z: int = 5
    m_side: int = 6
    tx_power: float = _dbm_to_mw(30.0)
    sensing_noise_power: float = _dbm_to_mw(-80.0)
    comm_noise_power: float = _dbm_to_mw(-80.0)
    rcs_std: float = 16.0
    mf_gain: float = 10.0
    phase_bits: int = 3
    pathloss_ref: float = 1e-3
    pathloss_ref_dist: float = 1.0
    pathloss_exp_rsu: float = 2.5
    pathloss_exp_user: float = 2.8
    snr_floor_rsu: float = 10.0
    snr_floor_user: float = 10.0
    reward_weight: float = 1.0
    user_offset: Vec3 = (0.0, -0.5, -0.5)
    reflection_enabled: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("n_tx_y", "n_tx_z", "n_rx_y", "n_rx_z", "m_side", "n_slots", "phase_bits"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in (
            "tx_power",
            "sensing_noise_power",
            "comm_noise_power",
            "snr_floor_rsu",
            "snr_floor_user",
            "slot_duration",
            "mf_gain",
            "pathloss_ref",
            "pathloss_ref_dist",
        ):
            if not float(getattr(self, name)) > 0.0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.rcs_std < 0:
            raise ValueError(f"rcs_std must be >= 0, got {self.rcs_std}")
        if self.pathloss_exp_rsu < 0 or self.pathloss_exp_user < 0:
            raise ValueError("path-loss exponents must be >= 0")
        if len(self.speed_profile) != self.n_slots:
            raise ValueError(
                f"speed_profile has {len(self.speed_profile)} entries, expected n_slots={self.n_slots}"
            )
        if any(v < 0 for v in self.speed_profile):
            raise ValueError("speed_profile entries must be >= 0")
        if len(self.waypoints) == 0:
            raise ValueError("waypoints must be non-empty")

    @property
    def n_tx(self) -> int:
        return self.n_tx_y * self.n_tx_z

    @property
    def n_rx(self) -> int:
        return self.n_rx_y * self.n_rx_z

    @property
    def n_elements(self) -> int:
        return self.m_side * self.m_side

    @property
    def last_slot(self) -> int:
        """Index N of the final slot."""
        return self.n_slots - 1

    @property
    def rsu_action_dim(self) -> int:
        return 2 * (self.n_tx + self.n_rx)

    @property
    def car_action_dim(self) -> int:
        return 3 * self.n_elements

    @property
    def rsu_state_dim(self) -> int:
        return 2 * self.n_rx

    @property
    def car_state_dim(self) -> int:
        return 2


@dataclass(frozen=True)
class VehicleState:
    position: np.ndarray
    heading: float
    speed: float
    slot_index: int
    clamped: bool = False


@dataclass(frozen=True)
class LinkGeometry:
    elevation: float
    azimuth: float
    distance: float
    heading_fold: float


def heading_fold(heading: float) -> float:
    return max(math.pi / 2.0 - heading, heading)


def _polyline(config: ScenarioConfig) -> np.ndarray:
    start = np.asarray(config.start_position[:2], dtype=float)
    pts = [start] + [np.asarray(p, dtype=float) for p in config.waypoints]
    return np.vstack(pts)


def _segment_heading(d: np.ndarray) -> float:
    return math.atan2(d[1], d[0]) % TWO_PI


def vehicle_state_at(config: ScenarioConfig, n: int) -> VehicleState:
    """Vehicle state at slot ``n`` by arc-length advance along the waypoint polyline."""
    if not 0 <= n < config.n_slots:
        raise IndexError(f"slot {n} outside [0, {config.n_slots})")
    return _vehicle_state_cached(config, int(n))


@lru_cache(maxsize=4096)
def _vehicle_state_cached(config: ScenarioConfig, n: int) -> VehicleState:
    pts = _polyline(config)
    segs = np.diff(pts, axis=0)
    lengths = np.linalg.norm(segs, axis=1)
    if not np.any(lengths > 0):
        raise GeometryError("waypoint polyline has zero length")

    advance = float(sum(config.speed_profile[:n])) * config.slot_duration
    clamped = False
    pos = pts[-1]
    heading = None
    remaining = advance
    for seg, length, p0 in zip(segs, lengths, pts[:-1]):
        if length == 0:
            continue
        heading = _segment_heading(seg)
        if remaining <= length:
            pos = p0 + seg * (remaining / length)
            break
        remaining -= length
    else:
        clamped = True
        pos = pts[-1]
    if heading is None:  # pragma: no cover - guarded by the zero-length check
        raise GeometryError("no non-degenerate segment")

    position = np.array([pos[0], pos[1], config.stars_height], dtype=float)
    position.setflags(write=False)
    return VehicleState(
        position=position,
        heading=heading,
        speed=float(config.speed_profile[n]),
        slot_index=n,
        clamped=clamped,
    )


def link_geometry(src, dst, heading: float) -> LinkGeometry:
    """Angles and range of ``dst`` as seen from ``src``."""
    delta = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    distance = float(np.linalg.norm(delta))
    if distance == 0.0:
        raise GeometryError("coincident endpoints have no direction")
    cos_el = min(1.0, max(-1.0, delta[2] / distance))
    return LinkGeometry(
        elevation=math.acos(cos_el),
        azimuth=math.atan2(delta[1], delta[0]),
        distance=distance,
        heading_fold=heading_fold(heading),
    )


def user_geometry(config: ScenarioConfig, vehicle: VehicleState | None = None) -> LinkGeometry:
    """STARS-to-user link; quasi-static, so the slot-0 heading is used for every slot."""
    return _user_geometry_cached(config)


@lru_cache(maxsize=256)
def _user_geometry_cached(config: ScenarioConfig) -> LinkGeometry:
    offset = np.asarray(config.user_offset, dtype=float)
    if not np.any(offset):
        raise GeometryError("user_offset must be non-zero")
    start = vehicle_state_at(config, 0)
    return link_geometry(np.zeros(3), offset, start.heading)


def rsu_geometry(config: ScenarioConfig, vehicle: VehicleState) -> LinkGeometry:
    return link_geometry(config.rsu_position, vehicle.position, vehicle.heading)
