"""Steering vectors, path loss and the per-slot rank-one channels."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .scenario import ScenarioConfig, VehicleState, rsu_geometry, user_geometry


def steering_rsu(elevation: float, azimuth: float, n_y: int, n_z: int) -> np.ndarray:
    """RSU UPA response in the YOZ plane, zero-based indices with y varying fastest."""
    if n_y < 1 or n_z < 1:
        raise ValueError(f"antenna counts must be >= 1, got ({n_y}, {n_z})")
    return kernels.steering_upa(
        int(n_y), int(n_z), math.sin(elevation) * math.sin(azimuth), math.cos(elevation)
    )


def steering_stars(elevation: float, azimuth: float, heading_fold: float, m_side: int) -> np.ndarray:
    """STARS UPA response written in the standard frame, m1 varying fastest."""
    if m_side < 1:
        raise ValueError(f"m_side must be >= 1, got {m_side}")
    s = math.sin(heading_fold) * math.sin(elevation)
    return kernels.steering_upa(int(m_side), int(m_side), s * math.cos(azimuth), s * math.sin(azimuth))


def pathloss(distance: float, ref_gain: float, ref_dist: float, exponent: float) -> float:
    """Power-law attenuation ``ref_gain * (distance / ref_dist) ** -exponent``."""
    if not distance > 0:
        raise ValueError(f"distance must be > 0, got {distance}")
    if not ref_dist > 0 or not ref_gain > 0:
        raise ValueError("reference distance and gain must be > 0")
    if exponent < 0:
        raise ValueError("path-loss exponent must be >= 0")
    return ref_gain * (distance / ref_dist) ** (-exponent)


def antenna_gain(n_t: int, n_r: int) -> float:
    if n_t < 1 or n_r < 1:
        raise ValueError("antenna counts must be >= 1")
    return math.sqrt(n_t * n_r)


@dataclass(frozen=True)
class ChannelSet:
    a_tx: np.ndarray
    b_rx: np.ndarray
    a_stars: np.ndarray
    a_user: np.ndarray
    g_dl: np.ndarray
    g_ul: np.ndarray
    h_user: np.ndarray
    pathloss_rsu: float
    pathloss_user: float
    antenna_gain: float

    @property
    def n_elements(self) -> int:
        return self.a_stars.shape[0]


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def build_channels(config: ScenarioConfig, vehicle: VehicleState) -> ChannelSet:
    """Assemble G^DL, G^UL and h_0 for the vehicle's slot."""
    geo = rsu_geometry(config, vehicle)
    ugeo = user_geometry(config, vehicle)

    a_tx = steering_rsu(geo.elevation, geo.azimuth, config.n_tx_y, config.n_tx_z)
    b_rx = steering_rsu(geo.elevation, geo.azimuth, config.n_rx_y, config.n_rx_z)
    a_stars = steering_stars(geo.elevation, geo.azimuth, geo.heading_fold, config.m_side)
    a_user = steering_stars(ugeo.elevation, ugeo.azimuth, ugeo.heading_fold, config.m_side)

    alpha_n = pathloss(geo.distance, config.pathloss_ref, config.pathloss_ref_dist, config.pathloss_exp_rsu)
    alpha_u = pathloss(ugeo.distance, config.pathloss_ref, config.pathloss_ref_dist, config.pathloss_exp_user)

    m, n_t, n_r = config.n_elements, config.n_tx, config.n_rx
    g_dl = math.sqrt(m * n_t * alpha_n) * np.outer(a_stars, a_tx.conj())
    g_ul = math.sqrt(m * n_r * alpha_n) * np.outer(a_stars, b_rx.conj())
    h_user = math.sqrt(m * alpha_u) * a_user
    _freeze(a_tx, b_rx, a_stars, a_user, g_dl, g_ul, h_user)
    return ChannelSet(
        a_tx=a_tx,
        b_rx=b_rx,
        a_stars=a_stars,
        a_user=a_user,
        g_dl=g_dl,
        g_ul=g_ul,
        h_user=h_user,
        pathloss_rsu=alpha_n,
        pathloss_user=alpha_u,
        antenna_gain=antenna_gain(n_t, n_r),
    )
