"""Echo, radar SNR, user SNR/rate and RSU-action decoding.

Functions here take explicit matrices and follow the signal model literally;
:func:`slot_outcome` is the fused fast path the environment uses, built on the
rank-one structure of the channels.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import kernels
from .channel import ChannelSet
from .stars import StarsProfile


@dataclass(frozen=True)
class RsuBeams:
    w_tx: np.ndarray
    w_rx: np.ndarray


@dataclass(frozen=True)
class SlotOutcome:
    echo: np.ndarray
    radar_snr: float
    user_snr: float
    rate: float


def _unit_or_fallback(v: np.ndarray, name: str, counters: Counter | None) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0.0:
        if counters is not None:
            counters[f"{name}_zero_fallback"] += 1
        v = np.zeros_like(v)
        v[0] = 1.0
        return v
    return v / norm


def decode_rsu_action(raw, power: float, n_tx: int, n_rx: int, counters: Counter | None = None) -> RsuBeams:
    """Split an RSU action (Re w_t, Re w_r, Im w_t, Im w_r) into full-power beams."""
    raw = np.asarray(raw, dtype=np.float64)
    expected = 2 * (n_tx + n_rx)
    if raw.shape != (expected,):
        raise ValueError(f"RSU action must have length {expected}, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise ValueError("RSU action contains non-finite values")
    if not power > 0:
        raise ValueError("power must be > 0")
    half = n_tx + n_rx
    w_tx = raw[:n_tx] + 1j * raw[half : half + n_tx]
    w_rx = raw[n_tx:half] + 1j * raw[half + n_tx :]
    w_tx = math.sqrt(power) * _unit_or_fallback(w_tx, "w_tx", counters)
    w_rx = _unit_or_fallback(w_rx, "w_rx", counters)
    return RsuBeams(w_tx=w_tx, w_rx=w_rx)


def matched_beams(ch: ChannelSet, power: float) -> RsuBeams:
    return RsuBeams(w_tx=math.sqrt(power) * ch.a_tx, w_rx=ch.b_rx.copy())


def _check_square(theta: np.ndarray, m: int, name: str) -> None:
    if theta.shape != (m, m):
        raise ValueError(f"{name} must be {m}x{m}, got {theta.shape}")


def composite_echo_matrix(ch: ChannelSet, theta_r: np.ndarray, rcs: complex) -> np.ndarray:
    """Two-path echo matrix: STARS reflection plus car-body reflection."""
    _check_square(theta_r, ch.n_elements, "theta_r")
    stars_path = ch.g_ul.conj().T @ theta_r @ ch.g_dl
    body_path = ch.antenna_gain * rcs * ch.pathloss_rsu * np.outer(ch.b_rx, ch.a_tx.conj())
    return stars_path + body_path


def matched_filter_output(
    ch: ChannelSet, theta_r: np.ndarray, w_tx: np.ndarray, rcs_draw: complex, noise: np.ndarray, mf_gain: float
) -> np.ndarray:
    if not mf_gain > 0:
        raise ValueError("mf_gain must be > 0")
    h = composite_echo_matrix(ch, theta_r, rcs_draw)
    if w_tx.shape != (h.shape[1],) or noise.shape != (h.shape[0],):
        raise ValueError("beam or noise shape does not match the channel")
    return math.sqrt(mf_gain) * (h @ w_tx) + noise


def radar_snr(
    ch: ChannelSet,
    theta_r: np.ndarray,
    w_tx: np.ndarray,
    w_rx: np.ndarray,
    rcs_std: float,
    noise_power: float,
    mf_gain: float,
) -> float:
    """Post-combining radar SNR with the deterministic RCS spread in the echo."""
    norm2 = float(np.vdot(w_rx, w_rx).real)
    if norm2 == 0.0:
        raise ValueError("receive beam must be non-zero")
    h = composite_echo_matrix(ch, theta_r, rcs_std)
    if w_tx.shape != (h.shape[1],) or w_rx.shape != (h.shape[0],):
        raise ValueError("beam shapes do not match the channel")
    return mf_gain * abs(np.vdot(w_rx, h @ w_tx)) ** 2 / (norm2 * noise_power)


def user_snr(ch: ChannelSet, theta_t: np.ndarray, w_tx: np.ndarray, noise_power: float) -> float:
    _check_square(theta_t, ch.n_elements, "theta_t")
    if w_tx.shape != (ch.g_dl.shape[1],):
        raise ValueError("w_tx shape does not match the channel")
    return abs(np.vdot(ch.h_user, theta_t @ (ch.g_dl @ w_tx))) ** 2 / noise_power


def achievable_rate(snr: float) -> float:
    if snr < 0:
        raise ValueError(f"snr must be >= 0, got {snr}")
    return math.log2(1.0 + snr)


def to_db(x: float) -> float:
    if not x > 0:
        raise ValueError(f"to_db needs a positive value, got {x}")
    return 10.0 * math.log10(x)


def slot_snrs(
    ch: ChannelSet, profile: StarsProfile, beams: RsuBeams, rcs_std: float, mf_gain: float,
    sensing_noise: float, comm_noise: float,
) -> tuple[float, float]:
    """Fast (radar SNR, user SNR) for one slot; equals the matrix path above."""
    return kernels.slot_snrs(
        ch.a_tx, ch.b_rx, ch.a_stars, ch.a_user, beams.w_tx, beams.w_rx,
        profile.amp_r, profile.phase_r, profile.amp_t, profile.phase_t,
        ch.pathloss_rsu, ch.pathloss_user, rcs_std, mf_gain, sensing_noise, comm_noise,
    )


def fast_echo(
    ch: ChannelSet, profile: StarsProfile, w_tx: np.ndarray, rcs_draw: complex, mf_gain: float, noise: np.ndarray
) -> np.ndarray:
    return kernels.echo(
        ch.a_tx, ch.b_rx, ch.a_stars, w_tx, profile.amp_r, profile.phase_r,
        ch.pathloss_rsu, complex(rcs_draw), mf_gain, np.ascontiguousarray(noise, dtype=np.complex128),
    )
