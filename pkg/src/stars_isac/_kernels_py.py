"""Pure-numpy implementations of the per-slot hot kernels.

These mirror ``_kernels.pyx`` one for one and are used when the compiled
extension is unavailable (or ``STARS_ISAC_PURE_PYTHON=1``).
"""

import math

import numpy as np


def steering_upa(n_a, n_b, coef_a, coef_b):
    """Unit-norm UPA response, entry (i, k) = exp(j*pi*(i*coef_a + k*coef_b)), i fastest."""
    i = np.arange(n_a, dtype=np.float64)
    k = np.arange(n_b, dtype=np.float64)
    phase = np.pi * (i[None, :] * coef_a + k[:, None] * coef_b)
    return (np.exp(1j * phase) / math.sqrt(n_a * n_b)).ravel()


def quantize_phases(x, bits):
    """Nearest point of the uniform 2**bits phase grid, circular metric, ties to the smaller value."""
    levels = 1 << bits
    step = 2.0 * np.pi / levels
    y = np.mod(np.asarray(x, dtype=np.float64), 2.0 * np.pi)
    t = y / step
    k = np.ceil(t - 0.5)
    # the tie between the last grid point and 2*pi resolves to 0
    k = np.where(t == levels - 0.5, 0.0, k)
    k = np.mod(k, levels)
    return k * step


def decode_car(raw, bits, phase_r, phase_t, amp_r, amp_t):
    """Decode a clipped Car action into the four preallocated profile arrays.

    Returns the number of entries that had to be clipped to [-1, 1].
    """
    raw = np.asarray(raw, dtype=np.float64)
    m = phase_r.shape[0]
    clipped = np.clip(raw, -1.0, 1.0)
    n_clipped = int(np.count_nonzero(clipped != raw))
    phase_r[:] = quantize_phases((clipped[:m] + 1.0) * np.pi, bits)
    phase_t[:] = quantize_phases((clipped[m : 2 * m] + 1.0) * np.pi, bits)
    amp_r[:] = (clipped[2 * m :] + 1.0) * 0.5
    amp_t[:] = np.sqrt(np.maximum(1.0 - amp_r * amp_r, 0.0))
    return n_clipped


def surface_gain(weights_left, weights_right, amp, phase):
    """sum_m conj(l_m) * amp_m * exp(j*phase_m) * r_m for diagonal surface coefficients."""
    return complex(np.sum(np.conj(weights_left) * (amp * np.exp(1j * phase)) * weights_right))


def slot_snrs(
    a_tx,
    b_rx,
    a_stars,
    a_user,
    w_tx,
    w_rx,
    amp_r,
    phase_r,
    amp_t,
    phase_t,
    pathloss_rsu,
    pathloss_user,
    rcs_std,
    mf_gain,
    sensing_noise,
    comm_noise,
):
    """Radar and user SNR of one slot using the rank-one channel structure.

    The cascaded echo collapses to G*alpha*(M*c + rcs)*b*a^H with
    c = a_s^H Theta_R a_s, so both SNRs need only O(M + N) work.
    """
    n_t = a_tx.shape[0]
    n_r = b_rx.shape[0]
    m = a_stars.shape[0]
    gain = math.sqrt(n_t * n_r)
    tx_proj = complex(np.vdot(a_tx, w_tx))
    rx_proj = complex(np.vdot(w_rx, b_rx))
    c_refl = surface_gain(a_stars, a_stars, amp_r, phase_r)
    scale = gain * pathloss_rsu * (m * c_refl + rcs_std)
    rx_norm2 = float(np.vdot(w_rx, w_rx).real)
    radar = mf_gain * abs(rx_proj * scale * tx_proj) ** 2 / (rx_norm2 * sensing_noise)

    c_trans = surface_gain(a_user, a_stars, amp_t, phase_t)
    amp = math.sqrt(m * pathloss_user) * math.sqrt(m * n_t * pathloss_rsu) * c_trans * tx_proj
    user = abs(amp) ** 2 / comm_noise
    return radar, user


def echo(a_tx, b_rx, a_stars, w_tx, amp_r, phase_r, pathloss_rsu, rcs_draw, mf_gain, noise):
    """Matched-filter output sqrt(eta)*H(rcs_draw)*w_tx + noise."""
    n_t = a_tx.shape[0]
    n_r = b_rx.shape[0]
    m = a_stars.shape[0]
    gain = math.sqrt(n_t * n_r)
    c_refl = surface_gain(a_stars, a_stars, amp_r, phase_r)
    coef = math.sqrt(mf_gain) * gain * pathloss_rsu * (m * c_refl + rcs_draw) * complex(np.vdot(a_tx, w_tx))
    return coef * b_rx + noise
