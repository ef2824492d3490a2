# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-slot kernels; signatures match ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, ceil, fmod, cos, sin, M_PI

cnp.import_array()


cdef inline double complex _cexpj(double x) nogil:
    return cos(x) + 1j * sin(x)


cdef inline double _abs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


def steering_upa(int n_a, int n_b, double coef_a, double coef_b):
    if n_a < 1 or n_b < 1:
        raise ValueError("array dimensions must be >= 1")
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(n_a * n_b, dtype=np.complex128)
    cdef double complex[::1] v = out
    cdef double norm = 1.0 / sqrt(<double>(n_a * n_b))
    cdef Py_ssize_t i, k
    with nogil:
        for k in range(n_b):
            for i in range(n_a):
                v[k * n_a + i] = norm * _cexpj(M_PI * (i * coef_a + k * coef_b))
    return out


cdef inline double _quantize(double x, int levels, double step) nogil:
    cdef double two_pi = 2.0 * M_PI
    cdef double y = fmod(x, two_pi)
    if y < 0:
        y += two_pi
    if y >= two_pi:
        y -= two_pi
    cdef double t = y / step
    cdef double k
    if t == levels - 0.5:
        return 0.0
    k = ceil(t - 0.5)
    if k >= levels:
        k -= levels
    return k * step


def quantize_phases(x, int bits):
    cdef int levels = 1 << bits
    cdef double step = 2.0 * M_PI / levels
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    flat = np.ascontiguousarray(arr.reshape(-1))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(flat.shape[0], dtype=np.float64)
    cdef double[::1] src = flat
    cdef double[::1] dst = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(src.shape[0]):
            dst[i] = _quantize(src[i], levels, step)
    if scalar:
        return float(out[0])
    return out.reshape(arr.shape)


def decode_car(raw, int bits, double[::1] phase_r, double[::1] phase_t, double[::1] amp_r, double[::1] amp_t):
    cdef double[::1] r = np.ascontiguousarray(raw, dtype=np.float64)
    cdef Py_ssize_t m = phase_r.shape[0]
    cdef int levels = 1 << bits
    cdef double step = 2.0 * M_PI / levels
    cdef Py_ssize_t i
    cdef int n_clipped = 0
    cdef double x
    if r.shape[0] != 3 * m:
        raise ValueError("raw action length must be 3M")
    with nogil:
        for i in range(3 * m):
            x = r[i]
            if x > 1.0:
                x = 1.0
                n_clipped += 1
            elif x < -1.0:
                x = -1.0
                n_clipped += 1
            if i < m:
                phase_r[i] = _quantize((x + 1.0) * M_PI, levels, step)
            elif i < 2 * m:
                phase_t[i - m] = _quantize((x + 1.0) * M_PI, levels, step)
            else:
                amp_r[i - 2 * m] = (x + 1.0) * 0.5
                x = 1.0 - amp_r[i - 2 * m] * amp_r[i - 2 * m]
                amp_t[i - 2 * m] = sqrt(x) if x > 0.0 else 0.0
    return n_clipped


cdef double complex _surface_gain(const double complex[::1] left, const double complex[::1] right,
                                  const double[::1] amp, const double[::1] phase) nogil:
    cdef double complex acc = 0
    cdef Py_ssize_t m
    for m in range(left.shape[0]):
        acc = acc + left[m].conjugate() * amp[m] * _cexpj(phase[m]) * right[m]
    return acc


cdef double complex _vdot(const double complex[::1] a, const double complex[::1] b) nogil:
    cdef double complex acc = 0
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        acc = acc + a[i].conjugate() * b[i]
    return acc


def surface_gain(const double complex[::1] weights_left, const double complex[::1] weights_right,
                 const double[::1] amp, const double[::1] phase):
    return complex(_surface_gain(weights_left, weights_right, amp, phase))


def slot_snrs(const double complex[::1] a_tx, const double complex[::1] b_rx,
              const double complex[::1] a_stars, const double complex[::1] a_user,
              const double complex[::1] w_tx, const double complex[::1] w_rx,
              const double[::1] amp_r, const double[::1] phase_r,
              const double[::1] amp_t, const double[::1] phase_t,
              double pathloss_rsu, double pathloss_user, double rcs_std, double mf_gain,
              double sensing_noise, double comm_noise):
    cdef Py_ssize_t n_t = a_tx.shape[0]
    cdef Py_ssize_t n_r = b_rx.shape[0]
    cdef Py_ssize_t m = a_stars.shape[0]
    cdef double complex tx_proj, rx_proj, c_refl, c_trans, scale, amp
    cdef double rx_norm2, radar, user
    with nogil:
        tx_proj = _vdot(a_tx, w_tx)
        rx_proj = _vdot(w_rx, b_rx)
        c_refl = _surface_gain(a_stars, a_stars, amp_r, phase_r)
        scale = sqrt(<double>(n_t * n_r)) * pathloss_rsu * (m * c_refl + rcs_std)
        rx_norm2 = _vdot(w_rx, w_rx).real
        radar = mf_gain * _abs2(rx_proj * scale * tx_proj) / (rx_norm2 * sensing_noise)
        c_trans = _surface_gain(a_user, a_stars, amp_t, phase_t)
        amp = sqrt(m * pathloss_user) * sqrt(m * n_t * pathloss_rsu) * c_trans * tx_proj
        user = _abs2(amp) / comm_noise
    return radar, user


def echo(const double complex[::1] a_tx, const double complex[::1] b_rx,
         const double complex[::1] a_stars, const double complex[::1] w_tx,
         const double[::1] amp_r, const double[::1] phase_r,
         double pathloss_rsu, double complex rcs_draw, double mf_gain,
         const double complex[::1] noise):
    cdef Py_ssize_t n_t = a_tx.shape[0]
    cdef Py_ssize_t n_r = b_rx.shape[0]
    cdef Py_ssize_t m = a_stars.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(n_r, dtype=np.complex128)
    cdef double complex[::1] o = out
    cdef double complex coef
    cdef Py_ssize_t i
    with nogil:
        coef = (sqrt(mf_gain) * sqrt(<double>(n_t * n_r)) * pathloss_rsu
                * (m * _surface_gain(a_stars, a_stars, amp_r, phase_r) + rcs_draw) * _vdot(a_tx, w_tx))
        for i in range(n_r):
            o[i] = coef * b_rx[i] + noise[i]
    return out
