"""STARS coefficients: phase quantization, energy split and Car-action decoding."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import kernels


def phase_grid(bits: int) -> np.ndarray:
    levels = 1 << bits
    return 2.0 * np.pi * np.arange(levels) / levels


def quantize_phase(x, bits: int):
    """Snap phase(s) to the nearest of the ``2**bits`` uniform levels on the circle."""
    if bits < 1:
        raise ValueError(f"bits must be >= 1, got {bits}")
    return kernels.quantize_phases(x, int(bits))


@dataclass(frozen=True)
class StarsProfile:
    phase_t: np.ndarray
    phase_r: np.ndarray
    amp_t: np.ndarray
    amp_r: np.ndarray

    @property
    def n_elements(self) -> int:
        return self.phase_t.shape[0]

    @classmethod
    def default(cls, m: int) -> "StarsProfile":
        """Zero phases and an even power split, the state before the first slot."""
        half = np.full(m, np.sqrt(0.5))
        return cls(np.zeros(m), np.zeros(m), half, half.copy())

    def refraction_only(self) -> "StarsProfile":
        return StarsProfile(self.phase_t, self.phase_r, np.ones_like(self.amp_t), np.zeros_like(self.amp_r))

    def check(self, bits: int, atol: float = 1e-12) -> None:
        """Raise ``AssertionError`` if any feasibility constraint is violated."""
        grid = phase_grid(bits)
        for name in ("phase_t", "phase_r"):
            ph = getattr(self, name)
            if not np.all(np.isin(ph, grid)):
                raise AssertionError(f"{name} has entries outside the phase grid")
        for name in ("amp_t", "amp_r"):
            a = getattr(self, name)
            if np.any(a < 0) or np.any(a > 1):
                raise AssertionError(f"{name} outside [0, 1]")
        err = np.max(np.abs(self.amp_t**2 + self.amp_r**2 - 1.0))
        if err > atol:
            raise AssertionError(f"energy split violated by {err:.3e}")


def decode_car_action(raw, bits: int, counters: Counter | None = None) -> StarsProfile:
    """Map a Car action in [-1, 1]^(3M) to a feasible STARS profile.

    Layout is (reflection phases, transmission phases, reflection amplitudes);
    the transmission amplitude is derived from the energy split.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.shape[0] % 3 != 0 or raw.shape[0] == 0:
        raise ValueError(f"Car action must be a flat vector of length 3M, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise ValueError("Car action contains non-finite values")
    m = raw.shape[0] // 3
    phase_r = np.empty(m)
    phase_t = np.empty(m)
    amp_r = np.empty(m)
    amp_t = np.empty(m)
    n_clipped = kernels.decode_car(raw, int(bits), phase_r, phase_t, amp_r, amp_t)
    if n_clipped and counters is not None:
        counters["car_action_clipped"] += n_clipped
    return StarsProfile(phase_t=phase_t, phase_r=phase_r, amp_t=amp_t, amp_r=amp_r)


def encode_car_action(profile: StarsProfile) -> np.ndarray:
    """Inverse affine map of :func:`decode_car_action` (phases assumed in [0, 2pi))."""
    return np.concatenate(
        [profile.phase_r / np.pi - 1.0, profile.phase_t / np.pi - 1.0, 2.0 * profile.amp_r - 1.0]
    )


def theta_matrices(profile: StarsProfile) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal transmission and reflection coefficient matrices."""
    theta_t = np.diag(profile.amp_t * np.exp(1j * profile.phase_t))
    theta_r = np.diag(profile.amp_r * np.exp(1j * profile.phase_r))
    return theta_t, theta_r
