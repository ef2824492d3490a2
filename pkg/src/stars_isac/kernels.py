"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable ``STARS_ISAC_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("STARS_ISAC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

steering_upa = _impl.steering_upa
quantize_phases = _impl.quantize_phases
decode_car = _impl.decode_car
surface_gain = _impl.surface_gain
slot_snrs = _impl.slot_snrs
echo = _impl.echo

__all__ = [
    "BACKEND",
    "steering_upa",
    "quantize_phases",
    "decode_car",
    "surface_gain",
    "slot_snrs",
    "echo",
]
