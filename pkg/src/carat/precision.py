"""Global precision modes.

Two modes are supported: "standard" (float32, training speed) and "verify"
(float64, used for finite-difference gradient checks).  The active mode
determines the dtype of every tensor created afterwards; existing tensors
keep their dtype.
"""

import contextlib

import numpy as np

_MODES = {"standard": np.float32, "verify": np.float64}

_active_mode = "standard"


def set_mode(mode):
    """Set the active precision mode ("standard" or "verify")."""
    global _active_mode
    if mode not in _MODES:
        raise ValueError(f"unknown precision mode {mode!r}; expected one of {sorted(_MODES)}")
    _active_mode = mode


def get_mode():
    return _active_mode


def active_dtype():
    return _MODES[_active_mode]


@contextlib.contextmanager
def mode(name):
    """Temporarily switch the precision mode."""
    global _active_mode
    prev = _active_mode
    set_mode(name)
    try:
        yield
    finally:
        _active_mode = prev
