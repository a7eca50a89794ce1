"""Unit conversions.

All internal frequencies, couplings, and decay rates are angular (rad/ns);
times are ns.  File formats and CLI interfaces use ordinary frequency:
GHz for frequencies, MHz for couplings and decay rates.
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def ghz(f):
    """Ordinary frequency in GHz -> angular rad/ns."""
    return TWO_PI * np.asarray(f, dtype=float) if np.ndim(f) else TWO_PI * float(f)


def mhz(f):
    """Ordinary frequency in MHz -> angular rad/ns."""
    return ghz(np.asarray(f, dtype=float) * 1e-3) if np.ndim(f) else ghz(f * 1e-3)


def as_ghz(w):
    """Angular rad/ns -> ordinary GHz."""
    return np.asarray(w) / TWO_PI if np.ndim(w) else w / TWO_PI


def as_mhz(w):
    """Angular rad/ns -> ordinary MHz."""
    return as_ghz(w) * 1e3
