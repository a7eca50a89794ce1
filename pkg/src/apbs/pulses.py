"""Flux trajectories: trapezoid pulses, the flux-to-frequency map, and an
optional single-pole line-distortion filter.

Flux is in units of the flux quantum; the map covers the standard asymmetric
two-junction form with the asymmetry derived from the two sweet spots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidSpecError, SamplingError


@dataclass(frozen=True)
class FluxMap:
    """omega_q(phi) = (omega_max + e_c) * (cos^2(pi phi) + d^2 sin^2(pi phi))^(1/4) - e_c."""

    omega_max: float
    omega_min: float
    e_c: float
    d: float = field(init=False)

    def __post_init__(self):
        if not self.omega_min < self.omega_max:
            raise InvalidSpecError("omega_min must be below omega_max")
        d = ((self.omega_min + self.e_c) / (self.omega_max + self.e_c)) ** 2
        if not 0.0 <= d <= 1.0:
            raise InvalidSpecError(f"derived asymmetry d={d} outside [0, 1]")
        object.__setattr__(self, "d", d)


@dataclass(frozen=True)
class TrapezoidPulse:
    """Piecewise-linear flux pulse: rise to phi_f, hold, fall.

    With ``return_to_start`` the fall ramps back to ``phi_i`` (the standard
    there-and-back protocol, and also the quench protocol where the fall is
    the fast ramp back before acquisition); without it the flux stays at
    ``phi_f`` and the fall segment is flat.
    """

    phi_i: float
    phi_f: float
    tau_r: float
    tau_hold: float
    tau_f: float
    return_to_start: bool = True

    def __post_init__(self):
        if min(self.tau_r, self.tau_hold, self.tau_f) < 0:
            raise InvalidSpecError("segment durations must be >= 0")
        for phi in (self.phi_i, self.phi_f):
            if not 0.0 <= phi <= 0.5:
                raise InvalidSpecError("fluxes must lie in [0, 0.5]")

    @property
    def duration(self) -> float:
        return self.tau_r + self.tau_hold + self.tau_f

    @property
    def phi_end(self) -> float:
        return self.phi_i if self.return_to_start else self.phi_f

    def segments(self):
        """(t0, t1, phi0, phi1) pieces, zero-length ones dropped."""
        t0 = 0.0
        out = []
        for dur, p0, p1 in (
            (self.tau_r, self.phi_i, self.phi_f),
            (self.tau_hold, self.phi_f, self.phi_f),
            (self.tau_f, self.phi_f, self.phi_end),
        ):
            if dur > 0:
                out.append((t0, t0 + dur, p0, p1))
                t0 += dur
        return out

    def flux_at(self, t):
        """Flux at time(s) t, clamped to the end values outside [0, duration]."""
        t = np.asarray(t, dtype=float)
        phi = np.full(t.shape, self.phi_end)
        phi = np.where(t <= 0, self.phi_i, phi)
        for t0, t1, p0, p1 in self.segments():
            inside = (t > t0) & (t <= t1)
            frac = np.where(inside, (t - t0) / (t1 - t0), 0.0)
            phi = np.where(inside, p0 + frac * (p1 - p0), phi)
        return phi if phi.ndim else float(phi)


@dataclass(frozen=True)
class LineFilter:
    """Single-pole low-pass distortion of the flux line (cutoff in rad/ns)."""

    cutoff: float

    def __post_init__(self):
        if self.cutoff <= 0:
            raise InvalidSpecError("filter cutoff must be positive")


def flux_to_freq(fmap: FluxMap, phi):
    """Emitter frequency at flux ``phi`` (periodic, period 1)."""
    phi = np.asarray(phi, dtype=float)
    c = np.cos(np.pi * phi) ** 2
    s = np.sin(np.pi * phi) ** 2
    w = (fmap.omega_max + fmap.e_c) * (c + fmap.d**2 * s) ** 0.25 - fmap.e_c
    return w if w.ndim else float(w)


def freq_to_flux(fmap: FluxMap, omega: float) -> float:
    """Invert the flux map on [0, 0.5], where it is monotone decreasing."""
    if not fmap.omega_min <= omega <= fmap.omega_max:
        raise InvalidSpecError(
            f"target frequency outside the tunable range "
            f"[{fmap.omega_min}, {fmap.omega_max}] rad/ns"
        )
    if omega == fmap.omega_max:
        return 0.0
    if omega == fmap.omega_min:
        return 0.5
    return brentq(lambda p: flux_to_freq(fmap, p) - omega, 0.0, 0.5, xtol=1e-14)


def sample_pulse(pulse: TrapezoidPulse, dt: float):
    """Sample the trapezoid on a uniform grid, endpoints exact.

    Returns ``(t, phi)`` with ``t`` spanning [0, duration].  Each nonzero
    segment must hold at least one step of size ``dt``.
    """
    if dt <= 0:
        raise SamplingError("dt must be positive")
    segs = pulse.segments()
    for t0, t1, _, _ in segs:
        if dt > (t1 - t0) + 1e-12:
            raise SamplingError(
                f"dt={dt} exceeds the {t1 - t0} ns segment starting at {t0} ns"
            )
    total = pulse.duration
    if total == 0:
        return np.array([0.0]), np.array([pulse.phi_i])
    n = int(round(total / dt))
    if not np.isclose(n * dt, total, rtol=0, atol=1e-9):
        n = int(np.ceil(total / dt - 1e-12))
    t = np.arange(n + 1) * (total / n)
    return t, pulse.flux_at(t)


def apply_line_filter(times, values, filt: LineFilter | None, initial=None):
    """Causal discrete single-pole low-pass with unit DC gain.

    Uses the zero-order-hold discretization ``y += (1 - exp(-wc dt)) (x - y)``
    so a held constant input is reproduced exactly.  ``initial`` seeds the
    filter state (defaults to the first sample, i.e. a pre-settled line).
    """
    values = np.asarray(values, dtype=float)
    if filt is None:
        return values.copy()
    times = np.asarray(times, dtype=float)
    steps = np.diff(times)
    if len(steps) and not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
        raise SamplingError("line filter requires a uniform time grid")
    dt = steps[0] if len(steps) else 0.0
    alpha = 1.0 - np.exp(-filt.cutoff * dt)
    y = np.empty_like(values)
    state = values[0] if initial is None else float(initial)
    for k, x in enumerate(values):
        state = state + alpha * (x - state)
        y[k] = state
    return y
