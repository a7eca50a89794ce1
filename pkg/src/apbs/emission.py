"""Output-field synthesis and the spectral analysis chain.

The monitored port sees the coherent sum ``a_out = sum_n sqrt(kappa_n^out) a_n``
over photonic modes, recorded in a finite acquisition band (a frequency window
around a digitizer's local oscillator).  Analysis mirrors the measurement
chain: broadband FFT with peak detection, per-peak demodulation through an
FIR low-pass, exponential decay fits of the envelopes, and photon-count
integration.

Interface units here are signal-domain: GHz for frequencies, ns for times.
Decay rates cross between conventions; ``kappa`` on a fit result is the
field-decay rate 2/tau (rad/ns), and the 2*pi/tau variant is carried
alongside since both appear in linewidth bookkeeping.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.signal
from scipy.optimize import curve_fit

from .errors import (
    FitDomainError,
    InvalidSpecError,
    LeakageError,
    SamplingError,
    StageError,
    TruncationWarning,
)
from .propagate import ExcitationState, PropagationResult, propagate
from .pulses import TrapezoidPulse
from .units import TWO_PI, as_ghz, ghz


@dataclass
class EmissionTrace:
    """Complex output-field samples in the acquisition frame.

    ``times`` start at the quench (epoch 0); the acquisition band is
    ``(center_GHz, width_GHz)`` and the field rotates at the lab frequency
    minus the band center.
    """

    times: np.ndarray
    field: np.ndarray
    acquisition_band: tuple[float, float] = (5.0, 1.0)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.field = np.asarray(self.field, dtype=complex)
        steps = np.diff(self.times)
        if len(steps) and not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise SamplingError("emission trace requires uniform sampling")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def energy(self) -> float:
        return float(np.trapezoid(np.abs(self.field) ** 2, self.times))

    def to_csv(self, path):
        np.savetxt(
            path,
            np.column_stack([self.times, self.field.real, self.field.imag]),
            delimiter=",", header="t_ns,re,im", comments="", fmt="%.12g",
        )


@dataclass
class ModeEmission:
    """Per-mode emission record: demodulated envelope and derived quantities."""

    peak_freq: float                      # GHz
    envelope: np.ndarray
    times: np.ndarray
    mode_index: int | None = None
    tau_fit: float | None = None          # ns
    kappa: float | None = None            # 2/tau, rad/ns
    kappa_fft_convention: float | None = None  # 2*pi/tau, rad/ns
    photons: float | None = None
    coherent_integral_sq: float | None = None
    fit_amplitude: float | None = None
    fit_residual: float | None = None
    quality: str = "ok"
    transient_ns: float = 0.0

    def envelope_energy(self) -> float:
        return float(np.trapezoid(np.abs(self.envelope) ** 2, self.times))


def synthesize_output_field(
    propagation: PropagationResult,
    mode_kappas,
    port_weights=None,
    *,
    acq_center_ghz: float = 5.0,
    acq_width_ghz: float = 1.0,
    trace_dt: float = 1.0,
    duration: float | None = None,
) -> EmissionTrace:
    """Coherent output field from a lossy propagation.

    ``mode_kappas`` (rad/ns) must match the rates the propagation ran with;
    ``port_weights`` give the monitored-port fraction of each rate.  When the
    propagation ends in a closed-form ring-down (constant flux), the trace is
    evaluated analytically and components whose lab frequency falls outside
    the acquisition band are dropped -- them being below the transmission gap,
    they do not reach the port in band.  Otherwise the field is summed from
    the stored amplitude samples without band selection.
    """
    mode_kappas = np.asarray(mode_kappas, dtype=float)
    n_modes = propagation.mode_amplitudes.shape[1]
    if len(mode_kappas) != n_modes:
        raise InvalidSpecError("mode_kappas length does not match the propagation")
    if propagation.mode_kappas is None:
        if np.any(mode_kappas > 0):
            raise InvalidSpecError("propagation ran without decay; kappas must be 0")
    elif not np.allclose(propagation.mode_kappas, mode_kappas, rtol=1e-9, atol=1e-15):
        raise InvalidSpecError("mode_kappas differ from the propagation's rates")
    if port_weights is None:
        port_weights = np.ones(n_modes)
    port_weights = np.asarray(port_weights, dtype=float)
    if len(port_weights) != n_modes:
        raise InvalidSpecError("port weight vector length mismatch")
    sqrt_k_out = np.sqrt(port_weights * mode_kappas)
    w_acq = ghz(acq_center_ghz)
    band = (acq_center_ghz, acq_width_ghz)

    rd = propagation.ringdown
    if rd is not None:
        if duration is None:
            duration = propagation.times[-1] - rd.t0
        n = max(2, int(round(duration / trace_dt)))
        t = np.arange(n) * trace_dt
        lab_ghz = as_ghz(rd.eigvals.real + rd.rotating_freq)
        mask = np.abs(lab_ghz - acq_center_ghz) <= acq_width_ghz / 2
        b = (sqrt_k_out @ rd.eigvecs[rd.mode_rows, :]) * rd.coeffs
        w_shift = rd.eigvals + (rd.rotating_freq - w_acq)
        field = np.exp(-1j * np.outer(t, w_shift[mask])) @ b[mask]
        return EmissionTrace(times=t, field=field, acquisition_band=band)

    t0 = propagation.quench_time or 0.0
    sel = propagation.times >= t0 - 1e-12
    t = propagation.times[sel] - t0
    amps = propagation.mode_amplitudes[sel]
    field = amps @ sqrt_k_out
    field = field * np.exp(-1j * (propagation.rotating_freq - w_acq) * t)
    return EmissionTrace(times=t, field=field, acquisition_band=band)


def emission_fft(trace: EmissionTrace, peak_threshold: float = 0.05):
    """Magnitude spectrum inside the acquisition band plus detected peaks.

    Returns ``(freqs_GHz, magnitudes, peaks)`` with ``freqs`` ascending and
    ``peaks`` a list of ``(freq_GHz, magnitude)`` above ``peak_threshold``
    of the tallest in-band bin, sorted by frequency.
    """
    n = len(trace.field)
    center, width = trace.acquisition_band
    # annihilation-operator signals rotate as exp(-i w t): flip the axis so
    # the reported frequency is the physical one
    freqs = center - np.fft.fftfreq(n, d=trace.dt)
    mags = np.abs(np.fft.fft(trace.field))
    order = np.argsort(freqs)
    freqs, mags = freqs[order], mags[order]
    inband = np.abs(freqs - center) <= width / 2
    f_in, m_in = freqs[inband], mags[inband]
    peaks = []
    if len(m_in) and m_in.max() > 0:
        idx, _ = scipy.signal.find_peaks(m_in, height=peak_threshold * m_in.max())
        peaks = [(float(f_in[i]), float(m_in[i])) for i in idx]
        peaks.sort()
    return f_in, m_in, peaks


def _fir_lowpass(n_samples, dt, cutoff_ghz):
    """Odd-tap FIR with a transition band of about one cutoff width."""
    numtaps = int(np.ceil(3.3 / (cutoff_ghz * dt)))
    numtaps = min(numtaps, max(3, n_samples // 3))
    if numtaps % 2 == 0:
        numtaps += 1
    return scipy.signal.firwin(numtaps, cutoff_ghz, fs=1.0 / dt)


def demodulate_mode(
    trace: EmissionTrace,
    peak_freq: float,
    lp_cutoff: float | None = None,
    neighbor_freqs=None,
) -> ModeEmission:
    """Shift one peak to DC and low-pass the result.

    ``lp_cutoff`` (GHz) must stay below half the spacing to the nearest
    neighboring peak; pass ``None`` to skip filtering (exact for a trace
    holding a single component).  The returned record carries the filter
    settling time so fits can skip the transient.
    """
    center, width = trace.acquisition_band
    if not abs(peak_freq - center) <= width / 2:
        raise InvalidSpecError("peak frequency outside the acquisition band")
    if lp_cutoff is not None and neighbor_freqs is not None:
        others = [f for f in neighbor_freqs if abs(f - peak_freq) > 1e-12]
        if others:
            nearest = min(abs(f - peak_freq) for f in others)
            if lp_cutoff > nearest / 2 + 1e-12:
                raise LeakageError(
                    f"cutoff {lp_cutoff} GHz exceeds half the {nearest} GHz "
                    f"spacing to the nearest peak"
                )
    z = trace.field * np.exp(1j * TWO_PI * (peak_freq - center) * trace.times)
    transient = 0.0
    if lp_cutoff is not None:
        taps = _fir_lowpass(len(z), trace.dt, lp_cutoff)
        delay = (len(taps) - 1) // 2
        padded = np.concatenate([z, np.zeros(delay, dtype=complex)])
        z = scipy.signal.lfilter(taps, 1.0, padded)[delay:]
        transient = 3.0 / lp_cutoff
    return ModeEmission(
        peak_freq=float(peak_freq),
        envelope=z,
        times=trace.times.copy(),
        transient_ns=transient,
    )


def fit_exponential_decay(envelope, times, skip: float = 0.0):
    """Least-squares A*exp(-t/tau) fit of |envelope|.

    The window starts after ``skip`` ns and ends where the magnitude falls
    below 1% of the windowed maximum.  Returns ``(tau, amplitude, residual)``
    with the amplitude referred to t = 0 of ``times`` and the residual as
    RMS/A.  A non-decaying envelope raises :class:`FitDomainError`.
    """
    times = np.asarray(times, dtype=float)
    mag = np.abs(np.asarray(envelope))
    win = times >= times[0] + skip
    if win.sum() < 8:
        raise FitDomainError("fewer than 8 samples past the filter transient")
    t_w, m_w = times[win], mag[win]
    peak = m_w.max()
    if peak <= 0:
        raise FitDomainError("envelope is identically zero")
    above = m_w >= 0.01 * peak
    last = np.max(np.flatnonzero(above))
    t_w, m_w = t_w[: last + 1], m_w[: last + 1]
    if len(t_w) < 8:
        raise FitDomainError("decay window too short to fit")
    half = len(m_w) // 2
    if m_w[half:].mean() >= m_w[:half].mean():
        raise FitDomainError("envelope magnitude is not decaying on average")
    good = m_w > 0
    slope, intercept = np.polyfit(t_w[good], np.log(m_w[good]), 1)
    if slope >= 0:
        raise FitDomainError("log-magnitude slope is nonnegative")
    tau0, a0 = -1.0 / slope, float(np.exp(intercept))
    try:
        popt, _ = curve_fit(
            lambda t, a, tau: a * np.exp(-t / tau),
            t_w, m_w, p0=[a0, tau0],
            bounds=([0, 1e-9], [np.inf, np.inf]), maxfev=2000,
        )
        a_fit, tau = float(popt[0]), float(popt[1])
    except RuntimeError:
        a_fit, tau = a0, tau0
    resid = m_w - a_fit * np.exp(-t_w / tau)
    residual = float(np.sqrt(np.mean(resid**2)) / a_fit) if a_fit > 0 else np.inf
    return tau, a_fit, residual


def photon_count(envelope, times, *, tau=None, amplitude=None) -> float:
    """Photon content of one demodulated channel, as an excitation fraction.

    With fit parameters the analytic integral ``|A|^2 tau / 2`` of the fitted
    exponential is used (immune to filter transients and trace truncation);
    otherwise the envelope energy is integrated numerically, warning when the
    last decile of the trace still holds over 1% of the energy.
    """
    if tau is not None and amplitude is not None:
        return float(abs(amplitude) ** 2 * tau / 2.0)
    times = np.asarray(times, dtype=float)
    power = np.abs(np.asarray(envelope)) ** 2
    total = float(np.trapezoid(power, times))
    if total > 0:
        cut = times[0] + 0.9 * (times[-1] - times[0])
        tail = float(np.trapezoid(power[times >= cut], times[times >= cut]))
        if tail > 0.01 * total:
            warnings.warn(
                "envelope truncated: last decile holds >1% of the energy",
                TruncationWarning, stacklevel=2,
            )
    return total


def coherent_photon_count(envelope, times) -> float:
    """|integral of the envelope|^2 -- the coherent-integration convention."""
    return float(np.abs(np.trapezoid(np.asarray(envelope), np.asarray(times))) ** 2)


@dataclass
class QuenchEmissionResult:
    """Everything the quench-and-record protocol produces."""

    trace: EmissionTrace
    spectrum_freqs: np.ndarray
    spectrum_mags: np.ndarray
    peaks: list
    modes: list[ModeEmission]
    photons_by_mode: np.ndarray
    photonic_weight_at_quench: float
    emitter_population_at_quench: float
    total_photons: float
    propagation: PropagationResult = field(repr=False, default=None)


def quench_emission_scenario(
    lattice,
    emitter,
    pulse: TrapezoidPulse,
    *,
    mode_kappas,
    port_weights=None,
    prep_amplitude: float = np.sqrt(0.5),
    acquire: float = 20000.0,
    trace_dt: float = 1.0,
    dt: float = 0.01,
    acq_center_ghz: float = 5.0,
    acq_width_ghz: float = 1.0,
    peak_threshold: float = 0.05,
    tls=None,
    line_filter=None,
    rotating_freq=ghz(5.5),
) -> QuenchEmissionResult:
    """Prepare, quench, record, and analyze: the full emission chain.

    Propagates the pulse with per-mode decay, synthesizes the output trace
    over the acquisition window, detects spectral peaks, demodulates each one
    (cutoff: half the minimum adjacent peak spacing), fits the decays, and
    counts photons per mode.  Fits with thin windows or poor residuals are
    flagged ``low-signal`` and fall back to numeric envelope energies.
    """
    mode_kappas = np.asarray(mode_kappas, dtype=float)
    n_modes = lattice.n_modes

    def stage(name, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except Exception as exc:  # noqa: BLE001 - relabeled and re-raised
            raise StageError(name, exc) from exc

    initial = ExcitationState.emitter_excited(
        n_modes, amplitude=prep_amplitude, tls=tls is not None
    )
    prop = stage(
        "propagate", propagate, lattice, emitter, pulse,
        initial=initial, dt=dt, tls=tls, line_filter=line_filter,
        mode_kappas=mode_kappas, sample_dt=trace_dt, post_time=acquire,
        rotating_freq=rotating_freq,
    )
    trace = stage(
        "synthesize", synthesize_output_field, prop, mode_kappas, port_weights,
        acq_center_ghz=acq_center_ghz, acq_width_ghz=acq_width_ghz,
        trace_dt=trace_dt,
    )
    freqs, mags, peaks = stage("fft", emission_fft, trace, peak_threshold)

    peak_freqs = [p[0] for p in peaks]
    cutoff = None
    if len(peak_freqs) > 1:
        cutoff = min(np.diff(sorted(peak_freqs))) / 2.0

    mode_freqs_ghz = (
        as_ghz(np.asarray(lattice.mode_freqs))
        if lattice.form == "effective" else None
    )
    modes = []
    photons_by_mode = np.zeros(n_modes)
    for pf in peak_freqs:
        me = stage("demodulate", demodulate_mode, trace, pf, cutoff, peak_freqs)
        if mode_freqs_ghz is not None:
            me.mode_index = int(np.argmin(np.abs(mode_freqs_ghz - pf))) + 1
        try:
            tau, amp, resid = fit_exponential_decay(me.envelope, me.times,
                                                    skip=me.transient_ns)
            me.tau_fit, me.fit_amplitude, me.fit_residual = tau, amp, resid
            me.kappa = 2.0 / tau
            me.kappa_fft_convention = TWO_PI / tau
            if resid > 0.05:
                me.quality = "low-signal"
        except FitDomainError:
            me.quality = "no-fit"
        if me.tau_fit is not None and me.quality == "ok":
            me.photons = stage("count", photon_count, me.envelope, me.times,
                               tau=me.tau_fit, amplitude=me.fit_amplitude)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TruncationWarning)
                me.photons = stage("count", photon_count, me.envelope, me.times)
        me.coherent_integral_sq = coherent_photon_count(me.envelope, me.times)
        if me.mode_index is not None:
            photons_by_mode[me.mode_index - 1] += me.photons
        modes.append(me)

    q_state = prop.quench_state.amplitudes
    n_ph = len(prop.mode_amplitudes[0])
    w_ph = float(np.sum(np.abs(q_state[1 : 1 + n_ph]) ** 2))
    return QuenchEmissionResult(
        trace=trace,
        spectrum_freqs=freqs,
        spectrum_mags=mags,
        peaks=peaks,
        modes=modes,
        photons_by_mode=photons_by_mode,
        photonic_weight_at_quench=w_ph,
        emitter_population_at_quench=float(np.abs(q_state[0]) ** 2),
        total_photons=float(sum(m.photons for m in modes)),
        propagation=prop,
    )


def modes_to_csv(modes: list[ModeEmission], path):
    """ModeEmission table: mode, freq_GHz, tau_ns, kappa_MHz, photons, extras."""
    rows = []
    for m in modes:
        kappa_mhz = as_ghz(m.kappa) * 1e3 if m.kappa else float("nan")
        kappa_fft_mhz = (
            as_ghz(m.kappa_fft_convention) * 1e3 if m.kappa_fft_convention
            else float("nan")
        )
        rows.append((
            m.mode_index if m.mode_index is not None else -1,
            m.peak_freq,
            m.tau_fit if m.tau_fit is not None else float("nan"),
            kappa_mhz,
            m.photons if m.photons is not None else float("nan"),
            kappa_fft_mhz,
            m.fit_residual if m.fit_residual is not None else float("nan"),
            m.quality,
        ))
    with open(path, "w") as fh:
        fh.write("mode,freq_GHz,tau_ns,kappa_MHz,photons,"
                 "kappa_2pi_over_tau_MHz,fit_residual,quality\n")
        for r in rows:
            fh.write(",".join(
                f"{x:.12g}" if isinstance(x, (int, float)) else str(x) for x in r
            ) + "\n")
