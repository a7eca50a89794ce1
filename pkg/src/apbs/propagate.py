"""Time-dependent single-excitation propagation along flux pulses.

The state advances by per-step matrix exponentials of the Hamiltonian frozen
at each step's midpoint flux (exactly unitary per step in the decay-free
case); per-mode decay enters as a non-Hermitian diagonal handled by symmetric
splitting.  Constant-flux stretches (hold, post-quench acquisition) are
evolved in closed form from one eigendecomposition.

Everything runs in a frame rotating at ``rotating_freq`` (an identity shift,
so populations are frame-invariant); stored mode amplitudes are in that frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DivergenceError, InvalidSpecError, SamplingError
from .model import LatticeSpec, EmitterSpec, TlsSpec, build_hamiltonian
from .pulses import FluxMap, LineFilter, TrapezoidPulse, apply_line_filter, flux_to_freq
from .units import ghz

_CHUNK = 4096  # steps per batched eigendecomposition


@dataclass
class ExcitationState:
    """Complex amplitudes over {E, m1..mN(, T)} at one time.

    The squared norm is the excitation probability; it may be below 1 (e.g.
    after a pi/2 preparation) and is conserved exactly when no decay acts.
    """

    amplitudes: np.ndarray
    t: float = 0.0
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        norm = np.linalg.norm(self.amplitudes)
        if norm > 1.0 + 1e-9:
            raise InvalidSpecError(f"state norm {norm} exceeds 1")

    @classmethod
    def emitter_excited(cls, n_modes: int, amplitude=1.0, tls=False):
        dim = n_modes + 1 + (1 if tls else 0)
        amps = np.zeros(dim, dtype=complex)
        amps[0] = amplitude
        return cls(amplitudes=amps)

    @property
    def emitter_population(self) -> float:
        return float(np.abs(self.amplitudes[0]) ** 2)


@dataclass(frozen=True)
class Ringdown:
    """Closed-form free decay after the last flux point: eigen-expansion of
    the (possibly non-Hermitian) Hamiltonian at the final flux."""

    t0: float
    eigvals: np.ndarray
    eigvecs: np.ndarray
    coeffs: np.ndarray
    rotating_freq: float
    mode_rows: np.ndarray


@dataclass
class PropagationResult:
    times: np.ndarray
    emitter_population: np.ndarray
    mode_amplitudes: np.ndarray
    final_state: ExcitationState
    norms: np.ndarray
    basis_labels: tuple[str, ...]
    rotating_freq: float
    mode_kappas: np.ndarray | None = None
    quench_time: float | None = None
    quench_state: ExcitationState | None = None
    ringdown: Ringdown | None = None

    def to_csv(self, path):
        """Columns: t_ns, p1, then re/im pairs per photonic mode."""
        n_modes = self.mode_amplitudes.shape[1]
        cols = [self.times, self.emitter_population]
        for m in range(n_modes):
            cols.append(self.mode_amplitudes[:, m].real)
            cols.append(self.mode_amplitudes[:, m].imag)
        header = "t_ns,p1," + ",".join(
            f"re_m{m + 1},im_m{m + 1}" for m in range(n_modes)
        )
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header,
                   comments="", fmt="%.12g")


class _System:
    """Static Hamiltonian template; only the emitter diagonal varies."""

    def __init__(self, lattice, emitter, tls=None, rotating_freq=0.0,
                 mode_kappas=None):
        h = build_hamiltonian(lattice, emitter, omega_q=1.0, tls=tls)
        static = h.matrix.copy()
        static[0, 0] = 0.0
        static -= rotating_freq * np.eye(h.dim)
        self.static = static
        self.labels = h.basis_labels
        self.dim = h.dim
        self.rotating_freq = rotating_freq
        self.n_modes = lattice.n_modes
        self.mode_rows = np.arange(1, 1 + self.n_modes)
        self.kappa = None
        if mode_kappas is not None:
            mode_kappas = np.asarray(mode_kappas, dtype=float)
            if len(mode_kappas) != self.n_modes:
                raise InvalidSpecError(
                    f"mode_kappas length {len(mode_kappas)} != {self.n_modes} modes"
                )
            if np.any(mode_kappas < 0):
                raise InvalidSpecError("decay rates must be >= 0")
            if np.any(mode_kappas > 0):
                kap = np.zeros(self.dim)
                kap[self.mode_rows] = mode_kappas
                self.kappa = kap

    def hamiltonian(self, omega_q: float) -> np.ndarray:
        h = self.static.copy()
        h[0, 0] += omega_q
        return h

    def effective(self, omega_q: float) -> np.ndarray:
        h = self.hamiltonian(omega_q)
        if self.kappa is not None:
            h = h - 0.5j * np.diag(self.kappa)
        return h


def _step_segment(sys: _System, omegas_mid, dt, psi, *, stride=0, matrix=False,
                  step_offset=0):
    """Advance ``psi`` through len(omegas_mid) midpoint-exponential steps.

    Returns (psi, sampled_states, sampled_step_indices).  ``stride`` > 0
    collects every stride-th post-step state (segment end always included);
    ``matrix=True`` propagates a matrix instead of a vector.
    """
    n = len(omegas_mid)
    samples, sample_idx = [], []
    decay_half = None
    if sys.kappa is not None:
        decay_half = np.exp(-0.25 * sys.kappa * dt)
    for base in range(0, n, _CHUNK):
        om = omegas_mid[base : base + _CHUNK]
        hb = np.broadcast_to(sys.static, (len(om),) + sys.static.shape).copy()
        hb[:, 0, 0] += om
        w, v = np.linalg.eigh(hb)
        u = (v * np.exp(-1j * w * dt)[:, None, :]) @ v.conj().transpose(0, 2, 1)
        if decay_half is not None:
            u *= decay_half[None, None, :]
            u *= decay_half[None, :, None]
        for k in range(len(om)):
            psi = u[k] @ psi
            step = base + k + 1
            if stride and (step % stride == 0 or step == n) and not matrix:
                samples.append(psi.copy())
                sample_idx.append(step_offset + step)
        if not np.all(np.isfinite(psi)):
            raise DivergenceError(
                "non-finite amplitudes", step=step_offset + base + len(om)
            )
    return psi, samples, sample_idx


def _constant_eig(sys: _System, omega_q):
    """Eigendecomposition of the (effective) Hamiltonian at fixed flux."""
    if sys.kappa is None:
        w, v = np.linalg.eigh(sys.hamiltonian(omega_q))
        return w.astype(complex), v, v.conj().T
    w, v = scipy.linalg.eig(sys.effective(omega_q))
    return w, v, np.linalg.inv(v)


def _evolve_constant(sys, omega_q, psi0, ts_rel):
    """Closed-form evolution at fixed flux, sampled at relative times."""
    w, v, vinv = _constant_eig(sys, omega_q)
    c = vinv @ psi0
    phases = np.exp(-1j * np.outer(w, ts_rel))
    psis = v @ (c[:, None] * phases)
    return psis, (w, v, c)


def _uniform_steps(duration, dt):
    n = max(1, int(round(duration / dt)))
    if not np.isclose(n * dt, duration, rtol=0, atol=1e-9):
        n = max(1, int(np.ceil(duration / dt - 1e-12)))
    return n, duration / n


class _Recorder:
    def __init__(self, sys):
        self.sys = sys
        self.times = []
        self.states = []

    def add(self, t, psi):
        self.times.append(float(t))
        self.states.append(np.asarray(psi))

    def result(self, final_t, final_psi, **extra):
        sys = self.sys
        times = np.asarray(self.times)
        states = np.asarray(self.states)
        return PropagationResult(
            times=times,
            emitter_population=np.abs(states[:, 0]) ** 2,
            mode_amplitudes=states[:, sys.mode_rows],
            final_state=ExcitationState(final_psi, t=final_t, labels=sys.labels),
            norms=np.linalg.norm(states, axis=1),
            basis_labels=sys.labels,
            rotating_freq=sys.rotating_freq,
            mode_kappas=None if sys.kappa is None else sys.kappa[sys.mode_rows],
            **extra,
        )


def propagate(
    lattice: LatticeSpec,
    emitter: EmitterSpec,
    pulse: TrapezoidPulse,
    *,
    initial: ExcitationState | None = None,
    dt: float = 0.01,
    tls: TlsSpec | None = None,
    line_filter: LineFilter | None = None,
    mode_kappas=None,
    sample_dt: float | None = None,
    post_time: float = 0.0,
    rotating_freq: float = ghz(5.5),
    flux_map: FluxMap | None = None,
) -> PropagationResult:
    """Integrate the time-dependent Schroedinger equation along a flux pulse.

    The Hamiltonian is rebuilt each step with the emitter frequency at the
    (optionally line-filtered) midpoint flux.  ``post_time`` appends a
    constant-flux stretch after the pulse (the acquisition window of quench
    protocols) whose closed-form ring-down expansion is kept on the result.
    """
    if dt <= 0:
        raise SamplingError("dt must be positive")
    fmap = flux_map or FluxMap(emitter.omega_max, emitter.omega_min, emitter.e_c)
    sys = _System(lattice, emitter, tls=tls, rotating_freq=rotating_freq,
                  mode_kappas=mode_kappas)
    if initial is None:
        initial = ExcitationState.emitter_excited(sys.n_modes, tls=tls is not None)
    psi = np.asarray(initial.amplitudes, dtype=complex).copy()
    if len(psi) != sys.dim:
        raise InvalidSpecError(f"initial state dimension {len(psi)} != {sys.dim}")
    sample_dt = sample_dt if sample_dt is not None else 10 * dt
    rec = _Recorder(sys)
    rec.add(0.0, psi)
    t_now = 0.0

    if line_filter is None:
        for t0, t1, p0, p1 in pulse.segments():
            n, dt_seg = _uniform_steps(t1 - t0, dt)
            stride = max(1, int(round(sample_dt / dt_seg)))
            if p0 == p1:
                k = np.arange(stride, n + 1, stride)
                if len(k) == 0 or k[-1] != n:
                    k = np.append(k, n)
                ts_rel = k * dt_seg
                omega = flux_to_freq(fmap, p0)
                psis, _ = _evolve_constant(sys, omega, psi, ts_rel)
                for j, tr in enumerate(ts_rel):
                    rec.add(t0 + tr, psis[:, j])
                psi = psis[:, -1]
            else:
                mids = t0 + (np.arange(n) + 0.5) * dt_seg
                omegas = flux_to_freq(fmap, pulse.flux_at(mids))
                psi, samples, idx = _step_segment(
                    sys, np.atleast_1d(omegas), dt_seg, psi, stride=stride
                )
                for s, i in zip(samples, idx):
                    rec.add(t0 + i * dt_seg, s)
            t_now = t1
    else:
        total = pulse.duration
        if total > 0:
            n, dt_seg = _uniform_steps(total, dt)
            t_samp = np.arange(n + 1) * dt_seg
            phi = apply_line_filter(t_samp, pulse.flux_at(t_samp), line_filter,
                                    initial=pulse.phi_i)
            mids = 0.5 * (phi[1:] + phi[:-1])
            omegas = flux_to_freq(fmap, mids)
            stride = max(1, int(round(sample_dt / dt_seg)))
            psi, samples, idx = _step_segment(sys, omegas, dt_seg, psi, stride=stride)
            for s, i in zip(samples, idx):
                rec.add(i * dt_seg, s)
            t_now = total
            _filter_state = phi[-1]
        else:
            _filter_state = pulse.phi_i

    extra = {}
    if post_time > 0:
        phi_end = pulse.phi_end
        t_post0 = t_now
        if line_filter is not None:
            # step until the filter has settled onto phi_end, then go exact
            gap = abs(_filter_state - phi_end)
            if gap > 1e-12:
                n_settle = int(np.ceil(-np.log(1e-12 / gap) / (line_filter.cutoff * dt)))
                n_settle = min(n_settle, int(round(post_time / dt)))
                t_samp = np.arange(n_settle + 1) * dt
                phi = apply_line_filter(
                    t_samp, np.full(n_settle + 1, phi_end), line_filter,
                    initial=_filter_state,
                )
                mids = 0.5 * (phi[1:] + phi[:-1])
                stride = max(1, int(round(sample_dt / dt)))
                psi, samples, idx = _step_segment(
                    sys, flux_to_freq(fmap, mids), dt, psi, stride=stride
                )
                for s, i in zip(samples, idx):
                    rec.add(t_post0 + i * dt, s)
                t_post0 += n_settle * dt
        omega_end = flux_to_freq(fmap, phi_end)
        extra["quench_time"] = t_post0
        extra["quench_state"] = ExcitationState(psi.copy(), t=t_post0, labels=sys.labels)
        remain = t_now + post_time - t_post0
        n_s = max(1, int(round(remain / sample_dt)))
        ts_rel = np.linspace(remain / n_s, remain, n_s)
        psis, (w, v, c) = _evolve_constant(sys, omega_end, psi, ts_rel)
        for j, tr in enumerate(ts_rel):
            rec.add(t_post0 + tr, psis[:, j])
        psi = psis[:, -1]
        t_now = t_post0 + remain
        extra["ringdown"] = Ringdown(
            t0=t_post0, eigvals=w, eigvecs=v, coeffs=c,
            rotating_freq=sys.rotating_freq, mode_rows=sys.mode_rows,
        )
    return rec.result(t_now, psi, **extra)


def propagate_frequency_trajectory(
    lattice,
    emitter,
    omega_of_t,
    duration: float,
    *,
    initial: ExcitationState | None = None,
    dt: float = 0.01,
    tls=None,
    mode_kappas=None,
    sample_dt: float | None = None,
    rotating_freq: float = 0.0,
) -> PropagationResult:
    """Propagate with the emitter frequency given directly as a function of
    time (rad/ns), bypassing the flux map.  Used for linear-sweep studies."""
    if dt <= 0 or duration <= 0:
        raise SamplingError("dt and duration must be positive")
    sys = _System(lattice, emitter, tls=tls, rotating_freq=rotating_freq,
                  mode_kappas=mode_kappas)
    if initial is None:
        initial = ExcitationState.emitter_excited(sys.n_modes, tls=tls is not None)
    psi = np.asarray(initial.amplitudes, dtype=complex).copy()
    n, dt_seg = _uniform_steps(duration, dt)
    mids = (np.arange(n) + 0.5) * dt_seg
    omegas = np.asarray(omega_of_t(mids), dtype=float)
    sample_dt = sample_dt if sample_dt is not None else 10 * dt
    stride = max(1, int(round(sample_dt / dt_seg)))
    rec = _Recorder(sys)
    rec.add(0.0, psi)
    psi, samples, idx = _step_segment(sys, omegas, dt_seg, psi, stride=stride)
    for s, i in zip(samples, idx):
        rec.add(i * dt_seg, s)
    return rec.result(n * dt_seg, psi)


def hold_time_sweep(
    lattice,
    emitter,
    pulse_template: TrapezoidPulse,
    hold_grid,
    *,
    dt: float = 0.01,
    tls=None,
    rotating_freq: float = ghz(5.5),
    flux_map: FluxMap | None = None,
):
    """Final emitter population after the full pulse, for each hold time.

    The rise is propagated once, the hold is evolved in closed form (exact
    for any hold value), and the fall is applied as a precomputed propagator,
    so the sweep costs two ramp propagations regardless of grid size.
    """
    hold_grid = np.asarray(hold_grid, dtype=float)
    if np.any(hold_grid < 0):
        raise InvalidSpecError("hold times must be >= 0")
    fmap = flux_map or FluxMap(emitter.omega_max, emitter.omega_min, emitter.e_c)
    sys = _System(lattice, emitter, tls=tls, rotating_freq=rotating_freq)
    psi = ExcitationState.emitter_excited(sys.n_modes, tls=tls is not None).amplitudes

    def ramp_operator(t0, t1, p0, p1):
        n, dt_seg = _uniform_steps(t1 - t0, dt)
        mids_t = (np.arange(n) + 0.5) * dt_seg
        frac = mids_t / (t1 - t0)
        omegas = flux_to_freq(fmap, p0 + frac * (p1 - p0))
        op = np.eye(sys.dim, dtype=complex)
        op, _, _ = _step_segment(sys, omegas, dt_seg, op, matrix=True)
        return op

    if pulse_template.tau_r > 0:
        u_rise = ramp_operator(0.0, pulse_template.tau_r,
                               pulse_template.phi_i, pulse_template.phi_f)
        psi = u_rise @ psi
    w, v, vinv = _constant_eig(sys, flux_to_freq(fmap, pulse_template.phi_f))
    if pulse_template.tau_f > 0:
        u_fall = ramp_operator(0.0, pulse_template.tau_f,
                               pulse_template.phi_f, pulse_template.phi_end)
    else:
        u_fall = np.eye(sys.dim, dtype=complex)
    c = vinv @ psi
    phases = np.exp(-1j * np.outer(w, hold_grid))
    finals = (u_fall @ v) @ (c[:, None] * phases)
    return np.abs(finals[0, :]) ** 2


def population_fft(hold_grid, populations):
    """Mean-subtracted magnitude spectrum of a population trace.

    Returns ``(freqs_MHz, magnitudes)`` from a uniform hold grid of at least
    8 points.
    """
    hold_grid = np.asarray(hold_grid, dtype=float)
    populations = np.asarray(populations, dtype=float)
    if len(hold_grid) < 8:
        raise SamplingError("population FFT needs at least 8 grid points")
    steps = np.diff(hold_grid)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
        raise SamplingError("population FFT needs a uniform hold grid")
    sig = populations - populations.mean()
    mags = np.abs(np.fft.rfft(sig))
    freqs = np.fft.rfftfreq(len(sig), d=steps[0]) * 1e3  # GHz -> MHz
    return freqs, mags
