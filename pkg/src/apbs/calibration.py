"""Spectroscopy synthesis and inverse model calibration.

Forward direction: sweep the flux, diagonalize, and classify eigenbranches
into the bound-state curve (maximal emitter overlap) and mode curves
(continuity-tracked by eigenvector overlap between flux points).  Inverse
direction: least-squares fit of mode frequencies and couplings to such
curves.  Also houses the single-crossing sweep-speed estimator
p = exp(-2*pi*gamma) with gamma = g^2 dt / dE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares, linear_sum_assignment

from .errors import BranchTrackingError, InvalidSpecError, NonConvergenceError
from .model import EmitterSpec, LatticeSpec, build_hamiltonian
from .pulses import FluxMap, flux_to_freq
from .units import TWO_PI, as_mhz, mhz


@dataclass
class SpectroscopyDataset:
    """Branch frequencies vs flux: one bound-state curve plus N mode curves.

    All frequencies angular (rad/ns); ``mode_curves`` has shape
    ``(n_modes, n_flux)``.
    """

    flux_grid: np.ndarray
    mode_curves: np.ndarray
    apbs_curve: np.ndarray
    linewidths: np.ndarray | None = None

    def __post_init__(self):
        self.flux_grid = np.asarray(self.flux_grid, dtype=float)
        self.mode_curves = np.asarray(self.mode_curves, dtype=float)
        self.apbs_curve = np.asarray(self.apbs_curve, dtype=float)
        if self.mode_curves.shape[1] != len(self.flux_grid):
            raise InvalidSpecError("mode_curves misaligned with flux grid")
        if len(self.apbs_curve) != len(self.flux_grid):
            raise InvalidSpecError("apbs_curve misaligned with flux grid")
        if not (np.all(np.isfinite(self.mode_curves))
                and np.all(np.isfinite(self.apbs_curve))):
            raise InvalidSpecError("spectroscopy frequencies must be finite")

    @property
    def n_modes(self) -> int:
        return self.mode_curves.shape[0]

    def to_csv(self, path):
        """Rows of (flux, branch_id, freq_GHz); branch_id 'apbs' or 'mode_<n>'."""
        with open(path, "w") as fh:
            fh.write("flux,branch_id,freq_GHz\n")
            for j, phi in enumerate(self.flux_grid):
                fh.write(f"{phi:.12g},apbs,{self.apbs_curve[j] / TWO_PI:.12g}\n")
                for n in range(self.n_modes):
                    fh.write(
                        f"{phi:.12g},mode_{n + 1},"
                        f"{self.mode_curves[n, j] / TWO_PI:.12g}\n"
                    )

    @classmethod
    def from_csv(cls, path):
        flux, branch, freq = [], [], []
        with open(path) as fh:
            header = fh.readline()
            if "branch_id" not in header:
                raise InvalidSpecError("not a spectroscopy CSV (missing branch_id)")
            for line in fh:
                if not line.strip():
                    continue
                p, b, f = line.strip().split(",")
                flux.append(float(p))
                branch.append(b)
                freq.append(float(f) * TWO_PI)
        flux = np.asarray(flux)
        grid = np.unique(flux)
        branches = sorted({b for b in branch if b != "apbs"},
                          key=lambda s: int(s.split("_")[1]))
        modes = np.full((len(branches), len(grid)), np.nan)
        apbs = np.full(len(grid), np.nan)
        pos = {g: i for i, g in enumerate(grid)}
        for p, b, f in zip(flux, branch, freq):
            if b == "apbs":
                apbs[pos[p]] = f
            else:
                modes[branches.index(b), pos[p]] = f
        return cls(flux_grid=grid, mode_curves=modes, apbs_curve=apbs)


@dataclass(frozen=True)
class FitResult:
    mode_freqs: tuple[float, ...]
    g_modes: tuple[float, ...]
    residual_rms_mhz: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class LzEstimate:
    gamma: float
    p_lz: float
    adiabatic_time: float


def _star_hamiltonian(freqs, gs, omega_q):
    """Effective-model matrix without spec validation (fit trial points may
    be momentarily unordered)."""
    n = len(freqs)
    h = np.zeros((n + 1, n + 1))
    h[0, 0] = omega_q
    h[np.arange(1, n + 1), np.arange(1, n + 1)] = freqs
    h[0, 1:] = gs
    h[1:, 0] = gs
    return h


def _classify(ham_fn, n_modes, omegas):
    """Eigenvalues along an (ascending-detuning) frequency walk, split into
    the max-emitter-overlap branch and overlap-tracked mode branches."""
    apbs = np.empty(len(omegas))
    modes = np.empty((n_modes, len(omegas)))
    prev = None
    for j, wq in enumerate(omegas):
        vals, vecs = np.linalg.eigh(ham_fn(wq))
        apbs[j] = vals[np.argmax(np.abs(vecs[0, :]) ** 2)]
        if prev is None:
            overlap = np.abs(vecs[1 : 1 + n_modes, :]) ** 2  # bare-mode character
        else:
            overlap = np.abs(prev.conj() @ vecs) ** 2
        rows, cols = linear_sum_assignment(-overlap)
        cols = cols[np.argsort(rows)]
        worst = overlap[np.arange(n_modes), cols].min()
        if worst < 0.25:  # amplitude overlap < 0.5
            raise BranchTrackingError(
                f"branch tracking lost at walk index {j} "
                f"(overlap^2={worst:.3f})", flux=j,
            )
        modes[:, j] = vals[cols]
        prev = vecs[:, cols].T
    return apbs, modes


def synthesize_spectroscopy(lattice, emitter, flux_grid, tls=None) -> SpectroscopyDataset:
    """Dressed-branch frequencies over a flux sweep.

    The bound-state branch is the eigenvalue with maximal emitter overlap at
    each point; mode branches are continuity-tracked starting from the most
    detuned grid point so labels stay attached through avoided crossings.
    """
    flux_grid = np.asarray(flux_grid, dtype=float)
    fmap = FluxMap(emitter.omega_max, emitter.omega_min, emitter.e_c)
    omegas = flux_to_freq(fmap, flux_grid)
    order = np.argsort(omegas)  # track from the far-detuned side

    def ham_fn(wq):
        return build_hamiltonian(lattice, emitter, wq, tls).matrix.real

    apbs_s, modes_s = _classify(ham_fn, lattice.n_modes, omegas[order])
    apbs = np.empty_like(apbs_s)
    modes = np.empty_like(modes_s)
    apbs[order] = apbs_s
    modes[:, order] = modes_s
    lw = None
    if lattice.form == "effective" and lattice.mode_kappas is not None:
        lw = np.asarray(lattice.mode_kappas, dtype=float)
    return SpectroscopyDataset(flux_grid=flux_grid, mode_curves=modes,
                               apbs_curve=apbs, linewidths=lw)


def fit_effective_model(
    data: SpectroscopyDataset,
    emitter_guess: EmitterSpec,
    lattice_guess: LatticeSpec | None = None,
    *,
    apbs_weight: float = 3.0,
    g_bounds=(0.0, mhz(50.0)),
    freq_window: float = mhz(10.0),
    max_nfev: int = 20000,
) -> FitResult:
    """Least-squares calibration of {mode_freqs, g_modes} against curves.

    Residuals stack every mode curve with the bound-state curve weighted
    ``apbs_weight``-fold (it constrains all couplings jointly).  Mode
    frequencies are bounded to ``freq_window`` around the measured far-detuned
    peaks, couplings to ``g_bounds``; initial values come from the guesses,
    clipped into bounds.  Deterministic for fixed inputs; hitting the
    evaluation budget raises :class:`NonConvergenceError` with the best fit
    attached.
    """
    n = data.n_modes
    if emitter_guess.g_modes is None or len(emitter_guess.g_modes) != n:
        raise InvalidSpecError("emitter guess needs g_modes matching the data")
    far = int(np.argmin(data.apbs_curve))  # most detuned grid point
    ref_freqs = data.mode_curves[:, far]
    w0 = (np.asarray(lattice_guess.mode_freqs, dtype=float)
          if lattice_guess is not None else ref_freqs.copy())
    g0 = np.asarray(emitter_guess.g_modes, dtype=float)
    lo = np.concatenate([ref_freqs - freq_window, np.full(n, g_bounds[0])])
    hi = np.concatenate([ref_freqs + freq_window, np.full(n, g_bounds[1])])
    x0 = np.clip(np.concatenate([w0, g0]), lo + 1e-12, hi - 1e-12)

    fmap = FluxMap(emitter_guess.omega_max, emitter_guess.omega_min,
                   emitter_guess.e_c)
    omegas = flux_to_freq(fmap, data.flux_grid)
    order = np.argsort(omegas)
    walk = omegas[order]
    data_modes = data.mode_curves[:, order]
    data_apbs = data.apbs_curve[order]

    def residual(x):
        apbs, modes = _classify(
            lambda wq: _star_hamiltonian(x[:n], x[n:], wq), n, walk
        )
        r = np.concatenate([
            (modes - data_modes).ravel(),
            apbs_weight * (apbs - data_apbs),
        ])
        return as_mhz(r)

    res = least_squares(residual, x0, bounds=(lo, hi), max_nfev=max_nfev,
                        xtol=1e-14, ftol=1e-14, gtol=1e-14)
    raw = residual(res.x)
    n_mode_pts = data_modes.size
    unweighted = np.concatenate([raw[:n_mode_pts],
                                 raw[n_mode_pts:] / apbs_weight])
    idx = np.argsort(res.x[:n])
    fit = FitResult(
        mode_freqs=tuple(res.x[:n][idx]),
        g_modes=tuple(res.x[n:][idx]),
        residual_rms_mhz=float(np.sqrt(np.mean(unweighted**2))),
        iterations=int(res.nfev),
        converged=bool(res.status > 0),
    )
    if res.status <= 0:
        raise NonConvergenceError(
            f"fit stopped after {res.nfev} evaluations", best=fit
        )
    return fit


def lz_estimate(g: float, delta_e: float, delta_t: float,
                threshold: float = 0.05) -> LzEstimate:
    """Sweep-speed estimate for one crossing: gamma = g^2 dt / dE.

    ``p_lz`` is the probability of jumping the avoided crossing (staying on
    the bare level); ``adiabatic_time`` is the ramp duration at which it
    drops to ``threshold``.  Angular units and ns throughout.
    """
    if delta_e <= 0 or delta_t <= 0:
        raise InvalidSpecError("delta_e and delta_t must be positive")
    gamma = g**2 * delta_t / delta_e
    p = float(np.exp(-TWO_PI * gamma))
    t_ad = float(-np.log(threshold) * delta_e / (TWO_PI * g**2)) if g > 0 else np.inf
    return LzEstimate(gamma=float(gamma), p_lz=p, adiabatic_time=t_ad)
