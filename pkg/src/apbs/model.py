"""Single-excitation models of a tunable emitter coupled to a resonator lattice.

Two model forms share one Hamiltonian layout (emitter first, then photonic
modes/sites, then an optional parasitic two-level defect):

* tight-binding -- identical resonators with nearest- and next-nearest-neighbor
  hopping, the emitter attached to one site;
* effective -- individually specified mode frequencies and per-mode couplings,
  which absorbs fabrication disorder that the ideal chain cannot.

All frequencies are angular (rad/ns), see :mod:`apbs.units`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguityError, InvalidSpecError, ModelFormError, NumericError
from .units import as_ghz

DEGENERACY_WARN = 2.0 * np.pi * 1e-6  # 1 kHz in rad/ns


@dataclass(frozen=True)
class LatticeSpec:
    """Photonic environment: a resonator chain or a list of dressed modes.

    Exactly one of ``omega_r`` (tight-binding) or ``mode_freqs`` (effective)
    must be given.  ``kappa_in``/``kappa_out`` are port decay rates attached
    to sites 1 and ``n_sites`` of the chain; ``mode_kappas`` are per-mode
    external decay rates of the effective model.
    """

    n_sites: int = 0
    omega_r: float | None = None
    j_nn: float = 0.0
    j_nnn: float = 0.0
    mode_freqs: tuple[float, ...] | None = None
    mode_kappas: tuple[float, ...] | None = None
    kappa_in: float = 0.0
    kappa_out: float = 0.0

    def __post_init__(self):
        tb = self.omega_r is not None
        eff = self.mode_freqs is not None
        if tb == eff:
            raise InvalidSpecError(
                "exactly one of omega_r (tight-binding) or mode_freqs "
                "(effective) must be set"
            )
        if tb:
            if self.n_sites < 1:
                raise InvalidSpecError("n_sites must be >= 1")
            if self.omega_r <= 0:
                raise InvalidSpecError("omega_r must be positive")
        else:
            freqs = tuple(float(f) for f in self.mode_freqs)
            object.__setattr__(self, "mode_freqs", freqs)
            if len(freqs) < 1:
                raise InvalidSpecError("mode_freqs must be non-empty")
            if self.n_sites == 0:
                object.__setattr__(self, "n_sites", len(freqs))
            if any(f <= 0 for f in freqs):
                raise InvalidSpecError("mode frequencies must be positive")
            gaps = np.diff(freqs)
            if np.any(gaps <= 0):
                raise InvalidSpecError("mode_freqs must be strictly increasing")
            if np.any(gaps < DEGENERACY_WARN):
                warnings.warn(
                    "mode frequencies closer than 1 kHz; diagonalization "
                    "handles the near-degeneracy but branch labels may swap",
                    stacklevel=2,
                )
            if self.mode_kappas is not None:
                kap = tuple(float(k) for k in self.mode_kappas)
                object.__setattr__(self, "mode_kappas", kap)
                if len(kap) != len(freqs):
                    raise InvalidSpecError("mode_kappas length must match mode_freqs")
                if any(k < 0 for k in kap):
                    raise InvalidSpecError("decay rates must be >= 0")
        if self.kappa_in < 0 or self.kappa_out < 0:
            raise InvalidSpecError("port decay rates must be >= 0")

    @property
    def form(self) -> str:
        return "tight_binding" if self.omega_r is not None else "effective"

    @property
    def n_modes(self) -> int:
        return self.n_sites if self.form == "tight_binding" else len(self.mode_freqs)


@dataclass(frozen=True)
class EmitterSpec:
    """Flux-tunable two-level emitter.

    ``omega_max``/``omega_min`` are the two sweet-spot frequencies and ``e_c``
    the charging energy (|anharmonicity|); together they fix the flux map.
    Coupling is either to one chain site (``coupling_site``, ``g_site``) or
    per mode (``g_modes``).
    """

    omega_max: float
    omega_min: float
    e_c: float
    coupling_site: int | None = None
    g_site: float | None = None
    g_modes: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.omega_min < self.omega_max:
            raise InvalidSpecError("omega_min must be below omega_max")
        if self.e_c <= 0:
            raise InvalidSpecError("e_c must be positive")
        if self.g_site is not None and self.g_site < 0:
            raise InvalidSpecError("g_site must be >= 0")
        if self.g_modes is not None:
            g = tuple(float(x) for x in self.g_modes)
            object.__setattr__(self, "g_modes", g)
            if any(x < 0 for x in g):
                raise InvalidSpecError("g_modes must be >= 0")


@dataclass(frozen=True)
class TlsSpec:
    """Parasitic coherent two-level defect coupled to the emitter."""

    freq: float
    g_tls: float

    def __post_init__(self):
        if self.g_tls < 0:
            raise InvalidSpecError("g_tls must be >= 0")
        if self.freq <= 0:
            raise InvalidSpecError("TLS frequency must be positive")


@dataclass(frozen=True)
class SingleExcitationHamiltonian:
    """Dense Hamiltonian on the basis {E, m1..mN(, T)}, angular units."""

    dim: int
    matrix: np.ndarray
    basis_labels: tuple[str, ...]

    def hermiticity_defect(self) -> float:
        h = self.matrix
        scale = max(np.linalg.norm(h), 1.0)
        return float(np.linalg.norm(h - h.conj().T) / scale)


@dataclass(frozen=True)
class ApbsDecomposition:
    """Bound-state content: emitter amplitude, photonic amplitudes, weight."""

    energy: float
    c_e: complex
    c_modes: np.ndarray
    photonic_weight: float
    localization_length: float | None = None


def _check_lengths(lattice: LatticeSpec, emitter: EmitterSpec):
    if emitter.g_modes is not None and lattice.mode_freqs is not None:
        if len(emitter.g_modes) != len(lattice.mode_freqs):
            raise InvalidSpecError(
                f"g_modes length {len(emitter.g_modes)} does not match "
                f"{len(lattice.mode_freqs)} mode frequencies"
            )


def build_tight_binding(
    lattice: LatticeSpec,
    emitter: EmitterSpec,
    omega_q: float,
    tls: TlsSpec | None = None,
) -> SingleExcitationHamiltonian:
    """Chain Hamiltonian: sites on the diagonal, J / J_nn hoppings, emitter
    attached to ``emitter.coupling_site``."""
    if lattice.form != "tight_binding":
        raise ModelFormError("lattice has no omega_r; build_effective instead")
    if omega_q <= 0:
        raise InvalidSpecError("omega_q must be positive")
    if emitter.coupling_site is None or not 1 <= emitter.coupling_site <= lattice.n_sites:
        raise InvalidSpecError(
            f"coupling_site {emitter.coupling_site} outside [1, {lattice.n_sites}]"
        )
    g = emitter.g_site or 0.0
    n = lattice.n_sites
    dim = n + 1 + (1 if tls is not None else 0)
    h = np.zeros((dim, dim), dtype=complex)
    h[0, 0] = omega_q
    for i in range(1, n + 1):
        h[i, i] = lattice.omega_r
    for i in range(1, n):
        h[i, i + 1] = h[i + 1, i] = lattice.j_nn
    for i in range(1, n - 1):
        h[i, i + 2] = h[i + 2, i] = lattice.j_nnn
    site = emitter.coupling_site
    h[0, site] = h[site, 0] = g
    labels = ("E",) + tuple(f"m{i}" for i in range(1, n + 1))
    if tls is not None:
        h[dim - 1, dim - 1] = tls.freq
        h[0, dim - 1] = h[dim - 1, 0] = tls.g_tls
        labels = labels + ("T",)
    return SingleExcitationHamiltonian(dim=dim, matrix=h, basis_labels=labels)


def build_effective(
    lattice: LatticeSpec,
    emitter: EmitterSpec,
    omega_q: float,
    tls: TlsSpec | None = None,
) -> SingleExcitationHamiltonian:
    """Star Hamiltonian: emitter coupled to each dressed mode, modes mutually
    uncoupled."""
    if lattice.form != "effective":
        raise ModelFormError("lattice has no mode_freqs; build_tight_binding instead")
    if emitter.g_modes is None:
        raise InvalidSpecError("effective model requires emitter.g_modes")
    _check_lengths(lattice, emitter)
    if omega_q <= 0:
        raise InvalidSpecError("omega_q must be positive")
    n = len(lattice.mode_freqs)
    dim = n + 1 + (1 if tls is not None else 0)
    h = np.zeros((dim, dim), dtype=complex)
    h[0, 0] = omega_q
    for i, (w, g) in enumerate(zip(lattice.mode_freqs, emitter.g_modes), start=1):
        h[i, i] = w
        h[0, i] = h[i, 0] = g
    labels = ("E",) + tuple(f"m{i}" for i in range(1, n + 1))
    if tls is not None:
        h[dim - 1, dim - 1] = tls.freq
        h[0, dim - 1] = h[dim - 1, 0] = tls.g_tls
        labels = labels + ("T",)
    return SingleExcitationHamiltonian(dim=dim, matrix=h, basis_labels=labels)


def build_hamiltonian(lattice, emitter, omega_q, tls=None) -> SingleExcitationHamiltonian:
    """Dispatch on the lattice form."""
    if lattice.form == "tight_binding":
        return build_tight_binding(lattice, emitter, omega_q, tls)
    return build_effective(lattice, emitter, omega_q, tls)


def diagonalize(h: SingleExcitationHamiltonian):
    """Eigenvalues (ascending) and eigenvector columns.

    Hermitian input uses a symmetric solver and returns an orthonormal basis.
    Non-Hermitian input (decay on the diagonal) falls back to a general
    solver, sorting by the real part.
    """
    m = h.matrix if isinstance(h, SingleExcitationHamiltonian) else np.asarray(h)
    if not np.all(np.isfinite(m)):
        raise NumericError("Hamiltonian contains non-finite entries")
    if np.allclose(m, m.conj().T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
        vals, vecs = np.linalg.eigh(m)
        return vals, vecs
    vals, vecs = np.linalg.eig(m)
    order = np.argsort(vals.real)
    return vals[order], vecs[:, order]


def _fit_localization(amps: np.ndarray, coupling_site: int) -> float | None:
    """1/e length (in sites) of |c_site| toward the output end, fitted on
    log-amplitudes; the coupling site itself is excluded."""
    n = len(amps)
    sites = np.arange(coupling_site + 1, n + 1)
    if len(sites) < 2:
        return None
    mag = np.abs(amps[sites - 1])
    good = mag > 1e-14
    if good.sum() < 2:
        return None
    dist = (sites - coupling_site)[good]
    slope = np.polyfit(dist, np.log(mag[good]), 1)[0]
    if slope >= 0:
        return None
    return float(-1.0 / slope)


def extract_apbs(
    h: SingleExcitationHamiltonian,
    coupling_site: int | None = None,
    tie_tol: float = 1e-9,
) -> ApbsDecomposition:
    """Pick the eigenvector with the largest emitter weight.

    Ties (within ``tie_tol``) break toward the lowest energy; a residual
    energy degeneracy raises :class:`AmbiguityError`.  When the emitter sits
    inside the band this returns the most emitter-like dressed state.
    ``coupling_site`` enables the site-space localization fit of the
    tight-binding form.
    """
    vals, vecs = diagonalize(h)
    weights = np.abs(vecs[0, :]) ** 2
    best = np.max(weights)
    cands = np.flatnonzero(weights >= best - tie_tol)
    if len(cands) > 1:
        energies = vals[cands].real
        order = np.argsort(energies)
        if abs(energies[order[0]] - energies[order[1]]) < tie_tol:
            raise AmbiguityError(
                "two eigenvectors share the maximal emitter overlap and energy"
            )
        idx = cands[order[0]]
    else:
        idx = cands[0]
    vec = vecs[:, idx]
    # fix global phase so the emitter amplitude is real nonnegative
    phase = np.exp(-1j * np.angle(vec[0])) if abs(vec[0]) > 0 else 1.0
    vec = vec * phase
    n_ph = len(h.basis_labels) - 1 - (1 if h.basis_labels[-1] == "T" else 0)
    c_modes = vec[1 : 1 + n_ph]
    loc = None
    if coupling_site is not None:
        loc = _fit_localization(c_modes, coupling_site)
    return ApbsDecomposition(
        energy=float(vals[idx].real),
        c_e=complex(vec[0]),
        c_modes=c_modes,
        photonic_weight=float(1.0 - weights[idx] - (np.abs(vec[-1]) ** 2 if h.basis_labels[-1] == "T" else 0.0)),
        localization_length=loc,
    )


def apbs_flux_curve(lattice, emitter, flux_grid, tls=None):
    """Bound-state energy and photonic weight along a flux sweep.

    Tracks the branch continuously from the most detuned grid point, so the
    curve follows the emitter-connected state and never enters the band even
    when the bare frequency does.  Returns ``(flux, energy, photonic_weight)``
    arrays aligned with ``flux_grid``.
    """
    from .pulses import FluxMap, flux_to_freq

    flux_grid = np.asarray(flux_grid, dtype=float)
    if np.any((flux_grid < 0) | (flux_grid > 0.5)):
        raise InvalidSpecError("flux grid must lie in [0, 0.5]")
    fmap = FluxMap(emitter.omega_max, emitter.omega_min, emitter.e_c)
    omegas = np.array([flux_to_freq(fmap, p) for p in flux_grid])
    order = np.argsort(omegas)  # start tracking from the lowest bare frequency
    energies = np.empty_like(omegas)
    weights = np.empty_like(omegas)
    prev = None
    for k in order:
        h = build_hamiltonian(lattice, emitter, omegas[k], tls)
        vals, vecs = diagonalize(h)
        if prev is None:
            idx = int(np.argmax(np.abs(vecs[0, :]) ** 2))
        else:
            idx = int(np.argmax(np.abs(prev.conj() @ vecs) ** 2))
        prev = vecs[:, idx]
        energies[k] = vals[idx].real
        weights[k] = 1.0 - np.abs(vecs[0, idx]) ** 2
    return flux_grid, energies, weights


def chain_mode_decomposition(lattice: LatticeSpec):
    """Eigenmodes of the bare photonic chain: frequencies and site vectors."""
    if lattice.form != "tight_binding":
        raise ModelFormError("chain decomposition needs the tight-binding form")
    n = lattice.n_sites
    h = np.full(n, lattice.omega_r) * np.eye(n)
    h += lattice.j_nn * (np.eye(n, k=1) + np.eye(n, k=-1))
    if n > 2:
        h += lattice.j_nnn * (np.eye(n, k=2) + np.eye(n, k=-2))
    vals, vecs = np.linalg.eigh(h)
    return vals, vecs


def port_mode_kappas(lattice: LatticeSpec):
    """Per-mode decay rates induced by the chain ports.

    A port with rate kappa at a chain end leaks chain mode ``n`` at
    ``kappa * |phi_n(end)|^2``; for the ideal chain this is the
    ``sin^2(n pi / (N+1))`` scaling.  Returns ``(kappa_total, weight_out)``
    where ``weight_out`` is the monitored-port (output) fraction of each rate.
    """
    vals, vecs = chain_mode_decomposition(lattice)
    k_in = lattice.kappa_in * np.abs(vecs[0, :]) ** 2
    k_out = lattice.kappa_out * np.abs(vecs[-1, :]) ** 2
    total = k_in + k_out
    with np.errstate(invalid="ignore", divide="ignore"):
        w_out = np.where(total > 0, k_out / np.maximum(total, 1e-300), 0.0)
    return total, w_out


def tb_effective_model(lattice: LatticeSpec, emitter: EmitterSpec, n_modes=None):
    """Rotate the tight-binding model into its photonic eigenbasis.

    Produces an effective-form ``(lattice, emitter)`` pair whose mode
    frequencies, per-mode couplings, and port-induced decay rates follow from
    the chain; ``n_modes`` keeps only the lowest modes (band truncation).
    Mode-phase gauge is fixed so every coupling is nonnegative.
    """
    vals, vecs = chain_mode_decomposition(lattice)
    kaps, w_out = port_mode_kappas(lattice)
    if n_modes is not None:
        vals, vecs, kaps, w_out = vals[:n_modes], vecs[:, :n_modes], kaps[:n_modes], w_out[:n_modes]
    site = emitter.coupling_site
    if site is None or not 1 <= site <= lattice.n_sites:
        raise InvalidSpecError("tight-binding emitter needs a valid coupling_site")
    g = (emitter.g_site or 0.0) * np.abs(vecs[site - 1, :])
    lat = LatticeSpec(mode_freqs=tuple(vals), mode_kappas=tuple(kaps))
    emt = EmitterSpec(
        omega_max=emitter.omega_max,
        omega_min=emitter.omega_min,
        e_c=emitter.e_c,
        g_modes=tuple(g),
    )
    return lat, emt, w_out
