"""Atom-photon bound-state simulator: tunable emitter on a resonator lattice,
single-excitation dynamics under flux pulses, emission analysis, calibration.
"""

from .calibration import (
    FitResult,
    LzEstimate,
    SpectroscopyDataset,
    fit_effective_model,
    lz_estimate,
    synthesize_spectroscopy,
)
from .emission import (
    EmissionTrace,
    ModeEmission,
    QuenchEmissionResult,
    coherent_photon_count,
    demodulate_mode,
    emission_fft,
    fit_exponential_decay,
    photon_count,
    quench_emission_scenario,
    synthesize_output_field,
)
from .model import (
    ApbsDecomposition,
    EmitterSpec,
    LatticeSpec,
    SingleExcitationHamiltonian,
    TlsSpec,
    apbs_flux_curve,
    build_effective,
    build_hamiltonian,
    build_tight_binding,
    chain_mode_decomposition,
    diagonalize,
    extract_apbs,
    port_mode_kappas,
    tb_effective_model,
)
from .modelfile import ModelBundle, validate_model
from .propagate import (
    ExcitationState,
    PropagationResult,
    hold_time_sweep,
    population_fft,
    propagate,
    propagate_frequency_trajectory,
)
from .pulses import (
    FluxMap,
    LineFilter,
    TrapezoidPulse,
    apply_line_filter,
    flux_to_freq,
    freq_to_flux,
    sample_pulse,
)
from .units import as_ghz, as_mhz, ghz, mhz

__version__ = "0.1.0"
