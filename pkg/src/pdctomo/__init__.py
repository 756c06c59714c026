"""Simulation and reconstruction of seeded, phase-sensitive JSA tomography."""

from .errors import (
    DegenerateGrid,
    GridMismatch,
    NoStationaryRegion,
    OffGridSeed,
    ParseError,
    PdcTomoError,
    SaturationWarning,
    SchemaError,
    StripeOutsideSupport,
    TraceTooShort,
    UnknownKey,
    UnreachableLobeWarning,
    ValidationError,
    ZeroAmplitude,
)
from .instrument import (
    BurstTrace,
    DazzlerModel,
    DetectorModel,
    ScanDataset,
    SeedPair,
    phase_increment,
    seeded_delta_intensity,
    simulate_burst,
    simulate_intensity_only_scan,
    simulate_scan,
)
from .jsa import (
    ComplexJsa,
    PdcModel,
    SpectralGrid,
    build_jsa,
    delta_k,
    jsa_phase_class,
    kappa_for_null,
    phasematching,
    pump_envelope,
    sigma_p_from_fwhm,
)
from .tomography import (
    ContrastMap,
    PhaseMap,
    ReconstructionResult,
    assemble_complex_jsa,
    build_contrast_map,
    extract_contrast,
    find_stationary_stripes,
    reconstruct,
    retrieve_phase_along_stripe,
    score,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateGrid",
    "GridMismatch",
    "NoStationaryRegion",
    "OffGridSeed",
    "ParseError",
    "PdcTomoError",
    "SaturationWarning",
    "SchemaError",
    "StripeOutsideSupport",
    "TraceTooShort",
    "UnknownKey",
    "UnreachableLobeWarning",
    "ValidationError",
    "ZeroAmplitude",
    "BurstTrace",
    "DazzlerModel",
    "DetectorModel",
    "ScanDataset",
    "SeedPair",
    "phase_increment",
    "seeded_delta_intensity",
    "simulate_burst",
    "simulate_intensity_only_scan",
    "simulate_scan",
    "ComplexJsa",
    "PdcModel",
    "SpectralGrid",
    "build_jsa",
    "delta_k",
    "jsa_phase_class",
    "kappa_for_null",
    "phasematching",
    "pump_envelope",
    "sigma_p_from_fwhm",
    "ContrastMap",
    "PhaseMap",
    "ReconstructionResult",
    "assemble_complex_jsa",
    "build_contrast_map",
    "extract_contrast",
    "find_stationary_stripes",
    "reconstruct",
    "retrieve_phase_along_stripe",
    "score",
]
