"""Synthetic seeded-PDC measurement chain.

Two delta-like seeds probe one JSA node per burst. The pulse shaper advances
the seed phase sum by a fixed increment from pulse to pulse, so every burst
records a sampled cosine whose amplitude is proportional to |f| at that node.
The detector chain adds a DC baseline, white Gaussian noise and a uniform
quantiser.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import OffGridSeed, SaturationWarning, ValidationError
from .jsa import ComplexJsa, PdcModel, SpectralGrid

__all__ = [
    "SeedPair",
    "DazzlerModel",
    "DetectorModel",
    "BurstTrace",
    "ScanDataset",
    "wrap_phase",
    "phase_increment",
    "phase_increment_map",
    "seeded_delta_intensity",
    "resolve_dc_offset",
    "simulate_burst",
    "simulate_scan",
    "simulate_intensity_only_scan",
]


@dataclass(frozen=True)
class SeedPair:
    """Signal/idler seed fields.

    Detunings are in rad/ps relative to the grid centre. ``width_nm`` is an
    optional seed FWHM; zero keeps the seeds delta-like.
    """

    omega_alpha: float = 0.0
    omega_beta: float = 0.0
    amp_alpha: float = 1.25
    amp_beta: float = 1.25
    phi_alpha0: float = 0.0
    phi_beta0: float = 0.0
    width_nm: float = 0.0

    def __post_init__(self):
        if not self.amp_alpha > 0:
            raise ValidationError("seeds.amp_alpha", "must be > 0")
        if not self.amp_beta > 0:
            raise ValidationError("seeds.amp_beta", "must be > 0")
        if not self.width_nm >= 0:
            raise ValidationError("seeds.width_nm", "must be >= 0")

    @property
    def phase_sum(self) -> float:
        return self.phi_alpha0 + self.phi_beta0

    def to_dict(self) -> dict:
        return {
            "omega_alpha": self.omega_alpha,
            "omega_beta": self.omega_beta,
            "amp_alpha": self.amp_alpha,
            "amp_beta": self.amp_beta,
            "phi_alpha0": self.phi_alpha0,
            "phi_beta0": self.phi_beta0,
            "width_nm": self.width_nm,
        }


@dataclass(frozen=True)
class DazzlerModel:
    """Per-pulse phase increment, affine in the two seed detunings.

    Default slopes point the gradient along the -35 deg phasematching ridge,
    so the stationary stripes cut across every lobe of the default JSA.
    """

    dphi0: float = math.pi / 5
    dphi_slope_s: float = 0.45 * math.cos(math.radians(35.0))
    dphi_slope_i: float = -0.45 * math.sin(math.radians(35.0))
    pulses_per_burst: int = 100

    def __post_init__(self):
        if int(self.pulses_per_burst) != self.pulses_per_burst or self.pulses_per_burst < 2:
            raise ValidationError("dazzler.pulses_per_burst", "must be an integer >= 2")

    def to_dict(self) -> dict:
        return {
            "dphi0": self.dphi0,
            "dphi_slope_s": self.dphi_slope_s,
            "dphi_slope_i": self.dphi_slope_i,
            "pulses_per_burst": self.pulses_per_burst,
        }


@dataclass(frozen=True)
class DetectorModel:
    """APD + digitizer. ``dc_offset=None`` means the automatic 1x headroom baseline."""

    gaussian_noise_sigma: float = 0.005
    adc_bits: int = 12
    full_scale: float = 1.0
    dc_offset: Optional[float] = None
    rng_seed: int = 0

    def __post_init__(self):
        if int(self.adc_bits) != self.adc_bits or not 1 <= self.adc_bits <= 24:
            raise ValidationError("detector.adc_bits", "must be an integer in [1, 24]")
        if not self.gaussian_noise_sigma >= 0:
            raise ValidationError("detector.gaussian_noise_sigma", "must be >= 0")
        if not self.full_scale > 0:
            raise ValidationError("detector.full_scale", "must be > 0")
        if self.dc_offset is not None and not self.dc_offset >= 0:
            raise ValidationError("detector.dc_offset", "must be >= 0")

    @property
    def max_count(self) -> int:
        return 2**self.adc_bits - 1

    @property
    def counts_per_unit(self) -> float:
        return self.max_count / self.full_scale

    def to_counts(self, intensity):
        return np.asarray(intensity) * self.counts_per_unit

    def to_dict(self) -> dict:
        return {
            "gaussian_noise_sigma": self.gaussian_noise_sigma,
            "adc_bits": self.adc_bits,
            "full_scale": self.full_scale,
            "dc_offset": self.dc_offset,
            "rng_seed": self.rng_seed,
        }


@dataclass(frozen=True)
class BurstTrace:
    samples: np.ndarray
    seed_point: tuple[float, float]
    metadata: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class ScanDataset:
    """One burst per grid node.

    ``traces`` has shape ``(n, n, pulses_per_burst)`` with the signal index
    outermost. ``dc_offset`` is the baseline actually used, in intensity units.
    ``config`` optionally snapshots the run configuration that produced it.
    """

    grid: SpectralGrid
    traces: np.ndarray
    pdc: Optional[PdcModel]
    seeds: SeedPair
    dazzler: DazzlerModel
    detector: DetectorModel
    dc_offset: float
    ground_truth: Optional[ComplexJsa] = None
    config: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        traces = np.asarray(self.traces)
        expected = self.grid.shape + (self.dazzler.pulses_per_burst,)
        if traces.shape != expected:
            raise ValidationError("traces", f"shape {traces.shape} != {expected}")
        traces = traces.astype(np.int32, copy=True)
        traces.flags.writeable = False
        object.__setattr__(self, "traces", traces)

    @property
    def dc_counts(self) -> float:
        return float(self.detector.to_counts(self.dc_offset))

    def trace(self, i: int, j: int) -> BurstTrace:
        return BurstTrace(
            samples=self.traces[i, j],
            seed_point=(float(self.grid.nu_signal[i]), float(self.grid.nu_idler[j])),
            metadata={"dazzler": self.dazzler, "detector": self.detector, "seeds": self.seeds},
        )


def wrap_phase(x):
    """Wrap to the half-open interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2.0 * np.pi)


def phase_increment(seed_point: tuple[float, float], dazzler: DazzlerModel) -> float:
    nu_a, nu_b = seed_point
    raw = dazzler.dphi0 + dazzler.dphi_slope_s * nu_a + dazzler.dphi_slope_i * nu_b
    return float(wrap_phase(raw))


def phase_increment_map(grid: SpectralGrid, dazzler: DazzlerModel) -> np.ndarray:
    nu_s, nu_i = grid.mesh()
    return wrap_phase(dazzler.dphi0 + dazzler.dphi_slope_s * nu_s + dazzler.dphi_slope_i * nu_i)


def seeded_delta_intensity(jsa_value, seeds: SeedPair, total_phase, gain_scale: float):
    """Seeded intensity change 2 B |alpha beta f| cos(phi_alpha + phi_beta + arg f).

    ``total_phase`` is the seed phase sum phi_alpha + phi_beta; the JSA phase
    is taken from ``jsa_value``.
    """
    jsa_value = np.asarray(jsa_value)
    amp = 2.0 * gain_scale * seeds.amp_alpha * seeds.amp_beta * np.abs(jsa_value)
    return amp * np.cos(np.asarray(total_phase) + np.angle(jsa_value))


def resolve_dc_offset(jsa: ComplexJsa, seeds: SeedPair, gain_scale: float, detector: DetectorModel) -> float:
    if detector.dc_offset is not None:
        return float(detector.dc_offset)
    return float(2.0 * gain_scale * seeds.amp_alpha * seeds.amp_beta * np.max(np.abs(jsa.values)))


def _node_noise(rng_seed: int, node_ids: np.ndarray, n_pulses: int) -> np.ndarray:
    # one stream per node: serial and parallel scans agree sample for sample
    out = np.empty((node_ids.size, n_pulses))
    for row, node in enumerate(node_ids):
        out[row] = np.random.default_rng([int(rng_seed), int(node)]).standard_normal(n_pulses)
    return out


def _synthesize(values, increments, node_ids, seeds, gain_scale, dazzler, detector, dc_offset):
    """Vectorised burst synthesis for flat arrays of nodes.

    Returns the counts and the indices of nodes whose analog intensity
    exceeded full scale. Negative excursions are clipped silently.
    """
    n = np.arange(dazzler.pulses_per_burst)
    phase = seeds.phase_sum + np.outer(increments, n)
    intensity = dc_offset + seeded_delta_intensity(values[:, None], seeds, phase, gain_scale)
    if detector.gaussian_noise_sigma > 0:
        noise = _node_noise(detector.rng_seed, node_ids, dazzler.pulses_per_burst)
        intensity = intensity + detector.gaussian_noise_sigma * detector.full_scale * noise
    saturated = node_ids[np.any(intensity > detector.full_scale, axis=1)]
    counts = np.clip(np.rint(detector.to_counts(intensity)), 0, detector.max_count)
    return counts.astype(np.int32), saturated


def _blurred_values(jsa: ComplexJsa, seeds: SeedPair) -> np.ndarray:
    if seeds.width_nm <= 0:
        return np.asarray(jsa.values)
    sigma = seeds.width_nm / (2.0 * math.sqrt(2.0 * math.log(2.0))) / jsa.grid.step
    re = ndimage.gaussian_filter(jsa.values.real, sigma, mode="constant")
    im = ndimage.gaussian_filter(jsa.values.imag, sigma, mode="constant")
    return re + 1j * im


def _gain(jsa: ComplexJsa, gain_scale: Optional[float]) -> float:
    if gain_scale is not None:
        return gain_scale
    return jsa.model.gain_scale if jsa.model is not None else 1.0


def simulate_burst(
    jsa: ComplexJsa,
    seeds: SeedPair,
    dazzler: DazzlerModel,
    detector: DetectorModel,
    gain_scale: Optional[float] = None,
) -> BurstTrace:
    """Digitised burst for seeds sitting on one grid node.

    The noise stream is keyed by the node's row-major index, so the result is
    identical to the corresponding trace of :func:`simulate_scan`.
    """
    idx = jsa.grid.node_index(seeds.omega_alpha, seeds.omega_beta)
    if idx is None:
        raise OffGridSeed(f"seed point ({seeds.omega_alpha}, {seeds.omega_beta}) is not a grid node")
    gain = _gain(jsa, gain_scale)
    values = _blurred_values(jsa, seeds)
    node = idx[0] * jsa.grid.n + idx[1]
    nu_s, nu_i = jsa.grid.nu_signal[idx[0]], jsa.grid.nu_idler[idx[1]]
    inc = phase_increment((nu_s, nu_i), dazzler)
    dc = resolve_dc_offset(jsa, seeds, gain, detector)
    counts, saturated = _synthesize(
        np.array([values[idx]]), np.array([inc]), np.array([node]), seeds, gain, dazzler, detector, dc
    )
    if saturated.size:
        warnings.warn(f"burst at node {idx} clipped at the digitizer range", SaturationWarning, stacklevel=2)
    return BurstTrace(
        samples=counts[0],
        seed_point=(float(nu_s), float(nu_i)),
        metadata={"dazzler": dazzler, "detector": detector, "seeds": seeds, "dc_offset": dc},
    )


def simulate_scan(
    jsa: ComplexJsa,
    seed_template: SeedPair,
    dazzler: DazzlerModel,
    detector: DetectorModel,
    gain_scale: Optional[float] = None,
) -> ScanDataset:
    """Scan the seeds over every grid node.

    The template's detunings must themselves be a grid node; the seeds are
    then recentred on each node in turn.
    """
    grid = jsa.grid
    if grid.node_index(seed_template.omega_alpha, seed_template.omega_beta) is None:
        raise OffGridSeed(
            f"seed template ({seed_template.omega_alpha}, {seed_template.omega_beta}) lies outside the grid nodes"
        )
    gain = _gain(jsa, gain_scale)
    values = _blurred_values(jsa, seed_template).ravel()
    increments = phase_increment_map(grid, dazzler).ravel()
    node_ids = np.arange(values.size)
    dc = resolve_dc_offset(jsa, seed_template, gain, detector)
    counts, saturated = _synthesize(values, increments, node_ids, seed_template, gain, dazzler, detector, dc)
    if saturated.size:
        first = tuple(int(v) for v in divmod(int(saturated[0]), grid.n))
        warnings.warn(
            f"{saturated.size} bursts clipped at full scale (first at node {first})", SaturationWarning, stacklevel=2
        )
    pdc = jsa.model
    if pdc is not None and gain_scale is not None and gain_scale != pdc.gain_scale:
        pdc = replace(pdc, gain_scale=gain_scale)
    return ScanDataset(
        grid=grid,
        traces=counts.reshape(grid.shape + (dazzler.pulses_per_burst,)),
        pdc=pdc,
        seeds=seed_template,
        dazzler=dazzler,
        detector=detector,
        dc_offset=dc,
        ground_truth=jsa,
    )


def simulate_intensity_only_scan(
    jsa: ComplexJsa,
    detector: DetectorModel,
    samples_per_point: int = 1,
    peak_level: float = 0.1,
    photons_at_peak: float = 100.0,
) -> np.ndarray:
    """Unseeded baseline: noisy estimates of |f|**2 on every node.

    The spontaneous signal peaks at ``peak_level`` (fraction of full scale).
    Each sample carries shot-like noise with variance proportional to its mean
    (``photons_at_peak`` counts at the peak; ``inf`` disables it) plus the
    detector's Gaussian noise. Samples are averaged per node and returned in
    units of |f|**2.
    """
    if samples_per_point < 1:
        raise ValidationError("samples_per_point", "must be >= 1")
    intensity = np.abs(np.asarray(jsa.values)) ** 2
    scale = peak_level / intensity.max()
    mean = intensity * scale
    var = np.full(mean.shape, detector.gaussian_noise_sigma**2)
    if math.isfinite(photons_at_peak):
        var = var + mean * (peak_level / photons_at_peak)
    rng = np.random.default_rng([int(detector.rng_seed), 0x5EED])
    # mean of n unit normals has std 1/sqrt(n)
    noise = rng.standard_normal(mean.shape + (int(samples_per_point),)).mean(axis=-1)
    return (mean + np.sqrt(var) * noise) / scale
