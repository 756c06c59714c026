"""Reconstruction of the complex JSA from a seeded scan.

Pipeline: per-burst oscillation contrast gives |f| up to a constant;
bursts without a resolvable oscillation form stationary stripes; along a
stripe the seed phase sum is fixed, so the sign of a single pulse relative to
the baseline reveals the binary JSA phase; the sign is then spread over each
lobe of the modulus map (lobes are bounded by nulls).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import interpolate, ndimage, optimize
from skimage import segmentation

from .errors import (
    GridMismatch,
    NoStationaryRegion,
    StripeOutsideSupport,
    TraceTooShort,
    UnreachableLobeWarning,
    ValidationError,
)
from .instrument import BurstTrace, ScanDataset, phase_increment_map
from .jsa import ComplexJsa, PdcModel, SpectralGrid, geometric_phase, phase_classes

__all__ = [
    "ContrastMap",
    "Stripe",
    "StripeSigns",
    "PhaseMap",
    "ReconstructionResult",
    "fit_traces",
    "extract_contrast",
    "build_contrast_map",
    "find_stationary_stripes",
    "retrieve_phase_along_stripe",
    "assemble_complex_jsa",
    "score",
    "reconstruct",
    "anti_diagonal_cut",
    "one_over_e_width",
    "first_sidelobe_ratio",
]

MIN_TRACE_LENGTH = 8
ZERO_PAD = 16
ESTIMATORS = ("dft", "fit")


# --------------------------------------------------------------------------
# contrast extraction


def _dft_frequency(x: np.ndarray) -> np.ndarray:
    """Dominant non-DC frequency (cycles/sample) of each row of ``x``.

    Peak of the zero-padded spectrum, refined by a parabola through the
    three bins around the maximum. Frequencies below half a cycle per record
    are excluded from the search.
    """
    m, n = x.shape
    nfft = ZERO_PAD * n
    mag = np.abs(np.fft.rfft(x, n=nfft, axis=1))
    lo = ZERO_PAD // 2
    k = lo + np.argmax(mag[:, lo:], axis=1)
    rows = np.arange(m)
    inner = (k > lo) & (k < mag.shape[1] - 1)
    km = np.clip(k - 1, 0, mag.shape[1] - 1)
    kp = np.clip(k + 1, 0, mag.shape[1] - 1)
    a, b, c = mag[rows, km], mag[rows, k], mag[rows, kp]
    denom = a - 2.0 * b + c
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(inner & (denom < 0), 0.5 * (a - c) / denom, 0.0)
    delta = np.clip(np.nan_to_num(delta), -0.5, 0.5)
    return np.minimum((k + delta) / nfft, 0.5)


RCOND = 1e-2


def _centred_quadratures(freq: np.ndarray, n: int):
    arg = 2.0 * np.pi * freq[..., None] * np.arange(n)
    c = np.cos(arg)
    s = np.sin(arg)
    c -= c.mean(axis=-1, keepdims=True)
    s -= s.mean(axis=-1, keepdims=True)
    return c, s


def _solve_quadratures(g11, g12, g22, r1, r2):
    """Truncated solve of the 2x2 normal equations; returns (a, b, explained energy).

    Directions of the Gram matrix weaker than ``RCOND`` times the strongest are
    dropped. Near DC and Nyquist the sine column nearly vanishes and would
    otherwise fit noise with a huge coefficient.
    """
    half_tr = 0.5 * (g11 + g22)
    disc = np.sqrt(np.maximum(0.25 * (g11 - g22) ** 2 + g12**2, 0.0))
    lam1, lam2 = half_tr + disc, half_tr - disc
    # eigenvector of lam1; fall back to the axis with the larger diagonal when g12 = 0
    vx = np.where(g12 != 0, lam1 - g22, np.where(g11 >= g22, 1.0, 0.0))
    vy = np.where(g12 != 0, g12, np.where(g11 >= g22, 0.0, 1.0))
    norm = np.hypot(vx, vy)
    norm = np.where(norm > 0, norm, 1.0)
    vx, vy = vx / norm, vy / norm
    wx, wy = -vy, vx
    p1 = vx * r1 + vy * r2
    p2 = wx * r1 + wy * r2
    keep2 = lam2 > RCOND * lam1
    with np.errstate(divide="ignore", invalid="ignore"):
        k1 = np.where(lam1 > 0, p1 / lam1, 0.0)
        k2 = np.where(keep2, p2 / np.where(keep2, lam2, 1.0), 0.0)
    a = k1 * vx + k2 * wx
    b = k1 * vy + k2 * wy
    return a, b, k1 * p1 + k2 * p2


def _project(y: np.ndarray, freq: np.ndarray):
    """Least-squares offset and quadrature amplitudes at a fixed frequency per row."""
    c, s = _centred_quadratures(freq, y.shape[1])
    yc = y - y.mean(axis=1, keepdims=True)
    a, b, _ = _solve_quadratures(
        np.sum(c * c, axis=1), np.sum(c * s, axis=1), np.sum(s * s, axis=1), np.sum(c * yc, axis=1), np.sum(s * yc, axis=1)
    )
    arg = 2.0 * np.pi * freq[:, None] * np.arange(y.shape[1])
    offset = np.mean(y - a[:, None] * np.cos(arg) - b[:, None] * np.sin(arg), axis=1)
    return offset, a, b


def _explained_energy(yc: np.ndarray, freq: np.ndarray) -> np.ndarray:
    """Energy captured by an offset + cos + sin least-squares fit.

    ``yc`` is ``(m, n)`` with row means removed and ``freq`` is ``(m, k)``
    candidate frequencies. Removing the mean turns the three-column problem
    into a 2x2 one on the centred quadratures.
    """
    c, s = _centred_quadratures(freq, yc.shape[1])
    _, _, energy = _solve_quadratures(
        np.einsum("mkn,mkn->mk", c, c),
        np.einsum("mkn,mkn->mk", c, s),
        np.einsum("mkn,mkn->mk", s, s),
        np.einsum("mkn,mn->mk", c, yc),
        np.einsum("mkn,mn->mk", s, yc),
    )
    return energy


def _parabolic_peak(energy: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Sub-grid location of the row maxima of ``energy`` sampled at ``grid`` (same shape)."""
    k = np.argmax(energy, axis=1)
    rows = np.arange(energy.shape[0])
    last = energy.shape[1] - 1
    inner = (k > 0) & (k < last)
    a, b, c = energy[rows, np.clip(k - 1, 0, None)], energy[rows, k], energy[rows, np.clip(k + 1, None, last)]
    denom = a - 2.0 * b + c
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(inner & (denom < 0), 0.5 * (a - c) / denom, 0.0)
    delta = np.clip(np.nan_to_num(delta), -0.5, 0.5)
    step = grid[rows, np.clip(k + 1, None, last)] - grid[rows, np.clip(k - 1, 0, None)]
    return grid[rows, k] + delta * 0.5 * step


def _refine_frequency(y: np.ndarray, freq: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """Move each coarse frequency to the maximum of the least-squares explained energy.

    Near DC and Nyquist the negative-frequency image pulls the plain spectral
    peak away from the true frequency; the three-column fit does not suffer
    from that, so its explained energy peaks at the right place. The search
    spans one DFT bin either side, first coarsely, then around the coarse
    maximum.
    """
    m, n = y.shape
    lo, hi = 0.25 / n, 0.5
    coarse = np.linspace(-1.0, 1.0, 21) / n
    fine = np.linspace(-1.0, 1.0, 11) * (coarse[1] - coarse[0])
    out = np.empty(m)
    for start in range(0, m, chunk):
        yc = y[start : start + chunk]
        yc = yc - yc.mean(axis=1, keepdims=True)
        rows = np.arange(yc.shape[0])
        fc = np.clip(freq[start : start + chunk, None] + coarse, lo, hi)
        best = fc[rows, np.argmax(_explained_energy(yc, fc), axis=1)]
        ff = np.clip(best[:, None] + fine, lo, hi)
        out[start : start + chunk] = np.clip(_parabolic_peak(_explained_energy(yc, ff), ff), lo, hi)
    return out


def _sine_fit(y: np.ndarray, freq0: float, amp0: float, phase0: float, offset0: float):
    t = np.arange(y.size, dtype=float)

    def model(t, offset, amp, freq, phase):
        return offset + amp * np.cos(2.0 * np.pi * freq * t + phase)

    try:
        popt, _ = optimize.curve_fit(model, t, y, p0=[offset0, amp0, freq0, phase0], maxfev=2000)
    except (RuntimeError, optimize.OptimizeWarning):
        return amp0, freq0
    return abs(popt[1]), abs(popt[2])


def fit_traces(samples, estimator: str = "dft") -> tuple[np.ndarray, np.ndarray]:
    """Oscillation contrast (half peak-to-peak of the fitted cosine) and cycles per record.

    ``samples`` is ``(..., N)``; the outputs drop the last axis. The ``dft``
    estimator locates the spectral peak and projects onto that frequency, so
    the amplitude does not depend on whether the record holds a whole number
    of periods. ``fit`` refines the same start point with a nonlinear
    four-parameter sine fit.
    """
    if estimator not in ESTIMATORS:
        raise ValidationError("estimator", f"must be one of {ESTIMATORS}")
    samples = np.asarray(samples, dtype=float)
    if samples.shape[-1] < MIN_TRACE_LENGTH:
        raise TraceTooShort(f"need at least {MIN_TRACE_LENGTH} pulses, got {samples.shape[-1]}")
    lead = samples.shape[:-1]
    n = samples.shape[-1]
    y = samples.reshape(-1, n)
    x = y - y.mean(axis=1, keepdims=True)
    freq = _refine_frequency(y, _dft_frequency(x))
    offset, a, b = _project(y, freq)
    contrast = np.hypot(a, b)
    if estimator == "fit":
        phase = np.arctan2(-b, a)
        for row in range(y.shape[0]):
            if contrast[row] > 0:
                contrast[row], freq[row] = _sine_fit(y[row], freq[row], contrast[row], phase[row], offset[row])
    return contrast.reshape(lead), (freq * n).reshape(lead)


def contrast_threshold(noise_floor: float, n_pulses: int) -> float:
    """Three times the rms contrast produced by white noise of std ``noise_floor``."""
    return 3.0 * 2.0 * noise_floor / math.sqrt(n_pulses)


def extract_contrast(
    trace, noise_floor: float, estimator: str = "dft", min_cycles: float = 1.0
) -> tuple[float, bool]:
    """Contrast of one burst and whether it counts as stationary.

    A burst is stationary when its contrast is within the noise threshold or
    when it completes fewer than ``min_cycles`` oscillations.
    """
    samples = trace.samples if isinstance(trace, BurstTrace) else trace
    samples = np.asarray(samples, dtype=float)
    contrast, cycles = fit_traces(samples[None, :], estimator)
    c = float(contrast[0])
    stationary = c <= contrast_threshold(noise_floor, samples.size) or float(cycles[0]) < min_cycles
    return c, bool(stationary)


@dataclass(frozen=True)
class ContrastMap:
    """Per-node oscillation contrast in ADC counts.

    ``noise_floor`` is the per-sample noise std (counts). ``expected_stationary``
    is the stripe prediction from a known pulse-shaper model, or None when the
    model is unknown (stripes and genuine nulls are then ambiguous).
    """

    grid: SpectralGrid
    contrast: np.ndarray
    stationary_mask: np.ndarray
    noise_floor: float
    cycles: np.ndarray
    n_pulses: int
    min_cycles: float = 1.0
    expected_stationary: Optional[np.ndarray] = None
    estimator: str = "dft"

    @property
    def threshold(self) -> float:
        return contrast_threshold(self.noise_floor, self.n_pulses)

    @property
    def empty(self) -> bool:
        """True when no node carries a trusted contrast value."""
        return bool(np.all(self.stationary_mask))

    @property
    def ambiguous(self) -> bool:
        return self.expected_stationary is None

    def stripe_candidates(self) -> np.ndarray:
        """Stationary nodes attributed to the pulse shaper rather than to JSA nulls."""
        if self.expected_stationary is not None:
            return self.stationary_mask & self.expected_stationary
        return self.stationary_mask & (self.cycles < self.min_cycles)


def estimate_noise_floor(traces: np.ndarray) -> float:
    """Per-sample noise std from the quietest decile of bursts, floored at the quantisation noise."""
    var = np.asarray(traces, dtype=float).reshape(-1, traces.shape[-1]).var(axis=1, ddof=1)
    cut = np.quantile(var, 0.1)
    quiet = var[var <= cut]
    return math.sqrt(max(float(quiet.mean()), 1.0 / 12.0))


def build_contrast_map(dataset: ScanDataset, estimator: str = "dft", min_cycles: float = 1.0) -> ContrastMap:
    contrast, cycles = fit_traces(dataset.traces, estimator)
    n_pulses = dataset.dazzler.pulses_per_burst
    floor = estimate_noise_floor(dataset.traces)
    stationary = (contrast <= contrast_threshold(floor, n_pulses)) | (cycles < min_cycles)
    inc = phase_increment_map(dataset.grid, dataset.dazzler)
    expected = np.abs(inc) * n_pulses / (2.0 * np.pi) < min_cycles
    return ContrastMap(
        grid=dataset.grid,
        contrast=contrast,
        stationary_mask=stationary,
        noise_floor=floor,
        cycles=cycles,
        n_pulses=n_pulses,
        min_cycles=min_cycles,
        expected_stationary=expected,
        estimator=estimator,
    )


# --------------------------------------------------------------------------
# stationary stripes


@dataclass(frozen=True)
class Stripe:
    """Connected group of stationary nodes with a total-least-squares line fit.

    ``nodes`` holds (signal index, idler index) pairs ordered along
    ``direction``; the line lives in detuning coordinates (rad/ps).
    """

    nodes: np.ndarray
    centroid: tuple[float, float]
    direction: tuple[float, float]
    elongation: float
    ambiguous: bool = False

    @property
    def slope(self) -> float:
        """d nu_i / d nu_s along the stripe."""
        dx, dy = self.direction
        return math.inf if dx == 0 else dy / dx

    @property
    def angle_deg(self) -> float:
        return math.degrees(math.atan(self.slope)) if math.isfinite(self.slope) else 90.0

    def __len__(self) -> int:
        return len(self.nodes)


def _node_coords(grid: SpectralGrid, nodes: np.ndarray) -> np.ndarray:
    return np.column_stack([grid.nu_signal[nodes[:, 0]], grid.nu_idler[nodes[:, 1]]])


def find_stationary_stripes(cmap: ContrastMap, min_nodes: int = 5, min_elongation: float = 3.0) -> list[Stripe]:
    """Group stripe candidates into 8-connected components and fit a line to each.

    Components smaller than ``min_nodes`` are dropped. When the shaper model is
    unknown, components that are not elongated are treated as nulls rather
    than stripes.
    """
    candidates = cmap.stripe_candidates()
    if not candidates.any():
        raise NoStationaryRegion("no stationary nodes; phase retrieval is impossible")
    labels, count = ndimage.label(candidates, structure=np.ones((3, 3), dtype=int))
    stripes = []
    for lab in range(1, count + 1):
        nodes = np.argwhere(labels == lab)
        if len(nodes) < min_nodes:
            continue
        xy = _node_coords(cmap.grid, nodes)
        centroid = xy.mean(axis=0)
        cov = np.cov((xy - centroid).T)
        evals, evecs = np.linalg.eigh(cov)
        direction = evecs[:, -1]
        if direction[0] < 0 or (direction[0] == 0 and direction[1] < 0):
            direction = -direction
        elongation = math.sqrt(evals[-1] / evals[0]) if evals[0] > 0 else math.inf
        if cmap.ambiguous and elongation < min_elongation:
            continue
        order = np.argsort((xy - centroid) @ direction, kind="stable")
        stripes.append(
            Stripe(
                nodes=nodes[order],
                centroid=(float(centroid[0]), float(centroid[1])),
                direction=(float(direction[0]), float(direction[1])),
                elongation=float(elongation),
                ambiguous=cmap.ambiguous,
            )
        )
    if not stripes:
        raise NoStationaryRegion("stationary nodes do not form any stripe")
    stripes.sort(key=lambda s: (s.centroid[0], s.centroid[1]))
    return stripes


# --------------------------------------------------------------------------
# binary phase along stripes


@dataclass(frozen=True)
class StripeSigns:
    """Binary phase signs along one stripe: +1 (phase 0), -1 (phase pi), 0 undetermined."""

    stripe: Stripe
    positions: np.ndarray
    signs: np.ndarray
    deviation: np.ndarray
    pulse_index: int

    def inverted(self) -> "StripeSigns":
        return StripeSigns(self.stripe, self.positions, -self.signs, -self.deviation, self.pulse_index)


def _reference_phase(dataset: ScanDataset, nodes: np.ndarray, pulse_index: int) -> np.ndarray:
    """Phase the seeded term would have at ``pulse_index`` for a positive, real JSA sign."""
    inc = phase_increment_map(dataset.grid, dataset.dazzler)[nodes[:, 0], nodes[:, 1]]
    ref = dataset.seeds.phase_sum + pulse_index * inc
    if dataset.pdc is not None:
        xy = _node_coords(dataset.grid, nodes)
        ref = ref + geometric_phase(xy[:, 0], xy[:, 1], dataset.pdc)
    return ref


def retrieve_phase_along_stripe(
    dataset: ScanDataset,
    stripe: Stripe,
    pulse_index: Optional[int] = None,
    noise_floor: Optional[float] = None,
    min_reference: float = 0.1,
) -> StripeSigns:
    """Sign of one pulse relative to the baseline, demodulated by the known reference phase.

    Along a stripe the seed phase sum is the same for every node, so a sign
    change between nodes is a change of the JSA sign. The geometric
    phasematching phase and the seed phase sum are model-supplied; the
    measured quantity is only the binary class. Nodes whose deviation is
    within three noise stds, or whose reference cosine is below
    ``min_reference``, are undetermined.
    """
    n_pulses = dataset.dazzler.pulses_per_burst
    nodes = stripe.nodes
    if len(nodes) == 0:
        raise ValidationError("stripe", "stripe has no nodes")
    samples = dataset.traces[nodes[:, 0], nodes[:, 1]].astype(float)
    deviation = samples - dataset.dc_counts
    if pulse_index is None:
        pulse_index = int(np.argmax(np.abs(deviation).mean(axis=0)))
    if not 0 <= pulse_index < n_pulses:
        raise ValidationError("pulse_index", f"must be in [0, {n_pulses})")
    if noise_floor is None:
        noise_floor = estimate_noise_floor(dataset.traces)
    measured = deviation[:, pulse_index]
    ref = np.cos(_reference_phase(dataset, nodes, pulse_index))
    determined = (np.abs(measured) > 3.0 * noise_floor) & (np.abs(ref) >= min_reference)
    if not determined.any():
        raise StripeOutsideSupport("every stripe node is below the noise threshold")
    signs = np.where(determined, np.sign(measured) * np.sign(ref), 0).astype(np.int8)
    xy = _node_coords(dataset.grid, nodes)
    positions = (xy - np.asarray(stripe.centroid)) @ np.asarray(stripe.direction)
    return StripeSigns(stripe, positions, signs, measured, pulse_index)


# --------------------------------------------------------------------------
# assembly


@dataclass(frozen=True)
class PhaseMap:
    """Binary phase per node: 0, pi, or NaN (undetermined)."""

    grid: SpectralGrid
    phase_class: np.ndarray
    reference_point: tuple[int, int]

    @property
    def determined(self) -> np.ndarray:
        return ~np.isnan(self.phase_class)


@dataclass(frozen=True)
class ReconstructionResult:
    """Recovered JSA.

    ``modulus`` is normalised like ``complex_jsa``; ``contrast`` keeps the raw
    (counts) values for efficiency comparisons between scans. ``interpolated``
    marks stripe nodes whose modulus was filled from neighbours.
    """

    modulus: np.ndarray
    phase: PhaseMap
    complex_jsa: ComplexJsa
    contrast: np.ndarray
    interpolated: np.ndarray
    metrics: Optional[dict] = None
    metadata: dict = field(default_factory=dict)

    @property
    def grid(self) -> SpectralGrid:
        return self.complex_jsa.grid


_AXES = ((1, 0), (0, 1), (1, 1), (1, -1))


def _fill_nodes(values: np.ndarray, fill: np.ndarray, steps: tuple[float, float] = (1.0, 1.0)) -> np.ndarray:
    """Fill ``fill`` nodes by linear interpolation across the shortest gap.

    For each node the nearest known neighbours are looked up along rows,
    columns and both diagonals; the axis with the shortest bracketing span
    (in units of ``steps``) is used. Nodes that no axis brackets fall back to
    Delaunay-linear, then nearest-neighbour interpolation.
    """
    out = values.astype(float).copy()
    if not fill.any() or fill.all():
        return out
    n0, n1 = out.shape
    leftover = []
    for i, j in np.argwhere(fill):
        best = None
        for di, dj in _AXES:
            ends = []
            for sign in (1, -1):
                k = 1
                while True:
                    a, b = i + sign * k * di, j + sign * k * dj
                    if not (0 <= a < n0 and 0 <= b < n1):
                        ends.append(None)
                        break
                    if not fill[a, b]:
                        ends.append((k, values[a, b]))
                        break
                    k += 1
            if ends[0] is None or ends[1] is None:
                continue
            (k_pos, v_pos), (k_neg, v_neg) = ends
            span = (k_pos + k_neg) * math.hypot(di * steps[0], dj * steps[1])
            if best is None or span < best[0]:
                best = (span, (v_pos * k_neg + v_neg * k_pos) / (k_pos + k_neg))
        if best is None:
            leftover.append((i, j))
        else:
            out[i, j] = best[1]
    if leftover:
        known = np.argwhere(~fill)
        target = np.array(leftover)
        lin = interpolate.griddata(known, values[~fill], target, method="linear")
        miss = np.isnan(lin)
        if miss.any():
            lin[miss] = interpolate.griddata(known, values[~fill], target[miss], method="nearest")
        out[target[:, 0], target[:, 1]] = lin
    return out


def _valleys_1d(p: np.ndarray, ratio: float) -> np.ndarray:
    """Local minima that dip below ``ratio`` times the highest value on both sides.

    Out-of-range neighbours count as +inf, so a null running off the grid
    still yields a valley node at the edge.
    """
    n = p.size
    if n < 2:
        return np.zeros(n, dtype=bool)
    padded = np.concatenate([[np.inf], p, [np.inf]])
    local = (p <= padded[:-2]) & (p <= padded[2:])
    left = np.concatenate([[np.inf], np.maximum.accumulate(p)[:-1]])
    right = np.concatenate([np.maximum.accumulate(p[::-1])[::-1][1:], [np.inf]])
    deep = p < ratio * np.minimum(left, right)
    return local & deep


def _valley_mask(modulus: np.ndarray, ratio: float) -> np.ndarray:
    rows = np.array([_valleys_1d(r, ratio) for r in modulus])
    cols = np.array([_valleys_1d(c, ratio) for c in modulus.T]).T
    return rows | cols


def _propagate_classes(
    modulus: np.ndarray,
    support: np.ndarray,
    sign_sets: Sequence[StripeSigns],
    valley_ratio: float,
    min_lobe_nodes: int,
):
    """Spread stripe signs over null-bounded lobes of the modulus map.

    Signs flood outward from the stripe nodes in order of decreasing modulus,
    so floods from neighbouring lobes meet in the null between them. Lobes
    found by cutting the map along its valleys that hold no stripe sign are
    reported and left undetermined. Returns (sign map, unreached lobe count).
    """
    markers = np.zeros(modulus.shape, dtype=np.int32)
    for ss in sign_sets:
        nodes = ss.stripe.nodes
        markers[nodes[:, 0], nodes[:, 1]] = np.where(ss.signs > 0, 1, np.where(ss.signs < 0, 2, 0))
    markers[~support] = 0
    if markers.any():
        flooded = segmentation.watershed(modulus.max() - modulus, markers=markers, mask=support)
    else:
        flooded = np.zeros(modulus.shape, dtype=np.int32)
    sign_map = np.select([flooded == 1, flooded == 2], [1, -1], 0).astype(np.int8)

    core = support & ~_valley_mask(modulus, valley_ratio)
    labels, count = ndimage.label(core)
    marked = np.unique(labels[markers > 0])
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    unreached = [lab for lab in range(1, count + 1) if lab not in marked and sizes[lab] >= min_lobe_nodes]
    for lab in unreached:
        sign_map[labels == lab] = 0
    return sign_map, len(unreached)


def assemble_complex_jsa(
    cmap: ContrastMap,
    signs: Sequence[StripeSigns] = (),
    reference: Optional[tuple[int, int]] = None,
    model: Optional[PdcModel] = None,
    fix_reference: bool = True,
    support_fraction: float = 0.0,
    valley_ratio: float = 0.5,
    min_lobe_nodes: int = 5,
) -> ReconstructionResult:
    """Normalise the contrast map and attach the binary phase.

    Stripe nodes get their modulus from neighbours. Each null-bounded lobe takes
    the majority sign measured where a stripe crosses it; lobes that no stripe
    reaches stay undetermined and raise :class:`UnreachableLobeWarning`. With
    ``fix_reference`` the phase at ``reference`` (default: the modulus peak)
    is set to 0, removing the unobservable global sign. ``model`` supplies
    the geometric phase; without it the assembled JSA is real.
    """
    interpolated = cmap.stripe_candidates()
    grid = cmap.grid
    steps = (float(np.mean(np.abs(np.diff(grid.nu_signal)))), float(np.mean(np.abs(np.diff(grid.nu_idler)))))
    raw = _fill_nodes(cmap.contrast, interpolated, steps) if grid.n > 1 else cmap.contrast.astype(float)
    raw = np.maximum(raw, 0.0)
    weights = cmap.grid.weights()
    total = float(np.sum(raw**2 * weights))
    scale = 1.0 / math.sqrt(total) if total > 0 else 1.0
    modulus = raw * scale

    if reference is None:
        trusted = np.where(interpolated, -np.inf, raw)
        reference = tuple(int(v) for v in np.unravel_index(np.argmax(trusted), raw.shape))

    support = raw > max(cmap.threshold, support_fraction * raw.max())
    sign_map, unreached = _propagate_classes(raw, support, signs, valley_ratio, min_lobe_nodes)
    if unreached:
        warnings.warn(
            f"{unreached} lobe(s) above threshold are crossed by no stripe; their phase stays undetermined",
            UnreachableLobeWarning,
            stacklevel=2,
        )
    if fix_reference and sign_map[reference] < 0:
        sign_map = -sign_map

    phase_class = np.where(sign_map > 0, 0.0, np.where(sign_map < 0, np.pi, np.nan))
    if model is not None:
        nu_s, nu_i = cmap.grid.mesh()
        geom = geometric_phase(nu_s, nu_i, model)
    else:
        geom = np.zeros(cmap.grid.shape)
    # undetermined nodes follow the reference class so a gauge flip is global
    default = -1.0 if sign_map[reference] < 0 else 1.0
    sign = np.where(sign_map == 0, default, sign_map.astype(float))
    values = modulus * sign * np.exp(1j * geom)
    jsa = ComplexJsa(grid=cmap.grid, values=values, norm_constant=scale, model=model)
    metadata = {
        "estimator": cmap.estimator,
        "noise_floor_counts": cmap.noise_floor,
        "contrast_threshold_counts": cmap.threshold,
        "reference_point": list(reference),
        "geometric_phase": "model" if model is not None else "none",
        "n_stripes": len(signs),
        "unreached_lobes": unreached,
        "empty_contrast": cmap.empty,
        "stripes_ambiguous": cmap.ambiguous,
    }
    return ReconstructionResult(
        modulus=modulus,
        phase=PhaseMap(grid=cmap.grid, phase_class=phase_class, reference_point=reference),
        complex_jsa=jsa,
        contrast=np.asarray(cmap.contrast, dtype=float),
        interpolated=interpolated,
        metadata=metadata,
    )


# --------------------------------------------------------------------------
# cuts and scoring


def anti_diagonal_cut(matrix: np.ndarray, center: tuple[int, int]) -> tuple[np.ndarray, int]:
    """Values along (i + k, j - k) through ``center``; returns (profile, index of centre).

    On a grid with equal signal and idler centres this is the line of constant
    sum detuning, so the pump envelope is constant along it.
    """
    i0, j0 = center
    n0, n1 = matrix.shape
    k_lo = -min(i0, n1 - 1 - j0)
    k_hi = min(n0 - 1 - i0, j0)
    ks = np.arange(k_lo, k_hi + 1)
    return matrix[i0 + ks, j0 - ks], -k_lo


def one_over_e_width(profile: np.ndarray, center: int) -> float:
    """Full 1/e width (in samples) of the peak at ``center``, linearly interpolated."""
    p = np.asarray(profile, dtype=float)
    level = p[center] / math.e

    def half(step: int) -> float:
        k = center
        while 0 <= k + step < p.size:
            if p[k + step] < level:
                frac = (p[k] - level) / (p[k] - p[k + step])
                return abs(k - center) + frac
            k += step
        return math.nan

    return half(1) + half(-1)


def first_sidelobe_ratio(profile: np.ndarray, center: int, exclude: Optional[np.ndarray] = None) -> float:
    """First-sidelobe to main-peak ratio along a cut, averaged over usable sides.

    The first null is the first local minimum below half the peak; the
    sidelobe maximum is searched between it and twice its distance. A side is
    skipped when the sidelobe maximum (or a neighbour) is in ``exclude``.
    """
    p = np.asarray(profile, dtype=float)
    peak = p[center]
    ratios = []
    for step in (1, -1):
        k = center + step
        null = None
        while 0 <= k + step < p.size:
            if p[k] < 0.5 * peak and p[k] <= p[k + step] and p[k] <= p[k - step]:
                null = k
                break
            k += step
        if null is None:
            continue
        dist = abs(null - center)
        stop = center + step * (2 * dist + 2)
        idx = np.arange(null, stop, step)
        idx = idx[(idx >= 0) & (idx < p.size)]
        if idx.size == 0:
            continue
        best = idx[np.argmax(p[idx])]
        if best == idx[-1] and abs(best - center) < 2 * dist + 1:
            continue
        if exclude is not None and exclude[max(best - 1, 0) : best + 2].any():
            continue
        ratios.append(p[best] / peak)
    return float(np.mean(ratios)) if ratios else math.nan


def score(result: ReconstructionResult, truth: ComplexJsa, support_fraction: float = 0.05) -> dict:
    """Error metrics of a reconstruction against a known JSA (gauge invariant)."""
    grid = result.complex_jsa.grid
    if grid != truth.grid:
        raise GridMismatch("reconstruction and truth are on different grids")
    rec_mod = np.abs(result.complex_jsa.values)
    true_mod = np.abs(truth.values)
    keep = ~result.interpolated

    def rel(a, b, mask=None):
        if mask is not None:
            a, b = a[mask], b[mask]
        denom = np.linalg.norm(b)
        return float(np.linalg.norm(a - b) / denom) if denom > 0 else math.nan

    strong = true_mod > support_fraction * true_mod.max()
    true_cls = phase_classes(truth.values, truth.geometric_phase())
    rec_cls = result.phase.phase_class
    same = np.mean(rec_cls[strong] == true_cls[strong])
    flipped_true = np.where(np.isnan(true_cls), np.nan, np.pi - true_cls)
    opposite = np.mean(rec_cls[strong] == flipped_true[strong])

    re_rec = result.complex_jsa.values.real
    re_true = truth.values.real
    re_err = min(rel(re_rec, re_true), rel(-re_rec, re_true))

    center = tuple(int(v) for v in np.unravel_index(np.argmax(np.where(keep, rec_mod, -np.inf)), rec_mod.shape))
    cut, c0 = anti_diagonal_cut(rec_mod, center)
    excl, _ = anti_diagonal_cut(result.interpolated, center)
    return {
        "modulus_rel_l2_error": rel(rec_mod, true_mod, keep),
        "modulus_rel_l2_error_all_nodes": rel(rec_mod, true_mod),
        "phase_agreement_fraction": float(max(same, opposite)) if strong.any() else math.nan,
        "sidelobe_ratio": first_sidelobe_ratio(cut, c0, excl),
        "real_part_rel_l2_error": re_err,
    }


def reconstruct(
    dataset: ScanDataset,
    estimator: str = "dft",
    min_cycles: float = 1.0,
    pulse_index: Optional[int] = None,
) -> ReconstructionResult:
    """Full inversion: contrast map, stripes, stripe signs, assembly, scoring."""
    cmap = build_contrast_map(dataset, estimator=estimator, min_cycles=min_cycles)
    sign_sets = []
    try:
        stripes = find_stationary_stripes(cmap)
    except NoStationaryRegion:
        stripes = []
    for stripe in stripes:
        try:
            sign_sets.append(retrieve_phase_along_stripe(dataset, stripe, pulse_index, cmap.noise_floor))
        except StripeOutsideSupport:
            continue
    result = assemble_complex_jsa(cmap, sign_sets, model=dataset.pdc)
    result.metadata["stripes"] = [
        {
            "n_nodes": len(ss.stripe),
            "slope": ss.stripe.slope,
            "pulse_index": ss.pulse_index,
            "sign_flips": int(np.count_nonzero(np.diff(ss.signs[ss.signs != 0]))),
        }
        for ss in sign_sets
    ]
    if dataset.ground_truth is not None:
        metrics = score(result, dataset.ground_truth)
        result = ReconstructionResult(
            modulus=result.modulus,
            phase=result.phase,
            complex_jsa=result.complex_jsa,
            contrast=result.contrast,
            interpolated=result.interpolated,
            metrics=metrics,
            metadata=result.metadata,
        )
    return result
