"""Joint spectral amplitude of a waveguided PDC source.

The JSA is the product of a Gaussian pump envelope in the sum detuning and a
sinc phasematching function in a linearised phase mismatch::

    f(nu_s, nu_i) = N * exp(-(nu_s + nu_i)**2 / sigma_p**2)
                      * sinc(dk * L / 2) * exp(1j * dk * L / 2)
    dk = kappa_s * nu_s + kappa_i * nu_i

All spectral quantities inside this module are angular-frequency detunings in
rad/ps relative to the grid centre. Wavelengths (nm) only appear on the grid
axes and in the helper conversions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateGrid, ValidationError, ZeroAmplitude

__all__ = [
    "C_NM_PER_PS",
    "SpectralGrid",
    "PdcModel",
    "ComplexJsa",
    "pump_envelope",
    "delta_k",
    "geometric_phase",
    "phasematching",
    "build_jsa",
    "jsa_phase_class",
    "phase_classes",
    "sigma_p_from_fwhm",
    "kappa_for_null",
    "wavelength_to_detuning",
    "detuning_to_wavelength",
]

# speed of light in nm/ps
C_NM_PER_PS = 299792.458


def wavelength_to_detuning(wavelength_nm, center_nm):
    """Angular-frequency detuning (rad/ps) of ``wavelength_nm`` from ``center_nm``."""
    two_pi_c = 2.0 * np.pi * C_NM_PER_PS
    return two_pi_c / np.asarray(wavelength_nm, dtype=float) - two_pi_c / center_nm


def detuning_to_wavelength(nu, center_nm):
    two_pi_c = 2.0 * np.pi * C_NM_PER_PS
    return two_pi_c / (np.asarray(nu, dtype=float) + two_pi_c / center_nm)


@dataclass(frozen=True)
class SpectralGrid:
    """Square wavelength grid centred on the quasi-phasematched point.

    Both axes share ``span`` and ``step`` (nm). The point count per axis,
    ``span / step + 1``, must be an odd integer so the centre is sampled.
    A zero span gives the one-point grid.
    """

    center_signal: float
    center_idler: float
    span: float
    step: float

    def __post_init__(self):
        for name in ("center_signal", "center_idler"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"grid.{name}", "must be > 0")
        if not self.step > 0:
            raise ValidationError("grid.step", "must be > 0")
        if not self.span >= 0:
            raise ValidationError("grid.span", "must be >= 0")
        ratio = self.span / self.step
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
            raise ValidationError("grid.span", "span/step must be an integer")
        n = int(round(ratio)) + 1
        if n % 2 == 0:
            raise ValidationError("grid.span", f"point count {n} must be odd")
        if self.span / 2 >= min(self.center_signal, self.center_idler):
            raise ValidationError("grid.span", "span exceeds the centre wavelength")

    @property
    def n(self) -> int:
        return int(round(self.span / self.step)) + 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def _offsets(self) -> np.ndarray:
        m = (self.n - 1) // 2
        return (np.arange(self.n) - m) * self.step

    @property
    def wavelengths_signal(self) -> np.ndarray:
        return self.center_signal + self._offsets()

    @property
    def wavelengths_idler(self) -> np.ndarray:
        return self.center_idler + self._offsets()

    @property
    def nu_signal(self) -> np.ndarray:
        return wavelength_to_detuning(self.wavelengths_signal, self.center_signal)

    @property
    def nu_idler(self) -> np.ndarray:
        return wavelength_to_detuning(self.wavelengths_idler, self.center_idler)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Detuning meshes, signal along rows (outer index), idler along columns."""
        return np.meshgrid(self.nu_signal, self.nu_idler, indexing="ij")

    def weights(self) -> np.ndarray:
        """Per-node area element |d nu_s| * |d nu_i| for the discrete norm.

        The grid is uniform in wavelength, so the frequency spacing is taken
        from the exact Jacobian 2*pi*c/lambda**2 times the wavelength step.
        """
        two_pi_c = 2.0 * np.pi * C_NM_PER_PS
        ds = two_pi_c * self.step / self.wavelengths_signal**2
        di = two_pi_c * self.step / self.wavelengths_idler**2
        return np.outer(ds, di)

    @property
    def center_index(self) -> tuple[int, int]:
        m = (self.n - 1) // 2
        return (m, m)

    def node_index(self, nu_s: float, nu_i: float, atol: float = 1e-9) -> Optional[tuple[int, int]]:
        """Grid indices of the node at detunings (nu_s, nu_i), or None if off-grid."""
        js = np.flatnonzero(np.isclose(self.nu_signal, nu_s, rtol=0.0, atol=atol))
        ji = np.flatnonzero(np.isclose(self.nu_idler, nu_i, rtol=0.0, atol=atol))
        if js.size == 0 or ji.size == 0:
            return None
        return (int(js[0]), int(ji[0]))

    def to_dict(self) -> dict:
        return {
            "center_signal": self.center_signal,
            "center_idler": self.center_idler,
            "span": self.span,
            "step": self.step,
        }


@dataclass(frozen=True)
class PdcModel:
    """Physical parameters of the JSA.

    Attributes
    ----------
    sigma_p : float
        Pump spectral 1/e half-width of the field envelope (rad/ps).
    length : float
        Waveguide interaction length (mm).
    kappa_s, kappa_i : float
        Inverse group-velocity mismatch coefficients (ps/mm).
    gain_scale : float
        Dimensionless proportionality of the seeded gain.
    """

    sigma_p: float
    length: float
    kappa_s: float
    kappa_i: float
    gain_scale: float = 1.0

    def __post_init__(self):
        for name in ("sigma_p", "length", "gain_scale"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"pdc.{name}", "must be finite and > 0")
        for name in ("kappa_s", "kappa_i"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"pdc.{name}", "must be finite")
        if self.kappa_s == 0 and self.kappa_i == 0:
            raise ValidationError("pdc.kappa_s", "kappa_s and kappa_i cannot both be zero")

    @property
    def angle_deg(self) -> float:
        """Orientation of the dk = 0 line with respect to the signal axis."""
        return math.degrees(math.atan2(-self.kappa_s, self.kappa_i))

    def to_dict(self) -> dict:
        return {
            "sigma_p": self.sigma_p,
            "length": self.length,
            "kappa_s": self.kappa_s,
            "kappa_i": self.kappa_i,
            "gain_scale": self.gain_scale,
        }


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ComplexJsa:
    """Normalised complex JSA sampled on a grid.

    ``model`` is kept when the JSA was built from (or assembled against) a
    parametric model, so that the geometric phase can be separated from the
    binary sign.
    """

    grid: SpectralGrid
    values: np.ndarray
    norm_constant: float
    model: Optional[PdcModel] = field(default=None, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise ValidationError("values", f"shape {values.shape} != grid {self.grid.shape}")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.values)

    def norm(self) -> float:
        """Discrete integral of |f|**2 over the grid."""
        return float(np.sum(np.abs(self.values) ** 2 * self.grid.weights()))

    def geometric_phase(self) -> np.ndarray:
        if self.model is None:
            return np.zeros(self.grid.shape)
        nu_s, nu_i = self.grid.mesh()
        return geometric_phase(nu_s, nu_i, self.model)


def pump_envelope(nu_s, nu_i, model: PdcModel):
    """Gaussian pump envelope, a function of the sum detuning only."""
    total = np.asarray(nu_s) + np.asarray(nu_i)
    return np.exp(-(total**2) / model.sigma_p**2)


def delta_k(nu_s, nu_i, model: PdcModel):
    """Linearised phase mismatch (rad/mm), zero at the grid centre."""
    return model.kappa_s * np.asarray(nu_s) + model.kappa_i * np.asarray(nu_i)


def geometric_phase(nu_s, nu_i, model: PdcModel):
    return delta_k(nu_s, nu_i, model) * model.length / 2.0


def phasematching(nu_s, nu_i, model: PdcModel):
    """sinc(dk L / 2) * exp(i dk L / 2) with sinc(x) = sin(x) / x."""
    half = geometric_phase(nu_s, nu_i, model)
    # np.sinc is the normalised sinc, sin(pi x) / (pi x)
    return np.sinc(half / np.pi) * np.exp(1j * half)


def build_jsa(grid: SpectralGrid, model: PdcModel) -> ComplexJsa:
    nu_s, nu_i = grid.mesh()
    raw = pump_envelope(nu_s, nu_i, model) * phasematching(nu_s, nu_i, model)
    total = float(np.sum(np.abs(raw) ** 2 * grid.weights()))
    if not total > 0:
        raise DegenerateGrid("JSA vanishes on every grid node")
    norm = 1.0 / math.sqrt(total)
    return ComplexJsa(grid=grid, values=norm * raw, norm_constant=norm, model=model)


def jsa_phase_class(value: complex, geometric: float) -> float:
    """Binary phase class (0 or pi) of a JSA value after removing the geometric phase."""
    if abs(value) == 0:
        raise ZeroAmplitude("phase is undefined at a zero of the JSA")
    residual = complex(value) * np.exp(-1j * geometric)
    return 0.0 if residual.real >= 0 else math.pi


def phase_classes(values, geometric, floor: float = 0.0) -> np.ndarray:
    """Vectorised :func:`jsa_phase_class`; NaN where ``|value| <= floor``."""
    values = np.asarray(values, dtype=complex)
    residual = (values * np.exp(-1j * np.asarray(geometric))).real
    out = np.where(residual >= 0, 0.0, np.pi)
    return np.where(np.abs(values) > floor, out, np.nan)


def sigma_p_from_fwhm(fwhm_nm: float, pump_center_nm: float) -> float:
    """Field 1/e half-width (rad/ps) from the pump *intensity* FWHM in wavelength.

    The intensity spectrum of exp(-nu**2 / sigma**2) is exp(-2 nu**2 / sigma**2),
    whose FWHM is sigma * sqrt(2 ln 2).
    """
    fwhm_omega = 2.0 * np.pi * C_NM_PER_PS * fwhm_nm / pump_center_nm**2
    return fwhm_omega / math.sqrt(2.0 * math.log(2.0))


def kappa_for_null(angle_deg: float, null_offset_nm: float, length_mm: float, center_nm: float) -> tuple[float, float]:
    """Mismatch coefficients placing the first sinc null ``null_offset_nm`` off the dk = 0 line.

    The offset is measured perpendicular to the dk = 0 line in the wavelength
    plane, using the linear wavelength-to-frequency Jacobian at ``center_nm``
    (both axes share the centre, so the angle is the same in both planes).
    """
    jac = 2.0 * np.pi * C_NM_PER_PS / center_nm**2
    magnitude = 2.0 * np.pi / (length_mm * null_offset_nm * jac)
    theta = math.radians(angle_deg)
    # dk = 0 direction is (kappa_i, -kappa_s) / |kappa|
    return (-magnitude * math.sin(theta), magnitude * math.cos(theta))
