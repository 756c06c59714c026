"""Run configuration: strict JSON parsing into validated model objects.

Every section is optional; omitted fields fall back to the defaults below and
each applied default is logged at INFO level. Unknown keys are rejected.
Spectral quantities are given in nm, as on the plots and CSV headers.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

from .errors import ParseError, UnknownKey, ValidationError
from .instrument import DazzlerModel, DetectorModel, SeedPair
from .jsa import PdcModel, SpectralGrid, kappa_for_null, sigma_p_from_fwhm

__all__ = ["SCHEMA_VERSION", "RunConfig", "load_config", "parse_config", "bundled_config", "BUNDLED_CONFIGS"]

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
SUPPORTED_SCHEMAS = ("1.0",)
BUNDLED_CONFIGS = ("wg25", "wg10", "noise-study")

_NUMBER = "number"
_INT = "integer"
_OPT_NUMBER = "number or null"

# section -> field -> (kind, default)
_SCHEMA: dict[str, dict[str, tuple[str, Any]]] = {
    "grid": {
        "center_signal_nm": (_NUMBER, 796.0),
        "center_idler_nm": (_NUMBER, 796.0),
        "span_nm": (_NUMBER, 10.0),
        "step_nm": (_NUMBER, 0.1),
    },
    "pdc": {
        "length_mm": (_NUMBER, 2.5),
        "pump_fwhm_nm": (_NUMBER, 1.7),
        "pump_center_nm": (_NUMBER, 398.0),
        "angle_deg": (_NUMBER, -35.0),
        "null_offset_nm": (_NUMBER, 0.5),
        "gain_scale": (_NUMBER, 1.0),
    },
    "dazzler": {
        "dphi0": (_NUMBER, DazzlerModel.dphi0),
        "dphi_slope_s": (_NUMBER, DazzlerModel.dphi_slope_s),
        "dphi_slope_i": (_NUMBER, DazzlerModel.dphi_slope_i),
        "pulses_per_burst": (_INT, DazzlerModel.pulses_per_burst),
    },
    "detector": {
        "gaussian_noise_sigma": (_NUMBER, DetectorModel.gaussian_noise_sigma),
        "adc_bits": (_INT, DetectorModel.adc_bits),
        "full_scale": (_NUMBER, DetectorModel.full_scale),
        "dc_offset": (_OPT_NUMBER, DetectorModel.dc_offset),
        "rng_seed": (_INT, DetectorModel.rng_seed),
    },
    "seeds": {
        "amp_alpha": (_NUMBER, SeedPair.amp_alpha),
        "amp_beta": (_NUMBER, SeedPair.amp_beta),
        "phi_alpha0": (_NUMBER, SeedPair.phi_alpha0),
        "phi_beta0": (_NUMBER, SeedPair.phi_beta0),
        "width_nm": (_NUMBER, SeedPair.width_nm),
    },
    "paths": {
        "output_dir": ("string", "out"),
        "stem": ("string", "dataset"),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration.

    ``raw`` holds the fully resolved section values (defaults included) and
    is what gets echoed into dataset metadata.
    """

    grid: SpectralGrid
    pdc: PdcModel
    dazzler: DazzlerModel
    detector: DetectorModel
    seeds: SeedPair
    output_dir: str
    stem: str
    schema_version: str
    raw: dict

    def to_dict(self) -> dict:
        out = {"schema_version": self.schema_version}
        out.update({k: dict(v) for k, v in self.raw.items()})
        return out


def _check_value(path: str, kind: str, value: Any) -> Any:
    if kind == "string":
        if not isinstance(value, str) or not value:
            raise ValidationError(path, "must be a non-empty string")
        return value
    if kind == _OPT_NUMBER and value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(path, f"must be a {kind}, got {type(value).__name__}")
    if kind == _INT:
        if isinstance(value, float) and not value.is_integer():
            raise ValidationError(path, "must be an integer")
        return int(value)
    if not math.isfinite(value):
        raise ValidationError(path, "must be finite")
    return float(value)


def _resolve(data: dict) -> dict:
    unknown = sorted(set(data) - set(_SCHEMA) - {"schema_version"})
    if unknown:
        raise UnknownKey(unknown[0], "unknown top-level key")
    resolved = {}
    for section, fields in _SCHEMA.items():
        given = data.get(section, {})
        if not isinstance(given, dict):
            raise ValidationError(section, "must be an object")
        extra = sorted(set(given) - set(fields))
        if extra:
            raise UnknownKey(f"{section}.{extra[0]}", "unknown key")
        values = {}
        for name, (kind, default) in fields.items():
            path = f"{section}.{name}"
            if name in given:
                values[name] = _check_value(path, kind, given[name])
            else:
                log.info("default applied: %s = %r", path, default)
                values[name] = default
        resolved[section] = values
    return resolved


def parse_config(data: Any) -> RunConfig:
    """Validate an already-decoded JSON object."""
    if not isinstance(data, dict):
        raise ParseError("configuration must be a JSON object")
    version = data.get("schema_version")
    if version is None:
        log.info("default applied: schema_version = %r", SCHEMA_VERSION)
        version = SCHEMA_VERSION
    if version not in SUPPORTED_SCHEMAS:
        raise ValidationError("schema_version", f"unsupported version {version!r}")
    raw = _resolve(data)

    g = raw["grid"]
    try:
        grid = SpectralGrid(g["center_signal_nm"], g["center_idler_nm"], g["span_nm"], g["step_nm"])
    except ValidationError as exc:
        # grid fields are named without the unit suffix in the model
        raise ValidationError(f"{exc.path}_nm", str(exc).split(": ", 1)[-1]) from None

    p = raw["pdc"]
    for name in ("length_mm", "pump_fwhm_nm", "pump_center_nm", "null_offset_nm"):
        if not p[name] > 0:
            raise ValidationError(f"pdc.{name}", "must be > 0")
    kappa_s, kappa_i = kappa_for_null(p["angle_deg"], p["null_offset_nm"], p["length_mm"], grid.center_signal)
    pdc = PdcModel(
        sigma_p=sigma_p_from_fwhm(p["pump_fwhm_nm"], p["pump_center_nm"]),
        length=p["length_mm"],
        kappa_s=kappa_s,
        kappa_i=kappa_i,
        gain_scale=p["gain_scale"],
    )
    dazzler = DazzlerModel(**raw["dazzler"])
    detector = DetectorModel(**raw["detector"])
    seeds = SeedPair(**raw["seeds"])

    output_dir = os.environ.get("PDCTOMO_OUTPUT_DIR") or raw["paths"]["output_dir"]
    return RunConfig(
        grid=grid,
        pdc=pdc,
        dazzler=dazzler,
        detector=detector,
        seeds=seeds,
        output_dir=output_dir,
        stem=raw["paths"]["stem"],
        schema_version=version,
        raw=raw,
    )


def bundled_config(name: str) -> Path:
    """Path of one of the configs shipped with the package."""
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in BUNDLED_CONFIGS:
        raise ValidationError("config", f"no bundled config named {name!r}")
    return Path(__file__).parent / "configs" / f"{stem}.json"


def load_config(path: Union[str, os.PathLike]) -> RunConfig:
    """Read and validate a JSON run configuration.

    A bare bundled name (``wg25``, ``wg25.json``) is accepted when no file of
    that name exists.
    """
    p = Path(path)
    if not p.exists() and p.name in {n + s for n in BUNDLED_CONFIGS for s in ("", ".json")} and p.parent == Path("."):
        p = bundled_config(p.name)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ParseError(f"config file not found: {p}") from exc
    if not text.strip():
        raise ParseError(f"config file is empty: {p}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {p}: {exc.msg} (line {exc.lineno})") from exc
    return parse_config(data)


def default_config(overrides: Optional[dict] = None) -> RunConfig:
    return parse_config(overrides or {})
