"""Dataset and result persistence.

Metadata goes to JSON, matrices to CSV. Grid matrices carry their axes: the
header row lists the idler wavelengths (nm), the first column the signal
wavelengths, so row ``i`` / column ``j`` is node ``(i, j)``. Trace files hold
one row per node in row-major order (signal outer, idler inner) and one
column per pulse. Reals are written with ``repr`` so reading them back is
exact. All writes go through a temporary file and an atomic rename.
"""

from __future__ import annotations

import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .errors import SchemaError
from .instrument import DazzlerModel, DetectorModel, ScanDataset, SeedPair
from .jsa import ComplexJsa, PdcModel, SpectralGrid
from .tomography import PhaseMap, ReconstructionResult

__all__ = [
    "FORMAT_VERSION",
    "NODE_ORDER",
    "atomic_write_bytes",
    "atomic_write_text",
    "dumps_json",
    "write_grid_matrix",
    "read_grid_matrix",
    "save_dataset",
    "load_dataset",
    "save_result",
    "load_result",
    "load_truth",
    "save_metrics",
]

PathLike = Union[str, os.PathLike]

FORMAT_VERSION = "1.0"
NODE_ORDER = "row-major: signal index outer, idler index inner"
_CORNER = "lambda_s_nm/lambda_i_nm"


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def _plain(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def dumps_json(obj: Any) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _read_json(path: PathLike, kind: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON ({exc.msg})") from exc
    if not isinstance(data, dict) or data.get("kind") != kind:
        raise SchemaError(f"{path}: not a {kind} file")
    if data.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported format_version {data.get('format_version')!r}")
    return data


# --------------------------------------------------------------------------
# matrices


def _fmt(x: float) -> str:
    return repr(float(x))


def write_grid_matrix(path: PathLike, grid: SpectralGrid, matrix: np.ndarray) -> Path:
    """Write an ``(n, n)`` real matrix with wavelength axes."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != grid.shape:
        raise SchemaError(f"matrix shape {matrix.shape} != grid {grid.shape}")
    out = io.StringIO()
    out.write(",".join([_CORNER] + [format(w, ".12g") for w in grid.wavelengths_idler]) + "\n")
    for w, row in zip(grid.wavelengths_signal, matrix):
        out.write(",".join([format(w, ".12g")] + [_fmt(v) for v in row]) + "\n")
    return atomic_write_text(path, out.getvalue())


def read_grid_matrix(path: PathLike) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`write_grid_matrix`; returns (lambda_s, lambda_i, matrix)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(_CORNER):
        raise SchemaError(f"{path}: missing '{_CORNER}' header")
    try:
        lam_i = np.array([float(v) for v in lines[0].split(",")[1:]])
        rows = [[float(v) for v in line.split(",")] for line in lines[1:] if line]
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric entry ({exc})") from exc
    body = np.array(rows, dtype=float)
    if body.ndim != 2 or body.shape[1] != lam_i.size + 1 or body.shape[0] != lam_i.size:
        raise SchemaError(f"{path}: expected a square matrix with {lam_i.size} columns")
    return body[:, 0], lam_i, body[:, 1:]


def _write_traces_csv(path: Path, traces: np.ndarray) -> None:
    flat = traces.reshape(-1, traces.shape[-1])
    out = io.StringIO()
    out.write(",".join(f"pulse_{k}" for k in range(flat.shape[1])) + "\n")
    np.savetxt(out, flat, fmt="%d", delimiter=",")
    atomic_write_text(path, out.getvalue())


def _read_traces_csv(path: Path, shape: tuple[int, int, int]) -> np.ndarray:
    flat = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    if flat.shape != (shape[0] * shape[1], shape[2]):
        raise SchemaError(f"{path}: trace matrix has shape {flat.shape}, expected {(shape[0] * shape[1], shape[2])}")
    return flat.reshape(shape)


# --------------------------------------------------------------------------
# model (de)serialisation


def _grid_from(d: dict) -> SpectralGrid:
    return SpectralGrid(d["center_signal"], d["center_idler"], d["span"], d["step"])


def _pdc_from(d: Optional[dict]) -> Optional[PdcModel]:
    return None if d is None else PdcModel(**d)


def _sibling(meta_path: Path, name: str) -> Path:
    return meta_path.parent / name


# --------------------------------------------------------------------------
# datasets


def save_dataset(dataset: ScanDataset, out_dir: PathLike, stem: str = "dataset", binary: bool = False) -> Path:
    """Write ``<stem>.json`` plus trace and ground-truth files; returns the JSON path.

    ``binary`` stores the traces as ``.npy`` instead of CSV.
    """
    out_dir = Path(out_dir)
    grid = dataset.grid
    traces_name = f"{stem}_traces.npy" if binary else f"{stem}_traces.csv"
    if binary:
        buf = io.BytesIO()
        np.save(buf, dataset.traces.reshape(-1, dataset.traces.shape[-1]).astype(np.int32), allow_pickle=False)
        atomic_write_bytes(out_dir / traces_name, buf.getvalue())
    else:
        _write_traces_csv(out_dir / traces_name, dataset.traces)
    truth = None
    if dataset.ground_truth is not None:
        gt = dataset.ground_truth
        truth = {
            "real_file": f"{stem}_truth_real.csv",
            "imag_file": f"{stem}_truth_imag.csv",
            "norm_constant": gt.norm_constant,
            "model": gt.model.to_dict() if gt.model is not None else None,
        }
        write_grid_matrix(out_dir / truth["real_file"], grid, gt.values.real)
        write_grid_matrix(out_dir / truth["imag_file"], grid, gt.values.imag)
    meta = {
        "kind": "scan_dataset",
        "format_version": FORMAT_VERSION,
        "grid": grid.to_dict(),
        "pdc": dataset.pdc.to_dict() if dataset.pdc is not None else None,
        "seeds": dataset.seeds.to_dict(),
        "dazzler": dataset.dazzler.to_dict(),
        "detector": dataset.detector.to_dict(),
        "dc_offset": dataset.dc_offset,
        "traces": {
            "file": traces_name,
            "format": "npy" if binary else "csv",
            "node_order": NODE_ORDER,
            "n_nodes": grid.n * grid.n,
            "pulses_per_burst": dataset.dazzler.pulses_per_burst,
            "units": "ADC counts",
        },
        "ground_truth": truth,
        "config": dataset.config,
    }
    return atomic_write_text(out_dir / f"{stem}.json", dumps_json(meta))


def _truth_from(meta_path: Path, grid: SpectralGrid, truth: Optional[dict]) -> Optional[ComplexJsa]:
    if truth is None:
        return None
    _, _, re = read_grid_matrix(_sibling(meta_path, truth["real_file"]))
    _, _, im = read_grid_matrix(_sibling(meta_path, truth["imag_file"]))
    return ComplexJsa(grid=grid, values=re + 1j * im, norm_constant=truth["norm_constant"], model=_pdc_from(truth["model"]))


def load_dataset(path: PathLike) -> ScanDataset:
    path = Path(path)
    meta = _read_json(path, "scan_dataset")
    try:
        grid = _grid_from(meta["grid"])
        dazzler = DazzlerModel(**meta["dazzler"])
        detector = DetectorModel(**meta["detector"])
        seeds = SeedPair(**meta["seeds"])
        tr = meta["traces"]
        shape = grid.shape + (dazzler.pulses_per_burst,)
        file = _sibling(path, tr["file"])
        if tr["format"] == "npy":
            traces = np.load(file, allow_pickle=False).reshape(shape)
        else:
            traces = _read_traces_csv(file, shape)
        return ScanDataset(
            grid=grid,
            traces=traces,
            pdc=_pdc_from(meta["pdc"]),
            seeds=seeds,
            dazzler=dazzler,
            detector=detector,
            dc_offset=meta["dc_offset"],
            ground_truth=_truth_from(path, grid, meta["ground_truth"]),
            config=meta.get("config"),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: missing or malformed field ({exc})") from exc


# --------------------------------------------------------------------------
# results

_RESULT_MATRICES = ("modulus", "phase_class", "real", "imag", "contrast", "interpolated")


def save_result(result: ReconstructionResult, out_dir: PathLike, stem: str = "result") -> Path:
    """Write ``<stem>.json`` plus one CSV per matrix; returns the JSON path.

    Phase classes are 0 or pi, with ``nan`` for undetermined nodes.
    """
    out_dir = Path(out_dir)
    grid = result.grid
    jsa = result.complex_jsa
    matrices = {
        "modulus": result.modulus,
        "phase_class": result.phase.phase_class,
        "real": jsa.values.real,
        "imag": jsa.values.imag,
        "contrast": result.contrast,
        "interpolated": result.interpolated.astype(float),
    }
    files = {}
    for name in _RESULT_MATRICES:
        files[name] = f"{stem}_{name}.csv"
        write_grid_matrix(out_dir / files[name], grid, matrices[name])
    meta = {
        "kind": "reconstruction_result",
        "format_version": FORMAT_VERSION,
        "grid": grid.to_dict(),
        "model": jsa.model.to_dict() if jsa.model is not None else None,
        "norm_constant": jsa.norm_constant,
        "reference_point": list(result.phase.reference_point),
        "phase_class_encoding": "0 or pi (radians); nan = undetermined",
        "files": files,
        "metrics": result.metrics,
        "metadata": result.metadata,
    }
    return atomic_write_text(out_dir / f"{stem}.json", dumps_json(meta))


def _nan_for_none(d: Optional[dict]) -> Optional[dict]:
    if d is None:
        return None
    return {k: (math.nan if v is None else v) for k, v in d.items()}


def load_result(path: PathLike) -> ReconstructionResult:
    path = Path(path)
    meta = _read_json(path, "reconstruction_result")
    try:
        grid = _grid_from(meta["grid"])
        mats = {}
        for name in _RESULT_MATRICES:
            _, _, mats[name] = read_grid_matrix(_sibling(path, meta["files"][name]))
        jsa = ComplexJsa(
            grid=grid,
            values=mats["real"] + 1j * mats["imag"],
            norm_constant=meta["norm_constant"],
            model=_pdc_from(meta["model"]),
        )
        reference = tuple(int(v) for v in meta["reference_point"])
        return ReconstructionResult(
            modulus=mats["modulus"],
            phase=PhaseMap(grid=grid, phase_class=mats["phase_class"], reference_point=reference),
            complex_jsa=jsa,
            contrast=mats["contrast"],
            interpolated=mats["interpolated"].astype(bool),
            metrics=_nan_for_none(meta["metrics"]),
            metadata=meta["metadata"],
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: missing or malformed field ({exc})") from exc


def load_truth(path: PathLike) -> ComplexJsa:
    """Reference JSA from a dataset (its ground truth) or a result (its assembled JSA)."""
    path = Path(path)
    try:
        kind = json.loads(path.read_text(encoding="utf-8")).get("kind")
    except (json.JSONDecodeError, AttributeError) as exc:
        raise SchemaError(f"{path}: not a dataset or result file") from exc
    if kind == "reconstruction_result":
        return load_result(path).complex_jsa
    if kind == "scan_dataset":
        meta = _read_json(path, "scan_dataset")
        truth = _truth_from(path, _grid_from(meta["grid"]), meta["ground_truth"])
        if truth is None:
            raise SchemaError(f"{path}: dataset carries no ground truth")
        return truth
    raise SchemaError(f"{path}: not a dataset or result file")


def save_metrics(metrics: dict, path: PathLike) -> Path:
    return atomic_write_text(path, dumps_json(metrics))
