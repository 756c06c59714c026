"""Heatmap rendering of grid matrices.

Colormaps are fixed per matrix kind so renders are reproducible:

=============  ==========  ==================================
kind           colormap    scale
=============  ==========  ==================================
modulus        viridis     [0, max]
real / imag    RdBu_r      symmetric about 0
phase_class    cividis     [0, pi]; undetermined nodes blank
contrast       viridis     [0, max]
generic        viridis     [min, max]
=============  ==========  ==================================

Each PNG gets a sidecar JSON (``<png>.json``) with the colormap name and
the colour scale limits.
"""

from __future__ import annotations

import io
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .storage import PathLike, atomic_write_bytes, atomic_write_text, dumps_json, read_grid_matrix

__all__ = ["COLORMAPS", "infer_kind", "render_matrix", "render_file"]

COLORMAPS = {
    "modulus": "viridis",
    "contrast": "viridis",
    "real": "RdBu_r",
    "imag": "RdBu_r",
    "phase_class": "cividis",
    "generic": "viridis",
}


def infer_kind(path: PathLike) -> str:
    """Matrix kind from a ``<stem>_<kind>.csv`` file name."""
    stem = Path(path).stem
    for kind in ("phase_class", "modulus", "contrast", "real", "imag"):
        if stem.endswith("_" + kind) or stem == kind:
            return kind
    return "generic"


def _limits(matrix: np.ndarray, kind: str) -> tuple[float, float]:
    finite = matrix[np.isfinite(matrix)]
    if finite.size == 0:
        return (0.0, 1.0)
    lo, hi = float(finite.min()), float(finite.max())
    if kind in ("real", "imag"):
        m = max(abs(lo), abs(hi)) or 1.0
        return (-m, m)
    if kind == "phase_class":
        return (0.0, math.pi)
    if kind in ("modulus", "contrast"):
        return (0.0, hi if hi > 0 else 1.0)
    return (lo, hi) if hi > lo else (lo - 0.5, hi + 0.5)


def render_matrix(
    matrix: np.ndarray,
    lam_s: np.ndarray,
    lam_i: np.ndarray,
    out: PathLike,
    kind: str = "generic",
    title: Optional[str] = None,
) -> dict:
    """Render ``matrix`` (signal along rows) to ``out``; returns the sidecar dict.

    The signal wavelength is drawn on the horizontal axis and the idler on
    the vertical axis.
    """
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    matrix = np.asarray(matrix, dtype=float)
    cmap_name = COLORMAPS.get(kind, COLORMAPS["generic"])
    vmin, vmax = _limits(matrix, kind)
    finite = matrix[np.isfinite(matrix)]

    def edges(axis):
        if axis.size == 1:
            return axis[0] - 0.5, axis[0] + 0.5
        half = 0.5 * abs(axis[1] - axis[0])
        return float(axis.min() - half), float(axis.max() + half)

    x0, x1 = edges(np.asarray(lam_s))
    y0, y1 = edges(np.asarray(lam_i))
    fig, ax = plt.subplots(figsize=(5.2, 4.4), dpi=120)
    image = ax.imshow(
        np.ma.masked_invalid(matrix).T,
        origin="lower",
        extent=(x0, x1, y0, y1),
        cmap=cmap_name,
        vmin=vmin,
        vmax=vmax,
        aspect="auto",
        interpolation="nearest",
    )
    ax.set_xlabel("signal wavelength (nm)")
    ax.set_ylabel("idler wavelength (nm)")
    if title:
        ax.set_title(title)
    fig.colorbar(image, ax=ax, label=kind.replace("_", " "))
    fig.tight_layout()

    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    atomic_write_bytes(out, buf.getvalue())

    sidecar = {
        "kind": kind,
        "colormap": cmap_name,
        "vmin": vmin,
        "vmax": vmax,
        "data_min": float(finite.min()) if finite.size else None,
        "data_max": float(finite.max()) if finite.size else None,
        "x_axis": "signal wavelength (nm)",
        "y_axis": "idler wavelength (nm)",
    }
    atomic_write_text(str(out) + ".json", dumps_json(sidecar))
    return sidecar


def render_file(matrix_path: PathLike, out: Optional[PathLike] = None, kind: Optional[str] = None) -> Path:
    """Render a grid-matrix CSV; the PNG defaults to the CSV path with ``.png``."""
    matrix_path = Path(matrix_path)
    lam_s, lam_i, matrix = read_grid_matrix(matrix_path)
    kind = kind or infer_kind(matrix_path)
    out = Path(out) if out is not None else matrix_path.with_suffix(".png")
    render_matrix(matrix, lam_s, lam_i, out, kind=kind, title=matrix_path.stem)
    return out
