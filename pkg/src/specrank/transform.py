"""Invertible band-space transforms for the low-rank regularizer.

The nuclear-norm penalty can be applied either to the spectra directly or to
an orthonormal transform of the band axis.  Both choices are exactly
invertible and norm preserving, so a proximal step computed in transform
coordinates maps back to band space without bias.
"""

from __future__ import annotations

import enum

import numpy as np
from scipy.fft import dct, idct

from .errors import DimensionError
from .forward_model import SpectralCube


class TransformKind(enum.Enum):
    IDENTITY = "identity"
    SPECTRAL_DCT = "dct"


def analyze(y: SpectralCube, kind: TransformKind) -> np.ndarray:
    """Map a cube into transform coordinates along the band axis."""
    if kind is TransformKind.IDENTITY:
        return y.data.copy()
    if kind is TransformKind.SPECTRAL_DCT:
        return dct(y.data, type=2, axis=0, norm="ortho")
    raise ValueError(f"unknown transform kind: {kind!r}")


def synthesize(u: np.ndarray, kind: TransformKind, h: int, w: int) -> SpectralCube:
    """Invert :func:`analyze`, returning a cube with spatial dims (h, w)."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise DimensionError(f"expected a B x N matrix, got shape {u.shape}")
    if kind is TransformKind.IDENTITY:
        return SpectralCube(u, h, w)
    if kind is TransformKind.SPECTRAL_DCT:
        return SpectralCube(idct(u, type=2, axis=0, norm="ortho"), h, w)
    raise ValueError(f"unknown transform kind: {kind!r}")
