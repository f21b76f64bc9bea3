"""Scalar image-quality measures used by the sweep manifest and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .core import DomainError, ReconstructionVolume
from .scenes import Z_BAR, Z_DIAGONAL_WIDTH, Z_SIZE, z_glyph_mask


def front_glyph_mask(vol: ReconstructionVolume, size: float = Z_SIZE, bar: float = Z_BAR,
                     diagonal: float = Z_DIAGONAL_WIDTH) -> np.ndarray:
    """Z-glyph footprint sampled on the volume's ``(x, y)`` voxel centers."""
    xs, ys, _ = vol.axes()
    x, y = np.meshgrid(xs, ys, indexing="ij")
    return z_glyph_mask(x, y, size, bar, diagonal)


def glyph_contrast(mip: np.ndarray, mask: np.ndarray) -> float:
    """Mean over the glyph divided by mean over the background."""
    bg = mip[~mask].mean()
    return float(mip[mask].mean() / bg) if bg > 0 else float("inf")


def glyph_fraction_above(mip: np.ndarray, mask: np.ndarray, factor: float = 3.0) -> float:
    """Fraction of glyph pixels brighter than ``factor`` times the background median."""
    thresh = factor * np.median(mip[~mask])
    return float(np.mean(mip[mask] > thresh))


def column_depths(vol: ReconstructionVolume, mask: np.ndarray | None = None) -> np.ndarray:
    """Depth of the intensity maximum for every ``(x, y)`` column (optionally masked)."""
    zs = vol.axes()[2]
    depth = zs[np.argmax(vol.data, axis=2)]
    return depth[mask] if mask is not None else depth


def peak_intensity(vol: ReconstructionVolume) -> float:
    return float(vol.data.max())


def plane_peak(vol: ReconstructionVolume, z: float, half_width: float | None = None) -> float:
    """Maximum over voxel slices whose centers lie within ``half_width`` of depth ``z``.

    ``half_width`` defaults to one voxel pitch, so a plane falling between two
    slices is covered by both.
    """
    zs = vol.axes()[2]
    hw = vol.pitch[2] if half_width is None else half_width
    sel = np.abs(zs - z) <= hw
    if not sel.any():
        sel = np.abs(zs - z) == np.abs(zs - z).min()
    return float(vol.data[:, :, sel].max())


def fwhm(coords, profile) -> float:
    """Full width at half maximum of a single-peaked 1-D profile.

    Half-maximum crossings are located by linear interpolation on either side
    of the peak sample.
    """
    x = np.asarray(coords, dtype=np.float64)
    p = np.asarray(profile, dtype=np.float64)
    i = int(np.argmax(p))
    half = 0.5 * p[i]
    if not half > 0:
        raise DomainError("profile has no positive peak")
    lo = i
    while lo > 0 and p[lo - 1] > half:
        lo -= 1
    hi = i
    while hi < p.size - 1 and p[hi + 1] > half:
        hi += 1
    if lo == 0 or hi == p.size - 1:
        raise DomainError("profile does not fall to half maximum inside the window")
    left = x[lo - 1] + (half - p[lo - 1]) * (x[lo] - x[lo - 1]) / (p[lo] - p[lo - 1])
    right = x[hi] + (half - p[hi]) * (x[hi + 1] - x[hi]) / (p[hi + 1] - p[hi])
    return float(right - left)
