"""Extinction compensation and volume-to-image projections."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .core import DomainError, MediumParams, ReconstructionVolume, vec3

VIEWS = {"front": 2, "lateral": 0, "top": 1}


def extinction_factor(d, medium: MediumParams):
    """Per-voxel gain ``(1 - albedo e^{-d albedo}) / e^{-d mu_t}``.

    ``d`` is the distance from the relay-wall center.  The numerator mixes
    the unitless albedo with a length, exactly as the published filter does.
    """
    d = np.asarray(d, dtype=np.float64)
    a = medium.albedo
    out = (1.0 - a * np.exp(-d * a)) / np.exp(-d * medium.mu_t)
    return float(out) if out.ndim == 0 else out


def extinction_filter(vol: ReconstructionVolume, medium: MediumParams, relay_center) -> ReconstructionVolume:
    """Scale every voxel by :func:`extinction_factor`; returns a new volume."""
    d = np.linalg.norm(vol.centers() - vec3(relay_center), axis=-1)
    return vol.with_data(vol.data * extinction_factor(d, medium), filtered=True)


def max_intensity_projection(vol: ReconstructionVolume, view: str = "front") -> np.ndarray:
    """Maximum along the view axis.

    ``front`` collapses depth (z) and returns ``(n_x, n_y)``; ``lateral``
    collapses x and returns ``(n_y, n_z)``; ``top`` collapses y and returns
    ``(n_x, n_z)``.
    """
    if view not in VIEWS:
        raise DomainError(f"unknown view {view!r}; expected one of {', '.join(VIEWS)}")
    return vol.data.max(axis=VIEWS[view])


_BIG = np.finfo(np.float64).max / 256.0


def normalize_image(img) -> np.ndarray:
    """Map ``[0, max]`` linearly onto ``[0, 255]`` with round-half-up."""
    img = np.asarray(img, dtype=np.float64)
    peak = img.max() if img.size else 0.0
    if not peak > 0:
        return np.zeros(img.shape, dtype=np.uint8)
    img = np.clip(img, 0.0, None)
    # x * 255 / max in that order: 255 / max overflows for subnormal peaks
    scaled = img * 255.0 / peak if peak < _BIG else img / peak * 255.0
    return np.floor(scaled + 0.5).clip(0, 255).astype(np.uint8)


def image_rows(img8: np.ndarray) -> np.ndarray:
    """Raster order for display: first axis runs left to right, second bottom to top."""
    return np.ascontiguousarray(img8.T[::-1])


def write_pgm(path, img8: np.ndarray, comment: str = "") -> None:
    """Binary 8-bit PGM (P5); ``img8`` is indexed ``(column, row-from-bottom)``."""
    rows = image_rows(np.asarray(img8, dtype=np.uint8))
    h, w = rows.shape
    header = b"P5\n"
    for line in comment.splitlines():
        header += b"# " + line.encode("ascii", "replace") + b"\n"
    header += f"{w} {h}\n255\n".encode("ascii")
    _atomic_write(Path(path), header + rows.tobytes())


def read_pgm(path) -> tuple[np.ndarray, list[str]]:
    """Inverse of :func:`write_pgm`; returns the image in the same indexing and the comments."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise DomainError(f"{path}: not a binary PGM")
    pos = 2
    tokens: list[bytes] = []
    comments: list[str] = []
    while len(tokens) < 3:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            end = raw.index(b"\n", pos)
            comments.append(raw[pos + 1:end].decode("ascii").strip())
            pos = end + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    pos += 1
    w, h, _ = (int(t) for t in tokens)
    rows = np.frombuffer(raw[pos:pos + w * h], dtype=np.uint8).reshape(h, w)
    return np.ascontiguousarray(rows[::-1].T), comments


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        # mkstemp creates 0600; give the result the usual umask-derived mode
        mask = os.umask(0)
        os.umask(mask)
        os.chmod(tmp, 0o666 & ~mask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
