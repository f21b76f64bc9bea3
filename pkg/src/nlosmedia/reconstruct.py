"""Phasor-field virtual time-gated camera.

The impulse response of every relay-wall sample is convolved once with the
complex Gaussian pulse (:func:`convolve_pulse`).  Focusing on a voxel then
needs only a delayed lookup per wall sample: by the shift theorem, delaying
the emitted pulse by ``|x_v - x_p| / c`` and gating the sensor at
``|x_v - x_c| / c`` equals evaluating the convolved response at
``t_f = (|x_v - x_p| + |x_v - x_c|) / c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft
from numba import njit, prange

from .core import (
    SPEED_OF_LIGHT,
    DomainError,
    ImpulseResponse,
    PhasorPulse,
    ReconstructionVolume,
    RelayWall,
    Vec3,
    vec3,
)
from .simulate import configure_threads

FALLOFF_MODES = ("gamma", "per-sample")
INTERP_MODES = ("linear", "cubic")


@dataclass(eq=False)
class PhasorResponse:
    """Impulse response convolved with the phasor pulse; complex ``(n_u, n_v, n_bins)``."""

    wall: RelayWall
    sensor: Vec3
    bin_width: float
    t_start: float
    data: np.ndarray
    pulse: PhasorPulse

    @property
    def n_bins(self) -> int:
        return self.data.shape[2]

    def bin_centers(self) -> np.ndarray:
        return self.t_start + (np.arange(self.n_bins) + 0.5) * self.bin_width


@dataclass(frozen=True)
class VolumeGrid:
    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]
    counts: tuple[int, int, int]

    def __post_init__(self):
        lo, hi = np.asarray(self.min_corner, float), np.asarray(self.max_corner, float)
        if lo.shape != (3,) or hi.shape != (3,) or len(self.counts) != 3:
            raise DomainError("volume grid needs 3-D corners and three voxel counts")
        if not np.all(hi > lo):
            raise DomainError("max_corner must strictly dominate min_corner")
        if min(int(c) for c in self.counts) < 1:
            raise DomainError("voxel counts must be >= 1")

    def empty(self) -> ReconstructionVolume:
        return ReconstructionVolume(self.min_corner, self.max_corner, np.zeros(tuple(int(c) for c in self.counts)))


def make_pulse(wall: RelayWall, lambda_factor: float = 4.0, cycles: float = 4.0,
               lambda_override: float | None = None) -> PhasorPulse:
    """Pulse with wavelength ``lambda_factor`` times the wall sampling pitch."""
    wavelength = lambda_override if lambda_override is not None else lambda_factor * wall.pitch
    if not wavelength > 0:
        raise DomainError(f"wavelength must be > 0, got {wavelength}")
    return PhasorPulse(wavelength=float(wavelength), cycles=float(cycles), t0=0.0)


# taps reach 6 sigma either side, where the envelope is exp(-18) ~ 1.5e-8
TAP_SIGMAS = 6.0


def pulse_taps(pulse: PhasorPulse, bin_width: float) -> tuple[np.ndarray, int]:
    """Kernel sampled at ``k * bin_width`` for ``|k| <= half``; returns (taps, half)."""
    half = int(math.ceil(TAP_SIGMAS * pulse.sigma / bin_width))
    return pulse.kernel(np.arange(-half, half + 1) * bin_width), half


def convolve_pulse(h: ImpulseResponse, pulse: PhasorPulse) -> PhasorResponse:
    """Linear convolution of every histogram with the complex pulse.

    ``out[..., n] = sum_m h[..., m] * kernel((n - m) * bin_width)``, computed
    with zero-padded FFTs so there is no circular wrap-around.
    """
    span = h.n_bins * h.bin_width
    if 6.0 * pulse.sigma > span:
        raise DomainError(
            f"pulse envelope support {6 * pulse.sigma:.3e} s exceeds histogram span {span:.3e} s"
        )
    taps, half = pulse_taps(pulse, h.bin_width)
    n = h.n_bins
    n_fft = scipy.fft.next_fast_len(n + taps.size - 1)
    data = np.asarray(h.data, dtype=np.float64)
    spec = scipy.fft.fft(data, n_fft, axis=-1, workers=-1)
    spec *= scipy.fft.fft(taps, n_fft)
    full = scipy.fft.ifft(spec, axis=-1, workers=-1)
    return PhasorResponse(h.wall, h.sensor, h.bin_width, h.t_start, full[..., half:half + n], pulse)


def _baseband(pr: PhasorResponse) -> np.ndarray:
    # remove the carrier so the remaining envelope is smooth between bins
    rot = np.exp(-1j * pr.pulse.omega * pr.bin_centers())
    return np.ascontiguousarray((pr.data * rot).reshape(-1, pr.n_bins))


@njit(parallel=True, cache=True)
def _bp_kernel(base, lasers, sensor, centroid, points, omega, k, t_start, bin_width,
               cubic, per_sample, amp, n_valid):
    n_bins = base.shape[1]
    n_lasers = lasers.shape[0]
    inv_c = 1.0 / SPEED_OF_LIGHT
    for v in prange(points.shape[0]):
        px, py, pz = points[v, 0], points[v, 1], points[v, 2]
        rc = math.sqrt((px - sensor[0]) ** 2 + (py - sensor[1]) ** 2 + (pz - sensor[2]) ** 2)
        gam = 1.0 / math.sqrt((px - centroid[0]) ** 2 + (py - centroid[1]) ** 2 + (pz - centroid[2]) ** 2)
        acc_re = 0.0
        acc_im = 0.0
        count = 0
        for l in range(n_lasers):
            rp = math.sqrt((px - lasers[l, 0]) ** 2 + (py - lasers[l, 1]) ** 2 + (pz - lasers[l, 2]) ** 2)
            tf = (rp + rc) * inv_c
            u = (tf - t_start) / bin_width - 0.5
            n = int(math.floor(u))
            if n < 0 or n + 1 >= n_bins:
                continue
            f = u - n
            if cubic and n >= 1 and n + 2 < n_bins:
                # 4-point Lagrange weights on nodes -1, 0, 1, 2
                fm = f - 1.0
                fp = f + 1.0
                f2 = f - 2.0
                w0 = -f * fm * f2 / 6.0
                w1 = fp * fm * f2 / 2.0
                w2 = -fp * f * f2 / 2.0
                w3 = fp * f * fm / 6.0
                b = w0 * base[l, n - 1] + w1 * base[l, n] + w2 * base[l, n + 1] + w3 * base[l, n + 2]
            else:
                b = (1.0 - f) * base[l, n] + f * base[l, n + 1]
            ph = omega * tf
            cr = math.cos(ph)
            ci = math.sin(ph)
            re = b.real * cr - b.imag * ci
            im = b.real * ci + b.imag * cr
            if per_sample:
                re /= rp
                im /= rp
            acc_re += re
            acc_im += im
            count += 1
        # camera-side RSD kernel exp(i k r_c) / r_c and aperture attenuation
        scale = gam / (rc * n_lasers)
        cr = math.cos(k * rc)
        ci = math.sin(k * rc)
        amp[v] = complex(scale * (acc_re * cr - acc_im * ci), scale * (acc_re * ci + acc_im * cr))
        n_valid[v] = count


def _check_modes(falloff, interp):
    if falloff not in FALLOFF_MODES:
        raise DomainError(f"falloff must be one of {FALLOFF_MODES}, got {falloff!r}")
    if interp not in INTERP_MODES:
        raise DomainError(f"interp must be one of {INTERP_MODES}, got {interp!r}")


def backproject_points(pr: PhasorResponse, points, falloff: str = "gamma",
                       interp: str = "cubic") -> tuple[np.ndarray, np.ndarray]:
    """Focused complex amplitude at each point and the number of wall samples in span.

    ``points`` has shape ``(..., 3)``; both outputs have shape ``points.shape[:-1]``.
    """
    _check_modes(falloff, interp)
    pts = np.asarray(points, dtype=np.float64)
    shape = pts.shape[:-1]
    flat = np.ascontiguousarray(pts.reshape(-1, 3))
    offplane = (flat - pr.wall.origin) @ pr.wall.normal
    if np.any(offplane == 0.0):
        raise DomainError("voxel lies on the relay-wall plane")
    configure_threads()
    amp = np.zeros(flat.shape[0], dtype=np.complex128)
    n_valid = np.zeros(flat.shape[0], dtype=np.int64)
    lasers = np.ascontiguousarray(pr.wall.points().reshape(-1, 3))
    _bp_kernel(_baseband(pr), lasers, vec3(pr.sensor), pr.wall.centroid, flat, pr.pulse.omega, pr.pulse.k,
               pr.t_start, pr.bin_width, interp == "cubic", falloff == "per-sample", amp, n_valid)
    return amp.reshape(shape), n_valid.reshape(shape)


def backproject_voxel(pr: PhasorResponse, x_v, pulse: PhasorPulse | None = None,
                      falloff: str = "gamma", interp: str = "cubic") -> float:
    """Time-gated camera intensity ``|A|^2`` focused at one voxel.

    ``pulse`` defaults to the one ``pr`` was built with; a different pulse is
    rejected because the response was already convolved.  Returns 0 when the
    focal time falls outside the histogram for every wall sample.
    """
    if pulse is not None and pulse != pr.pulse:
        raise DomainError("pulse does not match the one used to build the phasor response")
    amp, _ = backproject_points(pr, vec3(x_v)[None, :], falloff, interp)
    return float(abs(amp[0]) ** 2)


def reconstruct_volume(h: ImpulseResponse, grid: VolumeGrid, pulse: PhasorPulse,
                       falloff: str = "gamma", interp: str = "cubic") -> ReconstructionVolume:
    """Convolve once, then focus the virtual camera on every voxel center.

    Voxels with no wall sample inside the histogram span are set to 0 and
    marked in ``flagged``.
    """
    vol = grid.empty()
    pr = convolve_pulse(h, pulse)
    amp, n_valid = backproject_points(pr, vol.centers(), falloff, interp)
    return vol.with_data(np.abs(amp) ** 2, wavelength=pulse.wavelength, cycles=pulse.cycles,
                         flagged=n_valid == 0)
