"""Shared geometry, phasor and media types plus closed-form transport kernels.

Positions and directions are plain ``numpy`` arrays of shape ``(3,)``; helpers
below build and check them.  All lengths are meters, all times seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
INV_FOUR_PI = 1.0 / (4.0 * math.pi)

Vec3 = np.ndarray


class NlosError(Exception):
    """Base class for every error raised by this package."""


class DomainError(NlosError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularityError(DomainError):
    pass


class VacuumError(DomainError):
    """Free-path sampling requested in a medium with zero extinction."""


def vec3(x, y=None, z=None) -> Vec3:
    if y is None and z is None:
        v = np.asarray(x, dtype=np.float64).reshape(3)
    else:
        v = np.array([x, y, z], dtype=np.float64)
    return v.copy()


def normalize(v) -> Vec3:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise DomainError("cannot normalize a zero-length vector")
    return v / n


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MediumParams:
    """Bulk optics of a homogeneous medium.

    ``mu_t`` is the extinction coefficient in 1/m, ``albedo`` the single
    scattering albedo and ``g`` the Henyey-Greenstein mean cosine.
    """

    mu_t: float = 0.0
    albedo: float = 0.0
    g: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.mu_t) and self.mu_t >= 0.0):
            raise DomainError(f"mu_t must be finite and >= 0, got {self.mu_t}")
        if not (0.0 <= self.albedo <= 1.0):
            raise DomainError(f"albedo must lie in [0, 1], got {self.albedo}")
        if not (-1.0 < self.g < 1.0):
            raise DomainError(f"g must lie in (-1, 1), got {self.g}")

    @property
    def mu_s(self) -> float:
        return _split_extinction(self.mu_t, self.albedo)[0]

    @property
    def mu_a(self) -> float:
        return _split_extinction(self.mu_t, self.albedo)[1]

    @property
    def is_vacuum(self) -> bool:
        return self.mu_t == 0.0


VACUUM = MediumParams()


def _split_extinction(mu_t: float, albedo: float) -> tuple[float, float]:
    """``(mu_s, mu_a)`` with ``mu_s ~= albedo * mu_t`` and ``mu_s + mu_a == mu_t`` in floating point.

    ``mu_a`` is the complement nudged by ulps.  When ``mu_s`` sits on a
    rounding tie no complement works, so ``mu_s`` itself moves by one ulp.
    """
    mu_s = albedo * mu_t
    for _ in range(3):
        a = mu_t - mu_s
        for _ in range(4):
            s = mu_s + a
            if s == mu_t:
                return mu_s, a
            a = math.nextafter(a, -math.inf if s > mu_t else math.inf)
        mu_s = math.nextafter(mu_s, 0.0)
    raise AssertionError(f"cannot split mu_t={mu_t!r} albedo={albedo!r}")


@dataclass(frozen=True)
class PhasorPulse:
    """Gaussian-windowed monochromatic virtual illumination pulse.

    The envelope full width is ``cycles * wavelength`` in path length; its
    standard deviation in time is therefore ``cycles * wavelength / (6 c)``.
    """

    wavelength: float
    cycles: float = 4.0
    t0: float = 0.0

    def __post_init__(self):
        if not (self.wavelength > 0.0 and math.isfinite(self.wavelength)):
            raise DomainError(f"wavelength must be > 0, got {self.wavelength}")
        if not self.cycles > 0.0:
            raise DomainError(f"cycles must be > 0, got {self.cycles}")

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * SPEED_OF_LIGHT / self.wavelength

    @property
    def sigma(self) -> float:
        return self.cycles * self.wavelength / (6.0 * SPEED_OF_LIGHT)

    def kernel(self, t) -> np.ndarray:
        """Complex pulse ``exp(i w t) exp(-(t - t0)^2 / 2 sigma^2)``."""
        t = np.asarray(t, dtype=np.float64)
        return np.exp(1j * self.omega * t) * np.exp(-((t - self.t0) ** 2) / (2.0 * self.sigma**2))


@dataclass(frozen=True, eq=False)
class RelayWall:
    """Planar rectangular relay surface sampled on a uniform grid.

    Sample ``(i, j)`` sits at ``origin + (i+.5)/n_u * u_axis + (j+.5)/n_v * v_axis``.
    The medium side is along ``normal = unit(u_axis x v_axis)``.
    """

    origin: Vec3
    u_axis: Vec3
    v_axis: Vec3
    n_u: int
    n_v: int

    def __post_init__(self):
        object.__setattr__(self, "origin", _frozen(vec3(self.origin)))
        object.__setattr__(self, "u_axis", _frozen(vec3(self.u_axis)))
        object.__setattr__(self, "v_axis", _frozen(vec3(self.v_axis)))
        if int(self.n_u) < 1 or int(self.n_v) < 1:
            raise DomainError("relay wall needs at least one sample per axis")
        object.__setattr__(self, "n_u", int(self.n_u))
        object.__setattr__(self, "n_v", int(self.n_v))
        lu = np.linalg.norm(self.u_axis)
        lv = np.linalg.norm(self.v_axis)
        if lu == 0 or lv == 0:
            raise DomainError("relay wall axes must be non-zero")
        if abs(float(np.dot(self.u_axis, self.v_axis))) > 1e-9 * lu * lv:
            raise DomainError("relay wall axes must be orthogonal")
        pu, pv = lu / self.n_u, lv / self.n_v
        if abs(pu - pv) > 1e-9 * max(pu, pv):
            raise DomainError(f"relay wall grid is not uniform: pitch {pu} vs {pv}")

    @classmethod
    def square(cls, size: float, n: int, center=(0.0, 0.0, 0.0)) -> "RelayWall":
        """Axis-aligned square wall in the z = center_z plane, medium towards +z."""
        c = vec3(center)
        half = 0.5 * size
        return cls(c - [half, half, 0.0], [size, 0.0, 0.0], [0.0, size, 0.0], n, n)

    @property
    def pitch(self) -> float:
        return float(np.linalg.norm(self.u_axis)) / self.n_u

    @property
    def normal(self) -> Vec3:
        return normalize(np.cross(self.u_axis, self.v_axis))

    @property
    def centroid(self) -> Vec3:
        return self.origin + 0.5 * self.u_axis + 0.5 * self.v_axis

    def points(self) -> np.ndarray:
        """Sample positions, shape ``(n_u, n_v, 3)``."""
        a = (np.arange(self.n_u) + 0.5) / self.n_u
        b = (np.arange(self.n_v) + 0.5) / self.n_v
        return (
            self.origin[None, None, :]
            + a[:, None, None] * self.u_axis[None, None, :]
            + b[None, :, None] * self.v_axis[None, None, :]
        )

    def contains(self, p, tol: float = 1e-9) -> bool:
        d = vec3(p) - self.origin
        if abs(float(np.dot(d, self.normal))) > tol:
            return False
        a = np.dot(d, self.u_axis) / np.dot(self.u_axis, self.u_axis)
        b = np.dot(d, self.v_axis) / np.dot(self.v_axis, self.v_axis)
        return -tol <= a <= 1 + tol and -tol <= b <= 1 + tol

    def __eq__(self, other):
        if not isinstance(other, RelayWall):
            return NotImplemented
        return (
            self.n_u == other.n_u
            and self.n_v == other.n_v
            and np.array_equal(self.origin, other.origin)
            and np.array_equal(self.u_axis, other.u_axis)
            and np.array_equal(self.v_axis, other.v_axis)
        )


@dataclass(eq=False)
class ImpulseResponse:
    """Time-binned transport ``H(x_p -> x_c, t)`` for every relay-wall sample.

    ``data`` has shape ``(n_u, n_v, n_bins)``; bin ``n`` covers
    ``[t_start + n*bin_width, t_start + (n+1)*bin_width)``.
    """

    wall: RelayWall
    sensor: Vec3
    bin_width: float
    data: np.ndarray
    t_start: float = 0.0
    medium: MediumParams = VACUUM
    scene_name: str = ""
    overflow: float = 0.0
    stats: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.sensor = vec3(self.sensor)
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or self.data.shape[:2] != (self.wall.n_u, self.wall.n_v):
            raise DomainError(
                f"impulse data shape {self.data.shape} does not match wall grid "
                f"({self.wall.n_u}, {self.wall.n_v}, n_bins)"
            )
        if self.data.shape[2] < 1:
            raise DomainError("impulse response needs at least one bin")
        if not self.bin_width > 0:
            raise DomainError("bin_width must be > 0")

    @property
    def n_bins(self) -> int:
        return self.data.shape[2]

    def bin_centers(self) -> np.ndarray:
        return self.t_start + (np.arange(self.n_bins) + 0.5) * self.bin_width

    def total_energy(self) -> float:
        return float(np.sum(self.data, dtype=np.float64))


@dataclass(eq=False)
class ReconstructionVolume:
    """Voxel grid of intensities; ``data`` has shape ``(n_x, n_y, n_z)``.

    Voxel centers sit at ``min + (idx + .5) * (max - min) / n`` per axis.
    """

    min_corner: Vec3
    max_corner: Vec3
    data: np.ndarray
    wavelength: float = 0.0
    cycles: float = 0.0
    filtered: bool = False
    flagged: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.min_corner = vec3(self.min_corner)
        self.max_corner = vec3(self.max_corner)
        self.data = np.asarray(self.data)
        if not np.all(self.max_corner > self.min_corner):
            raise DomainError("max_corner must strictly dominate min_corner")
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise DomainError(f"volume data must be a non-empty 3-D array, got {self.data.shape}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def pitch(self) -> np.ndarray:
        return (self.max_corner - self.min_corner) / np.array(self.data.shape)

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(
            self.min_corner[a] + (np.arange(self.data.shape[a]) + 0.5) * self.pitch[a] for a in range(3)
        )

    def centers(self) -> np.ndarray:
        """Voxel centers, shape ``(n_x, n_y, n_z, 3)``."""
        xs, ys, zs = self.axes()
        return np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1)

    def with_data(self, data, **changes) -> "ReconstructionVolume":
        kw = dict(
            min_corner=self.min_corner,
            max_corner=self.max_corner,
            data=data,
            wavelength=self.wavelength,
            cycles=self.cycles,
            filtered=self.filtered,
            flagged=self.flagged,
        )
        kw.update(changes)
        return ReconstructionVolume(**kw)


def transmittance(d, medium: MediumParams):
    """Beer-Lambert factor ``exp(-mu_t d)`` for a path of length ``d``."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise DomainError("path length must be >= 0")
    out = np.exp(-medium.mu_t * d)
    return float(out) if out.ndim == 0 else out


def hg_phase(cos_theta, g: float):
    """Henyey-Greenstein phase function value per steradian."""
    if not abs(g) < 1.0:
        raise DomainError(f"|g| must be < 1, got {g}")
    c = np.asarray(cos_theta, dtype=np.float64)
    if np.any(np.abs(c) > 1.0):
        raise DomainError("cos_theta must lie in [-1, 1]")
    out = INV_FOUR_PI * (1.0 - g * g) / (1.0 + g * g - 2.0 * g * c) ** 1.5
    return float(out) if out.ndim == 0 else out


def hg_cos_theta(g: float, u):
    """Invert the HG cosine CDF; ``g == 0`` gives ``1 - 2u``."""
    if not abs(g) < 1.0:
        raise DomainError(f"|g| must be < 1, got {g}")
    u = np.asarray(u, dtype=np.float64)
    if g == 0.0:
        out = 1.0 - 2.0 * u
    else:
        # (1 + g^2 - s^2) / 2g with s = (1 - g^2)/(1 - g xi), the 1/g cancelled by hand
        # so that small |g| does not lose every digit
        xi = 2.0 * u - 1.0
        d = 1.0 - g * xi
        out = np.clip(0.5 * g + (g - xi) * (2.0 - g * xi - g * g) / (2.0 * d * d), -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def sample_hg(g: float, u1, u2) -> np.ndarray:
    """Sample a scattered direction in the frame whose +z is the incoming axis.

    Returns shape ``(..., 3)`` matching the broadcast of ``u1`` and ``u2``.
    """
    cos_t = np.asarray(hg_cos_theta(g, u1))
    phi = 2.0 * math.pi * np.asarray(u2, dtype=np.float64)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    return np.stack(np.broadcast_arrays(sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t), axis=-1)


def sample_free_path(mu_t: float, u):
    """Distance to the next interaction, ``-ln(1-u)/mu_t``."""
    if mu_t == 0.0:
        raise VacuumError("vacuum: no interaction")
    if mu_t < 0.0:
        raise DomainError(f"mu_t must be > 0, got {mu_t}")
    out = -np.log1p(-np.asarray(u, dtype=np.float64)) / mu_t
    return float(out) if out.ndim == 0 else out


def rsd_kernel(x_s, x_d, k: float):
    """Rayleigh-Sommerfeld point kernel ``exp(i k r) / r``.

    Broadcasts over leading dimensions of ``x_s`` and ``x_d``.
    """
    r = np.linalg.norm(np.asarray(x_d, dtype=np.float64) - np.asarray(x_s, dtype=np.float64), axis=-1)
    if np.any(r == 0):
        raise SingularityError("rsd_kernel is singular at r = 0")
    out = np.exp(1j * k * r) / r
    return complex(out) if out.ndim == 0 else out


def aperture_gamma(wall: RelayWall, x_d) -> float:
    """Aperture-average attenuation ``1 / |centroid - x_d|``."""
    return 1.0 / float(np.linalg.norm(wall.centroid - vec3(x_d)))
