"""Hidden-scene geometry and the built-in presets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import NlosError, MediumParams, RelayWall, Vec3, vec3

# Desk-scale relay wall: 2.4 m square sampled 32 x 32 gives a 7.5 cm pitch
# and a 0.3 m default wavelength.
DEFAULT_WALL_SIZE = 2.4
DEFAULT_GRID = 32

Z_DEPTH = 2.0
Z_SIZE = 1.0
Z_BAR = 0.3
Z_DIAGONAL_WIDTH = 0.6
SHELF_DEPTH = 1.8
ROOM_WIDTH = 3.0
ROOM_HEIGHT = 2.2


class SceneError(NlosError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Primitive:
    """Two-sided Lambertian parallelogram (or triangle) ``p0 + a e1 + b e2``."""

    p0: Vec3
    e1: Vec3
    e2: Vec3
    albedo: float = 1.0
    triangle: bool = False

    def __post_init__(self):
        object.__setattr__(self, "p0", vec3(self.p0))
        object.__setattr__(self, "e1", vec3(self.e1))
        object.__setattr__(self, "e2", vec3(self.e2))
        if not 0.0 <= self.albedo <= 1.0:
            raise SceneError(f"primitive albedo must lie in [0, 1], got {self.albedo}")

    @property
    def area(self) -> float:
        a = float(np.linalg.norm(np.cross(self.e1, self.e2)))
        return 0.5 * a if self.triangle else a

    @property
    def normal(self) -> Vec3:
        n = np.cross(self.e1, self.e2)
        return n / np.linalg.norm(n)

    def vertices(self) -> np.ndarray:
        if self.triangle:
            return np.array([self.p0, self.p0 + self.e1, self.p0 + self.e2])
        return np.array([self.p0, self.p0 + self.e1, self.p0 + self.e1 + self.e2, self.p0 + self.e2])

    def tessellate(self, max_side: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Split into sub-patches no longer than ``max_side`` along either edge.

        Returns centers ``(m, 3)``, areas ``(m,)`` and the shared unit normal.
        """
        if self.area <= 0.0:
            raise SceneError("zero-area primitive")
        na = max(1, int(np.ceil(np.linalg.norm(self.e1) / max_side)))
        nb = max(1, int(np.ceil(np.linalg.norm(self.e2) / max_side)))
        a = (np.arange(na) + 0.5) / na
        b = (np.arange(nb) + 0.5) / nb
        A, B = np.meshgrid(a, b, indexing="ij")
        A, B = A.ravel(), B.ravel()
        cell = float(np.linalg.norm(np.cross(self.e1, self.e2))) / (na * nb)
        if self.triangle:
            # Cells straddling the hypotenuse get a fractional area from a
            # sub-sampled coverage estimate; cells fully outside are dropped.
            s = (np.arange(4) + 0.5) / 4
            da, db = np.meshgrid(s / na, s / nb, indexing="ij")
            cov = ((A[:, None] - 0.5 / na + da.ravel()) + (B[:, None] - 0.5 / nb + db.ravel()) <= 1.0).mean(axis=1)
            keep = cov > 0
            A, B, cov = A[keep], B[keep], cov[keep]
            areas = cell * cov
        else:
            areas = np.full(A.size, cell)
        centers = self.p0 + A[:, None] * self.e1 + B[:, None] * self.e2
        return centers, areas, self.normal


def quad(corner, e1, e2, albedo=1.0) -> Primitive:
    return Primitive(corner, e1, e2, albedo)


def box_quads(lo, hi, albedo: float) -> list[Primitive]:
    """Six faces of an axis-aligned box."""
    lo, hi = vec3(lo), vec3(hi)
    dx, dy, dz = hi - lo
    ex, ey, ez = vec3(dx, 0, 0), vec3(0, dy, 0), vec3(0, 0, dz)
    return [
        quad(lo, ey, ez, albedo),
        quad(lo + ex, ey, ez, albedo),
        quad(lo, ex, ez, albedo),
        quad(lo + ey, ex, ez, albedo),
        quad(lo, ex, ey, albedo),
        quad(lo + ez, ex, ey, albedo),
    ]


@dataclass(eq=False)
class SceneDescription:
    """Relay wall, hidden geometry and the homogeneous medium filling ``bounds``.

    ``bounds`` is the axis-aligned box ``(lo, hi)`` that the medium (and every
    light path) is confined to; the relay wall lies on its ``lo`` z-face.
    """

    wall: RelayWall
    primitives: list[Primitive]
    medium: MediumParams
    sensor: Vec3
    bounds: tuple[Vec3, Vec3]
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sensor = vec3(self.sensor)
        self.bounds = (vec3(self.bounds[0]), vec3(self.bounds[1]))
        if not self.wall.contains(self.sensor):
            raise SceneError("sensor must lie on the relay-wall rectangle")
        n = self.wall.normal
        for k, prim in enumerate(self.primitives):
            if prim.area <= 0.0:
                raise SceneError(f"primitive {k} has zero area")
            if np.any((prim.vertices() - self.wall.origin) @ n <= 0.0):
                raise SceneError(f"primitive {k} does not lie strictly on the medium side of the wall")

    def with_medium(self, medium: MediumParams) -> "SceneDescription":
        return SceneDescription(
            self.wall, list(self.primitives), medium, self.sensor, self.bounds, self.name, dict(self.metadata)
        )

    def packed(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Arrays for the compiled tracer: p0, e1, e2 ``(m, 3)``, albedo, triangle flag."""
        m = len(self.primitives)
        p0 = np.zeros((m, 3))
        e1 = np.zeros((m, 3))
        e2 = np.zeros((m, 3))
        alb = np.zeros(m)
        tri = np.zeros(m, dtype=np.bool_)
        for k, p in enumerate(self.primitives):
            p0[k], e1[k], e2[k], alb[k], tri[k] = p.p0, p.e1, p.e2, p.albedo, p.triangle
        return p0, e1, e2, alb, tri


def z_glyph(depth: float = Z_DEPTH, size: float = Z_SIZE, bar: float = Z_BAR,
            diagonal: float = Z_DIAGONAL_WIDTH, albedo: float = 1.0) -> list[Primitive]:
    """Flat Z made of two horizontal bars and a diagonal parallelogram, facing the wall."""
    h = 0.5 * size
    top = quad((-h, h - bar, depth), (size, 0, 0), (0, bar, 0), albedo)
    bottom = quad((-h, -h, depth), (size, 0, 0), (0, bar, 0), albedo)
    diag = quad((-h, -h + bar, depth), (diagonal, 0, 0), (size - diagonal, size - 2 * bar, 0), albedo)
    return [top, bottom, diag]


def z_glyph_mask(x, y, size: float = Z_SIZE, bar: float = Z_BAR, diagonal: float = Z_DIAGONAL_WIDTH):
    """Boolean mask of lateral positions covered by the Z glyph."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    h = 0.5 * size
    inside = (np.abs(x) <= h) & (np.abs(y) <= h)
    bars = inside & ((y >= h - bar) | (y <= -h + bar))
    # diagonal parallelogram: left edge runs from (-h, -h+bar) along (size-diagonal, size-2 bar)
    frac = (y - (-h + bar)) / (size - 2 * bar)
    left = -h + frac * (size - diagonal)
    diag = inside & (frac >= 0) & (frac <= 1) & (x >= left) & (x <= left + diagonal)
    return bars | diag


def _shelf_geometry(depth: float) -> list[Primitive]:
    w, hgt = ROOM_WIDTH, ROOM_HEIGHT
    eps = 1e-3
    room = [
        quad((-w / 2, -hgt / 2, depth), (w, 0, 0), (0, hgt, 0), 0.5),  # back wall
        quad((-w / 2, -hgt / 2, eps), (0, hgt, 0), (0, 0, depth - eps), 0.5),
        quad((w / 2, -hgt / 2, eps), (0, hgt, 0), (0, 0, depth - eps), 0.5),
        quad((-w / 2, -hgt / 2, eps), (w, 0, 0), (0, 0, depth - eps), 0.5),  # floor
        quad((-w / 2, hgt / 2, eps), (w, 0, 0), (0, 0, depth - eps), 0.5),  # ceiling
    ]
    shelf_w, shelf_d, shelf_h = 1.2, 0.35, 1.6
    front = depth - shelf_d
    parts = [
        quad((-shelf_w / 2, -shelf_h / 2, front), (0, shelf_h, 0), (0, 0, shelf_d - eps), 0.8),
        quad((shelf_w / 2, -shelf_h / 2, front), (0, shelf_h, 0), (0, 0, shelf_d - eps), 0.8),
    ]
    for y in np.linspace(-shelf_h / 2, shelf_h / 2, 4):
        parts.append(quad((-shelf_w / 2, float(y), front), (shelf_w, 0, 0), (0, 0, shelf_d - eps), 0.8))
    return room + parts


PRESETS = ("z_letter", "shelf", "point_target")


def preset_scene(name: str, medium: MediumParams | None = None, grid: int = DEFAULT_GRID,
                 wall_size: float = DEFAULT_WALL_SIZE) -> SceneDescription:
    """Build one of the built-in scenes.

    The relay wall is a ``wall_size`` square in the z = 0 plane with the
    sensor at its center; the hidden scene extends towards +z.
    """
    medium = medium if medium is not None else MediumParams()
    wall = RelayWall.square(wall_size, grid)
    sensor = wall.centroid
    if name == "z_letter":
        prims = z_glyph()
        bounds = ((-2.0, -2.0, 0.0), (2.0, 2.0, 3.0))
        meta = {"depth": Z_DEPTH, "glyph_size": Z_SIZE, "bar": Z_BAR, "diagonal": Z_DIAGONAL_WIDTH}
    elif name == "shelf":
        prims = _shelf_geometry(SHELF_DEPTH)
        bounds = ((-ROOM_WIDTH / 2, -ROOM_HEIGHT / 2, 0.0), (ROOM_WIDTH / 2, ROOM_HEIGHT / 2, SHELF_DEPTH))
        meta = {"depth": SHELF_DEPTH, "room": (ROOM_WIDTH, ROOM_HEIGHT, SHELF_DEPTH)}
    elif name == "point_target":
        side = default_wavelength(wall) / 4.0
        prims = [quad((-side / 2, -side / 2, Z_DEPTH), (side, 0, 0), (0, side, 0), 1.0)]
        bounds = ((-2.0, -2.0, 0.0), (2.0, 2.0, 3.0))
        meta = {"depth": Z_DEPTH, "side": side}
    else:
        raise SceneError(f"unknown scene {name!r}; presets: {', '.join(PRESETS)}")
    return SceneDescription(wall, prims, medium, sensor, bounds, name, meta)


def default_wavelength(wall: RelayWall) -> float:
    return 4.0 * wall.pitch
