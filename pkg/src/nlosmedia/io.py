"""Binary containers for impulse responses and volumes, plus run configuration.

Both formats are little-endian with f64 headers and f32 payloads.

``.nlosh`` layout::

    "NLOSH1"  u32 version
    f64[9]    wall origin, u_axis, v_axis
    u32[2]    n_u, n_v
    f64[3]    sensor
    u32       n_bins
    f64[2]    bin_width, t_start
    f64[3]    mu_t, albedo, g
    u32 + ..  scene name, UTF-8, length-prefixed
    f32[...]  data in (u, v, bin) order, bins fastest

``.nlosv`` layout::

    "NLOSV1"  u32 version
    f64[6]    min corner, max corner
    u32[3]    n_x, n_y, n_z
    f64[2]    wavelength, cycles
    u8        filtered flag
    f32[...]  data with x fastest
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .core import ImpulseResponse, MediumParams, NlosError, ReconstructionVolume, RelayWall
from .postprocess import _atomic_write
from .scenes import PRESETS

NLOSH_MAGIC = b"NLOSH1"
NLOSV_MAGIC = b"NLOSV1"
FORMAT_VERSION = 1

_H_HEAD = struct.Struct("<6sI9d2I3dI2d3dI")
_V_HEAD = struct.Struct("<6sI6d3I2dB")


class FormatError(NlosError, ValueError):
    """File does not start with the expected magic or carries an unknown version."""


class TruncationError(NlosError, ValueError):
    """File ends before the header or payload is complete."""


class CountMismatchError(NlosError, ValueError):
    """Header counts are invalid or disagree with the payload length."""


class ConfigError(NlosError, ValueError):
    pass


# --------------------------------------------------------------------------- binary


def encode_h(h: ImpulseResponse) -> bytes:
    w = h.wall
    name = h.scene_name.encode("utf-8")
    head = _H_HEAD.pack(
        NLOSH_MAGIC, FORMAT_VERSION,
        *w.origin, *w.u_axis, *w.v_axis,
        w.n_u, w.n_v, *h.sensor, h.n_bins,
        h.bin_width, h.t_start,
        h.medium.mu_t, h.medium.albedo, h.medium.g,
        len(name),
    )
    payload = np.ascontiguousarray(h.data, dtype="<f4").tobytes(order="C")
    return head + name + payload


def decode_h(raw: bytes, source: str = "<bytes>") -> ImpulseResponse:
    _check_magic(raw, NLOSH_MAGIC, source)
    if len(raw) < _H_HEAD.size:
        raise TruncationError(f"{source}: header needs {_H_HEAD.size} bytes, file has {len(raw)}")
    vals = _H_HEAD.unpack_from(raw)
    _check_version(vals[1], source)
    origin, u_axis, v_axis = vals[2:5], vals[5:8], vals[8:11]
    n_u, n_v = vals[11:13]
    sensor = vals[13:16]
    n_bins = vals[16]
    bin_width, t_start = vals[17:19]
    mu_t, albedo, g = vals[19:22]
    name_len = vals[22]
    if min(n_u, n_v, n_bins) == 0:
        raise CountMismatchError(f"{source}: zero count in header (n_u={n_u}, n_v={n_v}, n_bins={n_bins})")
    pos = _H_HEAD.size
    if len(raw) < pos + name_len:
        raise TruncationError(f"{source}: scene name cut short")
    name = raw[pos:pos + name_len].decode("utf-8")
    pos += name_len
    data = _payload(raw, pos, n_u * n_v * n_bins, source).reshape(n_u, n_v, n_bins)
    wall = RelayWall(origin, u_axis, v_axis, n_u, n_v)
    return ImpulseResponse(wall, sensor, bin_width, data, t_start=t_start,
                           medium=MediumParams(mu_t, albedo, g), scene_name=name)


def encode_vol(vol: ReconstructionVolume) -> bytes:
    n_x, n_y, n_z = vol.shape
    head = _V_HEAD.pack(
        NLOSV_MAGIC, FORMAT_VERSION,
        *vol.min_corner, *vol.max_corner,
        n_x, n_y, n_z,
        vol.wavelength, vol.cycles, int(bool(vol.filtered)),
    )
    return head + np.asarray(vol.data, dtype="<f4").tobytes(order="F")


def decode_vol(raw: bytes, source: str = "<bytes>") -> ReconstructionVolume:
    _check_magic(raw, NLOSV_MAGIC, source)
    if len(raw) < _V_HEAD.size:
        raise TruncationError(f"{source}: header needs {_V_HEAD.size} bytes, file has {len(raw)}")
    vals = _V_HEAD.unpack_from(raw)
    _check_version(vals[1], source)
    lo, hi = vals[2:5], vals[5:8]
    counts = vals[8:11]
    wavelength, cycles, flag = vals[11:14]
    if min(counts) == 0:
        raise CountMismatchError(f"{source}: zero-voxel header {counts}")
    if flag > 1:
        raise FormatError(f"{source}: filtered flag must be 0 or 1, got {flag}")
    n = counts[0] * counts[1] * counts[2]
    data = _payload(raw, _V_HEAD.size, n, source).reshape(counts, order="F")
    return ReconstructionVolume(lo, hi, data, wavelength=wavelength, cycles=cycles, filtered=bool(flag))


def write_h(path, h: ImpulseResponse) -> None:
    _atomic_write(Path(path), encode_h(h))


def read_h(path) -> ImpulseResponse:
    return decode_h(Path(path).read_bytes(), str(path))


def write_vol(path, vol: ReconstructionVolume) -> None:
    _atomic_write(Path(path), encode_vol(vol))


def read_vol(path) -> ReconstructionVolume:
    return decode_vol(Path(path).read_bytes(), str(path))


def _check_magic(raw: bytes, magic: bytes, source: str) -> None:
    if len(raw) < len(magic):
        if magic.startswith(raw):
            raise TruncationError(f"{source}: file ends inside the magic")
        raise FormatError(f"{source}: expected magic {magic.decode()!r}, found {raw!r}")
    if raw[:len(magic)] != magic:
        raise FormatError(f"{source}: expected magic {magic.decode()!r}, found {raw[:len(magic)]!r}")


def _check_version(version: int, source: str) -> None:
    if version != FORMAT_VERSION:
        raise FormatError(f"{source}: unsupported version {version} (expected {FORMAT_VERSION})")


def _payload(raw: bytes, pos: int, n: int, source: str) -> np.ndarray:
    need = pos + 4 * n
    if len(raw) < need:
        raise TruncationError(f"{source}: payload needs {4 * n} bytes, found {len(raw) - pos}")
    if len(raw) > need:
        raise CountMismatchError(f"{source}: {len(raw) - need} trailing bytes beyond the {n} values in the header")
    return np.frombuffer(raw, dtype="<f4", count=n, offset=pos).copy()


# --------------------------------------------------------------------------- config


@dataclass(frozen=True)
class RunConfig:
    """Every run parameter; keys mirror the CLI flags with ``-`` as ``_``.

    ======================  ==========================================  =================================
    key                     default                                     meaning
    ======================  ==========================================  =================================
    scene                   z_letter                                    preset name
    mu_t                    0.0                                         extinction, 1/m
    albedo                  0.0                                         single-scattering albedo
    g                       0.0                                         HG anisotropy
    grid                    32                                          laser grid per side
    wall_size               2.4                                         relay wall side, m
    bins                    1024                                        histogram bins
    bin_width               16e-12                                      bin width, s
    paths                   100000                                      MC paths per laser
    max_bounces             32                                          path depth cap
    seed                    7                                           base RNG seed
    mode                    montecarlo                                  montecarlo | ballistic
    voxels                  32,32,32                                    reconstruction grid
    bounds                  -0.6,-0.6,1.4:0.6,0.6,2.6                   volume corners, m
    lambda_factor           4                                           wavelength in wall pitches
    cycles                  4                                           pulse cycles
    lambda_scale            1                                           extra wavelength multiplier
    falloff                 gamma                                       gamma | per-sample
    interp                  cubic                                       cubic | linear
    view                    front                                       projection view
    filter                  true                                        apply extinction filter in sweep
    jobs                    1                                           parallel sweep cells
    sweep_mu_t              0.5,1,2                                     density grid rows
    sweep_albedo            0.15,0.33,0.5,0.67,0.83                     density grid columns
    sweep_g                 -0.7,0,0.7                                  anisotropy grid
    anisotropy_mu_t         1.0                                         medium for the anisotropy grid
    anisotropy_albedo       0.67
    sweep_lambda_scale      1,2,3                                       wavelength scan
    wavelength_mu_t         1.0                                         medium for the wavelength scan
    wavelength_albedo       0.83
    ======================  ==========================================  =================================
    """

    scene: str = "z_letter"
    mu_t: float = 0.0
    albedo: float = 0.0
    g: float = 0.0
    grid: int = 32
    wall_size: float = 2.4
    bins: int = 1024
    bin_width: float = 16e-12
    paths: int = 100_000
    max_bounces: int = 32
    seed: int = 7
    mode: str = "montecarlo"
    voxels: tuple = (32, 32, 32)
    bounds: tuple = ((-0.6, -0.6, 1.4), (0.6, 0.6, 2.6))
    lambda_factor: float = 4.0
    cycles: float = 4.0
    lambda_scale: float = 1.0
    falloff: str = "gamma"
    interp: str = "cubic"
    view: str = "front"
    filter: bool = True
    jobs: int = 1
    sweep_mu_t: tuple = (0.5, 1.0, 2.0)
    sweep_albedo: tuple = (0.15, 0.33, 0.5, 0.67, 0.83)
    sweep_g: tuple = (-0.7, 0.0, 0.7)
    anisotropy_mu_t: float = 1.0
    anisotropy_albedo: float = 0.67
    sweep_lambda_scale: tuple = (1.0, 2.0, 3.0)
    wavelength_mu_t: float = 1.0
    wavelength_albedo: float = 0.83

    def __post_init__(self):
        problems = validate(self)
        if problems:
            raise ConfigError("; ".join(problems))


DEFAULTS = {f.name: f.default for f in fields(RunConfig)}


def parse_voxels(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    try:
        counts = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"voxels must be three integers like 32,32,32, got {text!r}") from None
    if len(counts) != 3 or min(counts) < 1:
        raise ConfigError(f"voxels must be three positive integers, got {text!r}")
    return counts


def parse_bounds(text: str) -> tuple[tuple[float, ...], tuple[float, ...]]:
    try:
        lo_s, hi_s = text.split(":")
        lo = tuple(float(p) for p in lo_s.split(","))
        hi = tuple(float(p) for p in hi_s.split(","))
    except ValueError:
        raise ConfigError(f"bounds must look like x0,y0,z0:x1,y1,z1, got {text!r}") from None
    if len(lo) != 3 or len(hi) != 3:
        raise ConfigError(f"bounds need three coordinates per corner, got {text!r}")
    if not all(b > a for a, b in zip(lo, hi)):
        raise ConfigError(f"bounds max corner must exceed min corner, got {text!r}")
    return lo, hi


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(",") if p.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARSERS = {
    "voxels": parse_voxels,
    "bounds": parse_bounds,
    "filter": _bool,
}
for _k, _v in DEFAULTS.items():
    if _k in _PARSERS:
        continue
    if isinstance(_v, tuple):
        _PARSERS[_k] = _float_list
    elif isinstance(_v, bool):
        _PARSERS[_k] = _bool
    elif isinstance(_v, int):
        _PARSERS[_k] = int
    elif isinstance(_v, float):
        _PARSERS[_k] = float
    else:
        _PARSERS[_k] = str


def validate(cfg: RunConfig) -> list[str]:
    p = []
    if cfg.scene not in PRESETS:
        p.append(f"scene must be one of {', '.join(PRESETS)}")
    if not cfg.mu_t >= 0:
        p.append("mu_t must be >= 0")
    if not 0 <= cfg.albedo <= 1:
        p.append("albedo must be in [0, 1]")
    if not -1 < cfg.g < 1:
        p.append("g must satisfy |g| < 1")
    for key in ("grid", "bins", "paths", "max_bounces", "jobs"):
        if getattr(cfg, key) < 1:
            p.append(f"{key} must be >= 1")
    for key in ("wall_size", "bin_width", "lambda_factor", "cycles", "lambda_scale"):
        if not getattr(cfg, key) > 0:
            p.append(f"{key} must be > 0")
    if cfg.seed < 0:
        p.append("seed must be >= 0")
    if cfg.mode not in ("montecarlo", "ballistic"):
        p.append("mode must be montecarlo or ballistic")
    if cfg.falloff not in ("gamma", "per-sample"):
        p.append("falloff must be gamma or per-sample")
    if cfg.interp not in ("cubic", "linear"):
        p.append("interp must be cubic or linear")
    if cfg.view not in ("front", "lateral", "top"):
        p.append("view must be front, lateral or top")
    if any(m < 0 for m in cfg.sweep_mu_t) or cfg.anisotropy_mu_t < 0 or cfg.wavelength_mu_t < 0:
        p.append("sweep extinctions must be >= 0")
    if any(not 0 <= a <= 1 for a in (*cfg.sweep_albedo, cfg.anisotropy_albedo, cfg.wavelength_albedo)):
        p.append("sweep albedos must be in [0, 1]")
    if any(not -1 < g < 1 for g in cfg.sweep_g):
        p.append("sweep_g values must satisfy |g| < 1")
    if any(not s > 0 for s in cfg.sweep_lambda_scale):
        p.append("sweep_lambda_scale values must be > 0")
    return p


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}; valid keys: {', '.join(DEFAULTS)}")
        try:
            values[key] = _PARSERS[key](value)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    """Read ``key = value`` lines; ``#`` starts a comment; missing keys keep their defaults."""
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


def format_value(v) -> str:
    """Stable text form used in manifests and config dumps."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ":".join(format_value(c) for c in v)
        return ",".join(format_value(c) for c in v)
    return str(v)

