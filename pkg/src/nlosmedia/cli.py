"""Command-line pipeline: simulate -> reconstruct -> filter -> project, plus sweeps.

Every failure prints one line to stderr of the form
``error kind=<kind> message="<text>"`` and exits nonzero:

====  =========================================
code  kind
====  =========================================
2     usage (bad flags or config values)
3     format (unreadable or malformed files)
4     domain (invalid physical parameters)
5     io (filesystem errors)
====  =========================================
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .core import DomainError, MediumParams, NlosError, vec3
from .io import (
    DEFAULTS,
    ConfigError,
    CountMismatchError,
    FormatError,
    RunConfig,
    TruncationError,
    format_value,
    load_config,
    parse_bounds,
    parse_voxels,
    read_h,
    read_vol,
    write_h,
    write_vol,
)
from .postprocess import VIEWS, extinction_filter, max_intensity_projection, normalize_image, write_pgm
from .reconstruct import FALLOFF_MODES, INTERP_MODES, VolumeGrid, make_pulse, reconstruct_volume
from .scenes import PRESETS, preset_scene
from .simulate import MODES, RenderConfig, render_impulse


class UsageError(NlosError):
    pass


EXIT_CODES = (
    (UsageError, 2, "usage"),
    (ConfigError, 2, "usage"),
    (FormatError, 3, "format"),
    (TruncationError, 3, "format"),
    (CountMismatchError, 3, "format"),
    (DomainError, 4, "domain"),
    (NlosError, 4, "domain"),
    (OSError, 5, "io"),
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _albedo(text: str) -> float:
    v = float(text)
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"albedo must be in [0, 1], got {text}")
    return v


def _nonneg(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _positive(kind):
    def parse(text: str):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
        return v
    return parse


def _aniso(text: str) -> float:
    v = float(text)
    if not -1 < v < 1:
        raise argparse.ArgumentTypeError(f"g must satisfy |g| < 1, got {text}")
    return v


def _wrap(fn):
    def parse(text: str):
        try:
            return fn(text)
        except ConfigError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    d = DEFAULTS
    p = _Parser(prog="nlosmedia", description="Phasor-field NLOS imaging through scattering media.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="render a preset scene to an impulse response (.nlosh)")
    s.add_argument("--scene", choices=PRESETS, default=d["scene"])
    s.add_argument("--mu-t", type=_nonneg, default=d["mu_t"])
    s.add_argument("--albedo", type=_albedo, default=d["albedo"])
    s.add_argument("--g", type=_aniso, default=d["g"])
    s.add_argument("--grid", type=_positive(int), default=d["grid"])
    s.add_argument("--wall-size", type=_positive(float), default=d["wall_size"])
    s.add_argument("--bins", type=_positive(int), default=d["bins"])
    s.add_argument("--bin-width", type=_positive(float), default=d["bin_width"])
    s.add_argument("--paths", type=_positive(int), default=d["paths"])
    s.add_argument("--max-bounces", type=_positive(int), default=d["max_bounces"])
    s.add_argument("--mode", choices=MODES, default=d["mode"])
    s.add_argument("--seed", type=int, default=d["seed"])
    s.add_argument("--out", required=True)

    r = sub.add_parser("reconstruct", help="focus the virtual camera on a voxel grid (.nlosv)")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--voxels", type=_wrap(parse_voxels), default=d["voxels"])
    r.add_argument("--bounds", type=_wrap(parse_bounds), default=d["bounds"])
    r.add_argument("--lambda-factor", type=_positive(float), default=d["lambda_factor"])
    r.add_argument("--cycles", type=_positive(float), default=d["cycles"])
    r.add_argument("--lambda-scale", type=_positive(float), default=d["lambda_scale"])
    r.add_argument("--falloff", choices=FALLOFF_MODES, default=d["falloff"])
    r.add_argument("--interp", choices=INTERP_MODES, default=d["interp"])
    r.add_argument("--out", required=True)

    f = sub.add_parser("filter", help="apply extinction compensation to a volume")
    f.add_argument("--in", dest="inp", required=True)
    f.add_argument("--mu-t", type=_nonneg, required=True)
    f.add_argument("--albedo", type=_albedo, required=True)
    f.add_argument("--relay-center", default="0,0,0", help="relay-wall centroid as x,y,z")
    f.add_argument("--out", required=True)

    j = sub.add_parser("project", help="maximum-intensity projection to an 8-bit PGM")
    j.add_argument("--in", dest="inp", required=True)
    j.add_argument("--view", choices=tuple(VIEWS), default=d["view"])
    j.add_argument("--out", required=True)

    w = sub.add_parser("sweep", help="run the media-parameter sweeps")
    w.add_argument("--config", help="key = value run configuration")
    w.add_argument("--out-dir", required=True)
    w.add_argument("--jobs", type=_positive(int), default=None)
    w.add_argument("--dry-run", action="store_true")
    w.add_argument("--no-figures", action="store_true", help="skip the PNG montages")
    return p


def cmd_simulate(a) -> None:
    scene = preset_scene(a.scene, MediumParams(a.mu_t, a.albedo, a.g), grid=a.grid, wall_size=a.wall_size)
    rc = RenderConfig(n_bins=a.bins, bin_width=a.bin_width, paths_per_laser=a.paths,
                      max_bounces=a.max_bounces, seed=a.seed, mode=a.mode)
    h = render_impulse(scene, rc)
    write_h(a.out, h)
    print(f"out={a.out} overflow={format_value(float(h.overflow))} "
          f"total_energy={format_value(float(h.total_energy()))}")


def cmd_reconstruct(a) -> None:
    h = read_h(a.inp)
    base = make_pulse(h.wall, a.lambda_factor, a.cycles)
    pulse = make_pulse(h.wall, cycles=a.cycles, lambda_override=base.wavelength * a.lambda_scale)
    vol = reconstruct_volume(h, VolumeGrid(*a.bounds, a.voxels), pulse, a.falloff, a.interp)
    write_vol(a.out, vol)
    print(f"out={a.out} wavelength={format_value(pulse.wavelength)} peak={format_value(float(vol.data.max()))} "
          f"flagged={int(np.count_nonzero(vol.flagged))}")


def cmd_filter(a) -> None:
    vol = read_vol(a.inp)
    if vol.filtered:
        raise DomainError(f"{a.inp} is already extinction-filtered")
    try:
        center = vec3([float(t) for t in a.relay_center.split(",")])
    except ValueError:
        raise UsageError(f"--relay-center must be x,y,z, got {a.relay_center!r}") from None
    out = extinction_filter(vol, MediumParams(a.mu_t, a.albedo), center)
    write_vol(a.out, out)
    print(f"out={a.out} peak={format_value(float(out.data.max()))}")


def cmd_project(a) -> None:
    vol = read_vol(a.inp)
    img = normalize_image(max_intensity_projection(vol, a.view))
    comment = (f"view={a.view} wavelength={vol.wavelength!r} cycles={vol.cycles!r} "
               f"filtered={format_value(vol.filtered)} medium=unrecorded")
    write_pgm(a.out, img, comment)
    print(f"out={a.out} width={img.shape[0]} height={img.shape[1]}")


def cmd_sweep(a) -> None:
    from . import sweep

    cfg = load_config(a.config) if a.config else RunConfig()
    if a.dry_run:
        for cell in sweep.plan(cfg):
            print(sweep.describe(cell, cfg))
        return
    lines = sweep.run_sweep(cfg, a.out_dir, a.jobs)
    if not a.no_figures:
        from .figures import render_montages

        render_montages(a.out_dir)
    print(f"out_dir={a.out_dir} cells={len(lines)}")


COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "filter": cmd_filter,
    "project": cmd_project,
    "sweep": cmd_sweep,
}


def _fail(exc: BaseException) -> int:
    for cls, code, kind in EXIT_CODES:
        if isinstance(exc, cls):
            break
    else:
        code, kind = 1, "internal"
    msg = " ".join(str(exc).split())
    print(f"error kind={kind} message={json.dumps(msg)}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except (NlosError, OSError, ValueError) as exc:
        return _fail(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
