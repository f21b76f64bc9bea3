"""Media-parameter sweeps: density x albedo, anisotropy and wavelength scans.

Every cell renders its own impulse response with seed ``seed ^ index``,
reconstructs, optionally compensates extinction and writes a front-view PGM.
The manifest holds one ``key=value`` line per cell in cell order.
"""

from __future__ import annotations

import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .core import MediumParams
from .io import RunConfig, format_value
from .metrics import front_glyph_mask, glyph_contrast, peak_intensity, plane_peak
from .postprocess import _atomic_write, extinction_filter, max_intensity_projection, normalize_image, write_pgm
from .reconstruct import VolumeGrid, make_pulse, reconstruct_volume
from .scenes import preset_scene
from .simulate import RenderConfig, render_impulse

MANIFEST = "manifest.txt"


@dataclass(frozen=True)
class Cell:
    index: int
    group: str
    mu_t: float
    albedo: float
    g: float
    lambda_scale: float

    @property
    def medium(self) -> MediumParams:
        return MediumParams(self.mu_t, self.albedo, self.g)

    def image_name(self) -> str:
        return f"cell_{self.index:02d}_{self.group}.pgm"

    def seed(self, base: int) -> int:
        return base ^ self.index


def plan(cfg: RunConfig) -> list[Cell]:
    """Density grid (row-major over mu_t then albedo), then anisotropy, then wavelength."""
    cells = []
    for mu in cfg.sweep_mu_t:
        for a in cfg.sweep_albedo:
            cells.append(("density", mu, a, 0.0, cfg.lambda_scale))
    for g in cfg.sweep_g:
        cells.append(("anisotropy", cfg.anisotropy_mu_t, cfg.anisotropy_albedo, g, cfg.lambda_scale))
    for s in cfg.sweep_lambda_scale:
        cells.append(("wavelength", cfg.wavelength_mu_t, cfg.wavelength_albedo, 0.0, s))
    return [Cell(i, grp, float(mu), float(a), float(g), float(s)) for i, (grp, mu, a, g, s) in enumerate(cells)]


def describe(cell: Cell, cfg: RunConfig) -> str:
    return (f"cell={cell.index} group={cell.group} mu_t={cell.mu_t!r} albedo={cell.albedo!r} g={cell.g!r} "
            f"lambda_scale={cell.lambda_scale!r} seed={cell.seed(cfg.seed)} image={cell.image_name()}")


def run_cell(cell: Cell, cfg: RunConfig, out_dir: str) -> str:
    """Render, reconstruct and project one cell; returns its manifest line."""
    scene = preset_scene(cfg.scene, cell.medium, grid=cfg.grid, wall_size=cfg.wall_size)
    rc = RenderConfig(n_bins=cfg.bins, bin_width=cfg.bin_width, paths_per_laser=cfg.paths,
                      max_bounces=cfg.max_bounces, seed=cell.seed(cfg.seed), mode=cfg.mode)
    h = render_impulse(scene, rc)
    base = make_pulse(scene.wall, cfg.lambda_factor, cfg.cycles)
    pulse = make_pulse(scene.wall, cycles=cfg.cycles, lambda_override=base.wavelength * cell.lambda_scale)
    lo, hi = cfg.bounds
    vol = reconstruct_volume(h, VolumeGrid(lo, hi, cfg.voxels), pulse, cfg.falloff, cfg.interp)
    shown = extinction_filter(vol, cell.medium, scene.wall.centroid) if cfg.filter else vol
    mip = max_intensity_projection(shown, "front")
    comment = (f"view=front wavelength={pulse.wavelength!r} cycles={pulse.cycles!r} "
               f"mu_t={cell.mu_t!r} albedo={cell.albedo!r} g={cell.g!r} filtered={format_value(cfg.filter)}")
    write_pgm(Path(out_dir) / cell.image_name(), normalize_image(mip), comment)
    metrics = {
        "wavelength": pulse.wavelength,
        "peak_raw": peak_intensity(vol),
        "peak_shown": peak_intensity(shown),
        "plane_peak_raw": plane_peak(vol, scene.metadata.get("depth", 0.5 * (lo[2] + hi[2]))),
        "overflow": h.overflow,
        "total_energy": h.total_energy(),
    }
    if cfg.scene == "z_letter":
        metrics["contrast"] = glyph_contrast(mip, front_glyph_mask(shown))
    return describe(cell, cfg) + "".join(f" {k}={format_value(float(v))}" for k, v in metrics.items())


def _run_cell_args(args):
    return run_cell(*args)


def run_sweep(cfg: RunConfig, out_dir, jobs: int | None = None) -> list[str]:
    """Run every planned cell and write the manifest last; returns its lines."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = plan(cfg)
    jobs = jobs or cfg.jobs
    work = [(c, cfg, str(out)) for c in cells]
    if jobs > 1 and len(cells) > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            lines = list(pool.map(_run_cell_args, work))
    else:
        lines = [_run_cell_args(w) for w in work]
    _atomic_write(out / MANIFEST, ("\n".join(lines) + "\n").encode("utf-8"))
    return lines


def parse_manifest(text: str) -> list[dict[str, str]]:
    return [dict(tok.split("=", 1) for tok in line.split()) for line in text.splitlines() if line.strip()]
