"""Montage figures of sweep results, one PNG per sweep group."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .postprocess import image_rows, read_pgm  # noqa: E402
from .sweep import parse_manifest  # noqa: E402


def _label(row: dict[str, str], group: str) -> str:
    if group == "anisotropy":
        return f"g={float(row['g']):g}"
    if group == "wavelength":
        return f"{float(row['lambda_scale']):g} lambda0"
    return f"mu_t={float(row['mu_t']):g} a={float(row['albedo']):g}"


def render_montages(out_dir) -> list[Path]:
    """Read ``manifest.txt`` and the cell PGMs in ``out_dir``; write ``<group>.png`` files."""
    out = Path(out_dir)
    rows = parse_manifest((out / "manifest.txt").read_text(encoding="utf-8"))
    written = []
    for group in dict.fromkeys(r["group"] for r in rows):
        sel = [r for r in rows if r["group"] == group]
        if group == "density":
            n_cols = len({r["albedo"] for r in sel})
        else:
            n_cols = len(sel)
        n_rows = int(np.ceil(len(sel) / n_cols))
        fig, axes = plt.subplots(n_rows, n_cols, figsize=(1.8 * n_cols, 1.9 * n_rows), squeeze=False)
        for ax in axes.flat:
            ax.axis("off")
        for ax, r in zip(axes.flat, sel):
            img, _ = read_pgm(out / r["image"])
            ax.imshow(image_rows(img), cmap="gray", vmin=0, vmax=255, interpolation="nearest")
            ax.set_title(_label(r, group), fontsize=7)
        fig.tight_layout()
        path = out / f"{group}.png"
        # no Software/date metadata so reruns stay byte-identical
        fig.savefig(path, dpi=100, metadata={"Software": None})
        plt.close(fig)
        written.append(path)
    return written
