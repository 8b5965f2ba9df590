"""Figures and grayscale rasters written next to the delimited outputs.

Rasters use a fixed window per parameter so that images from different
runs are directly comparable:

=====  ===============  ====
map    window           unit
=====  ===============  ====
rho    [0, 1.2]         a.u.
t1     [0, 4500]        ms
t2     [0, 2000]        ms
df     [-50, 50]        Hz
=====  ===============  ====

Values outside the window saturate.  1-D grids are drawn as a single row.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["WINDOWS", "export_rasters", "map_comparison", "convergence_plot", "flatness_plot", "scaling_plot"]

WINDOWS = {"rho": (0.0, 1.2), "t1": (0.0, 4500.0), "t2": (0.0, 2000.0), "df": (-50.0, 50.0)}
_LABELS = {"rho": "density (a.u.)", "t1": "T1 (ms)", "t2": "T2 (ms)", "df": "off-resonance (Hz)"}

plt.rcParams.update({
    "font.size": 9,
    "axes.titlesize": 9,
    "savefig.dpi": 120,
    "figure.dpi": 120,
})


def _metadata(config_hash):
    meta = {"Software": None}
    if config_hash:
        meta["Description"] = f"config_sha256 {config_hash}"
    return meta


def _image(maps, name):
    a = getattr(maps, name)
    return a.reshape(maps.grid_dims if len(maps.grid_dims) == 2 else (1, -1))


def export_rasters(maps, directory, prefix, config_hash=None, names=("rho", "t1", "t2", "df")):
    """Write one grayscale PNG per parameter, ``<prefix>_<name>.png``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in names:
        lo, hi = WINDOWS[name]
        path = directory / f"{prefix}_{name}.png"
        plt.imsave(path, _image(maps, name), cmap="gray", vmin=lo, vmax=hi, metadata=_metadata(config_hash))
        paths.append(path)
    return paths


def map_comparison(truth, mrf, blip_maps, path, config_hash=None):
    """3x3 grid: density, T1 and T2 rows; truth, MRF and BLIP columns."""
    fig, axes = plt.subplots(3, 3, figsize=(7.5, 7.5), constrained_layout=True)
    columns = (("original", truth), ("MRF", mrf), ("BLIP", blip_maps))
    for row, name in enumerate(("rho", "t1", "t2")):
        lo, hi = WINDOWS[name]
        for col, (title, maps) in enumerate(columns):
            ax = axes[row, col]
            im = ax.imshow(_image(maps, name), cmap="gray", vmin=lo, vmax=hi, interpolation="nearest")
            ax.set_xticks([])
            ax.set_yticks([])
            if row == 0:
                ax.set_title(title)
            if col == 0:
                ax.set_ylabel(_LABELS[name])
        fig.colorbar(im, ax=axes[row, :], shrink=0.8)
    fig.savefig(path, metadata=_metadata(config_hash))
    plt.close(fig)


def convergence_plot(trace, path, config_hash=None):
    it = [r.iteration for r in trace]
    fig, ax = plt.subplots(1, 2, figsize=(8, 3), constrained_layout=True)
    ax[0].semilogy(it, [r.residual for r in trace], "k.-")
    ax[0].set_xlabel("iteration")
    ax[0].set_ylabel("residual norm")
    ser = [r.ser_db for r in trace]
    if any(v is not None for v in ser):
        ax[1].plot(it, ser, "k.-")
    ax[1].set_xlabel("iteration")
    ax[1].set_ylabel("SER (dB)")
    fig.savefig(path, metadata=_metadata(config_hash))
    plt.close(fig)


def flatness_plot(reports, path, config_hash=None):
    """``lambda^-2 / L`` against ``L``."""
    L = [r.L for r in reports]
    fig, ax = plt.subplots(figsize=(4, 3), constrained_layout=True)
    ax.plot(L, [r.lambda_inv_sq_over_L for r in reports], "ko-")
    ax.set_xscale("log")
    ax.set_ylim(bottom=0)
    ax.set_xlabel("sequence length L")
    ax.set_ylabel(r"$\lambda^{-2}/L$")
    fig.savefig(path, metadata=_metadata(config_hash))
    plt.close(fig)


def scaling_plot(rows, path, config_hash=None):
    """Mean SER against ``L / p^2``, one line per undersampling factor."""
    fig, ax = plt.subplots(figsize=(4.5, 3.2), constrained_layout=True)
    for p in sorted({r.p for r in rows}):
        sel = sorted((r for r in rows if r.p == p), key=lambda r: r.ratio)
        ax.plot([r.ratio for r in sel], [r.mean_ser_db for r in sel], "o-", label=f"p = {p}")
    ax.axhline(20.0, color="0.6", lw=0.8, ls="--")
    ax.set_xlabel(r"$L/p^2$")
    ax.set_ylabel("SER (dB)")
    ax.legend(frameon=False)
    fig.savefig(path, metadata=_metadata(config_hash))
    plt.close(fig)
