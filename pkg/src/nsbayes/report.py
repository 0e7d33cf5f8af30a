"""Experiment exports: delimited plot data plus rendered figures.

Two figure-style exports mirror the reference experiment layout: per-mode
time series of the driving path and of the velocity mode (mean with a one
standard deviation band against the truth), and vorticity heatmaps of the
truth and the posterior mean at the first and last observation times.
Every export writes the underlying numbers as delimited text next to the
rendered PNG so downstream tooling never has to scrape pixels.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ConfigError
from .spectral import SpectralField, vorticity

EXPORT_KINDS = ("fig1", "fig2", "csv")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _mode_series(moments, lattice, mode):
    """Per-knot mean and combined std of one mode from a moments object."""
    i1, i2 = lattice.index_of(mode)
    mean = moments.mean[:, i1, i2]
    std = moments.std_combined()[:, i1, i2]
    return mean, std


def _write_band_csv(path, times, truth, mean, std):
    lines = ["t truth mean lo hi"]
    for t, tr, m, s in zip(times, truth, mean, std):
        lines.append(
            f"{_fmt(t)} {_fmt(tr)} {_fmt(m)} {_fmt(m - s)} {_fmt(m + s)}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _band_figure(path, times, truth, mean, std, title, ylabel):
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.fill_between(times, mean - std, mean + std, alpha=0.3, label="mean +/- std")
    ax.plot(times, mean, lw=1.5, label="posterior mean")
    ax.plot(times, truth, "k--", lw=1.2, label="truth")
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def export_fig2(summary, lattice, truth_path_values, truth_traj_states, out_dir,
                modes=None):
    """Per-mode time-series tables and band plots for the path and velocity.

    The plotted scalar is the real part of the complex mode amplitude; the
    band is the combined (real plus imaginary) posterior standard
    deviation.  Velocity series are skipped when the summary carries no
    trajectory statistics (prior-only runs).
    """
    os.makedirs(out_dir, exist_ok=True)
    modes = tuple(modes) if modes is not None else summary.watch_modes
    times = summary.times
    written = []
    for mode in modes:
        i1, i2 = lattice.index_of(mode)
        tag = f"k{mode[0]}_{mode[1]}"

        mean, std = _mode_series(summary.w_moments, lattice, mode)
        truth = truth_path_values[:, i1, i2]
        csv = os.path.join(out_dir, f"fig2_w_{tag}.csv")
        _write_band_csv(csv, times, truth.real, mean.real, std)
        png = os.path.join(out_dir, f"fig2_w_{tag}.png")
        _band_figure(png, times, truth.real, mean.real, std,
                     f"driving path mode {mode}", "Re W_k(t)")
        written += [csv, png]

        if summary.has_u_stats:
            mean_u, std_u = _mode_series(summary.u_moments, lattice, mode)
            truth_u = truth_traj_states[:, i1, i2]
            csv = os.path.join(out_dir, f"fig2_u_{tag}.csv")
            _write_band_csv(csv, times, truth_u.real, mean_u.real, std_u)
            png = os.path.join(out_dir, f"fig2_u_{tag}.png")
            _band_figure(png, times, truth_u.real, mean_u.real, std_u,
                         f"velocity mode {mode}", "Re u_k(t)")
            written += [csv, png]
    return written


def _write_grid(path, grid):
    with open(path, "w") as fh:
        for row in grid:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def export_fig1(summary, lattice, truth_traj_states, out_dir, obs_times):
    """Vorticity heatmaps of the truth and the posterior mean.

    Uses the first and last observation times.  The rendered sign
    convention is the scalar curl ``d(u_y)/dx - d(u_x)/dy``.
    """
    if not summary.has_u_stats:
        raise ConfigError(
            "fig1 export needs trajectory statistics; this summary has none"
        )
    os.makedirs(out_dir, exist_ok=True)
    times = summary.times
    picks = []
    for t in (obs_times[0], obs_times[-1]):
        hits = np.nonzero(np.isclose(times, t, rtol=0.0, atol=1e-9))[0]
        if hits.size != 1:
            raise ConfigError(f"export time {t} is not a summary knot")
        picks.append(int(hits[0]))

    panels = []
    written = []
    for label, states in (("truth", truth_traj_states), ("mean", summary.u_moments.mean)):
        for idx in picks:
            w = vorticity(SpectralField(lattice, states[idx])).values
            name = f"fig1_{label}_t{times[idx]:.6g}"
            path = os.path.join(out_dir, name + ".txt")
            _write_grid(path, w)
            written.append(path)
            panels.append((f"{label}, t = {times[idx]:.6g}", w))

    scale = max(np.max(np.abs(w)) for _, w in panels) or 1.0
    fig, axes = plt.subplots(2, 2, figsize=(7.2, 6.4))
    for ax, (title, w) in zip(axes.ravel(), panels):
        im = ax.imshow(w.T, origin="lower", cmap="RdBu_r", vmin=-scale, vmax=scale,
                       extent=(0, 2 * np.pi, 0, 2 * np.pi))
        ax.set_title(title, fontsize=9)
    fig.colorbar(im, ax=axes.ravel().tolist(), shrink=0.85, label="vorticity")
    png = os.path.join(out_dir, "fig1.png")
    fig.savefig(png, dpi=150)
    plt.close(fig)
    written.append(png)
    return written


def export_csv(summary, lattice, out_dir):
    """Flat per-knot, per-watch-mode statistics table (one row each)."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "summary.csv")
    cols = ["k1", "k2", "t", "w_mean_re", "w_mean_im", "w_std"]
    if summary.has_u_stats:
        cols += ["u_mean_re", "u_mean_im", "u_std"]
    lines = [" ".join(cols)]
    for mode in summary.watch_modes:
        i1, i2 = lattice.index_of(mode)
        w_mean, w_std = _mode_series(summary.w_moments, lattice, mode)
        if summary.has_u_stats:
            u_mean, u_std = _mode_series(summary.u_moments, lattice, mode)
        for n, t in enumerate(summary.times):
            row = [
                str(mode[0]),
                str(mode[1]),
                _fmt(t),
                _fmt(w_mean[n].real),
                _fmt(w_mean[n].imag),
                _fmt(w_std[n]),
            ]
            if summary.has_u_stats:
                row += [
                    _fmt(u_mean[n].real),
                    _fmt(u_mean[n].imag),
                    _fmt(u_std[n]),
                ]
            lines.append(" ".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return [path]
