"""Versioned on-disk formats: snapshots, observations, traces, checkpoints.

All text formats write floats with 17 significant digits so values round
trip exactly, which is what makes seeded runs byte-reproducible.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import StorageError
from .forward import Trajectory, WienerPath
from .observation import ObservationConfig, ObservationSet
from .spectral import SpectralField, build_lattice, read_field, write_field


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# -- snapshot series ---------------------------------------------------------


def write_series(dirpath, times, values, lattice) -> None:
    """Write per-knot field snapshots plus a ``(index, time)`` manifest."""
    os.makedirs(dirpath, exist_ok=True)
    lines = [f"nsb-manifest v1 {len(times)}"]
    for idx, t in enumerate(times):
        name = f"knot-{idx:04d}.field"
        write_field(os.path.join(dirpath, name), SpectralField(lattice, values[idx]))
        lines.append(f"{idx} {_fmt(t)}")
    with open(os.path.join(dirpath, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_series(dirpath):
    """Read a snapshot series; returns ``(lattice, times, values)``."""
    manifest = os.path.join(dirpath, "manifest.txt")
    if not os.path.exists(manifest):
        raise StorageError(f"missing manifest in {dirpath}")
    with open(manifest) as fh:
        header = fh.readline().split()
        if header[:2] != ["nsb-manifest", "v1"]:
            raise StorageError(f"{manifest}: not an nsb-manifest v1 file")
        count = int(header[2])
        entries = []
        for line in fh:
            if line.strip():
                idx, t = line.split()
                entries.append((int(idx), float(t)))
    if len(entries) != count or [i for i, _ in entries] != list(range(count)):
        raise StorageError(f"{manifest}: inconsistent knot listing")
    times = np.array([t for _, t in entries])
    fields = [
        read_field(os.path.join(dirpath, f"knot-{idx:04d}.field"))
        for idx, _ in entries
    ]
    lattice = fields[0].lattice
    values = np.stack([f.coeffs for f in fields])
    return lattice, times, values


def write_path(dirpath, path: WienerPath) -> None:
    write_series(dirpath, path.times, path.values, path.lattice)


def read_path(dirpath) -> WienerPath:
    lattice, times, values = read_series(dirpath)
    return WienerPath(lattice, times, values)


def write_trajectory(dirpath, traj: Trajectory) -> None:
    write_series(dirpath, traj.times, traj.states, traj.lattice)


def read_trajectory(dirpath) -> Trajectory:
    lattice, times, values = read_series(dirpath)
    return Trajectory(lattice, times, values)


# -- observations ------------------------------------------------------------


def write_observations(path, data: ObservationSet) -> None:
    """Write ``nsb-obs v1 J K gamma``, the generating seed, then the values."""
    cfg = data.config
    lines = [
        f"nsb-obs v1 {cfg.times.size} {cfg.n_per_time} {_fmt(cfg.gamma)}",
        f"seed {data.seed if data.seed is not None else 'none'}",
    ]
    lines.extend(_fmt(v) for v in data.values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_observations(path, cfg: ObservationConfig) -> ObservationSet:
    """Read an observation file and bind it to a configuration.

    The header must agree with the configuration's shape and noise level.
    """
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[:2] != ["nsb-obs", "v1"]:
            raise StorageError(f"{path}: not an nsb-obs v1 file")
        j, k, gamma = int(header[2]), int(header[3]), float(header[4])
        seed_line = fh.readline().split()
        if len(seed_line) != 2 or seed_line[0] != "seed":
            raise StorageError(f"{path}: missing seed record")
        seed = None if seed_line[1] == "none" else int(seed_line[1])
        values = np.array([float(line) for line in fh if line.strip()])
    if j != cfg.times.size or k != cfg.n_per_time:
        raise StorageError(
            f"{path}: shape ({j} x {k}) does not match configuration "
            f"({cfg.times.size} x {cfg.n_per_time})"
        )
    if abs(gamma - cfg.gamma) > 1e-12 * max(1.0, abs(cfg.gamma)):
        raise StorageError(f"{path}: gamma {gamma} does not match config {cfg.gamma}")
    if values.size != j * k:
        raise StorageError(f"{path}: expected {j * k} values, found {values.size}")
    return ObservationSet(cfg, values, seed=seed)


# -- chain trace -------------------------------------------------------------


class TraceWriter:
    """Append-only chain trace with byte-offset tracking for resumption."""

    def __init__(self, path, watch_modes, resume_offset: int | None = None):
        self.path = str(path)
        if resume_offset is None:
            self._fh = open(self.path, "w")
            cols = ["iter", "phi", "accepted"]
            for k1, k2 in watch_modes:
                cols.append(f"a{k1}_{k2}_re")
                cols.append(f"a{k1}_{k2}_im")
            self._fh.write("nsb-trace v1\n")
            self._fh.write("# " + " ".join(cols) + "\n")
        else:
            self._fh = open(self.path, "r+")
            self._fh.truncate(resume_offset)
            self._fh.seek(resume_offset)

    def row(self, iteration, phi, accepted, watch_values) -> None:
        parts = [str(iteration), _fmt(phi), str(int(accepted))]
        for v in watch_values:
            parts.append(_fmt(v.real))
            parts.append(_fmt(v.imag))
        self._fh.write(" ".join(parts) + "\n")

    @property
    def offset(self) -> int:
        self._fh.flush()
        return self._fh.tell()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trace(path):
    """Read a trace file; returns ``(iters, phi, accepted, watch_complex)``."""
    with open(path) as fh:
        if fh.readline().strip() != "nsb-trace v1":
            raise StorageError(f"{path}: not an nsb-trace v1 file")
        rows = [
            line.split()
            for line in fh
            if line.strip() and not line.startswith("#")
        ]
    if not rows:
        return np.zeros(0, int), np.zeros(0), np.zeros(0, int), np.zeros((0, 0), complex)
    data = np.array([[float(x) for x in row] for row in rows])
    iters = data[:, 0].astype(int)
    phi = data[:, 1]
    accepted = data[:, 2].astype(int)
    pairs = data[:, 3:]
    watch = pairs[:, 0::2] + 1j * pairs[:, 1::2]
    return iters, phi, accepted, watch


# -- checkpoints -------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path, state, summary, rng, config_hash="", trace_offset=0):
    """Dump the full chain state: enough to resume bit-identically."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "iteration": state.iteration,
        "beta": state.beta,
        "phi": state.phi,
        "accepted": int(state.accepted),
        "path_values": state.path.values,
        "u0": state.u0.coeffs,
        "rng_state": json.dumps(rng.bit_generator.state),
        "accept_count": summary.accept_count,
        "phi_trace": summary.phi_trace[: state.iteration],
        "watch_w": summary.watch_w[: state.iteration],
        "w_n": summary.w_moments.n,
        "w_mean": summary.w_moments.mean,
        "w_m2_re": summary.w_moments.m2_re,
        "w_m2_im": summary.w_moments.m2_im,
        "has_u": int(summary.has_u_stats),
        "u_n": summary.u_moments.n if summary.has_u_stats else 0,
        "u_mean": summary.u_moments.mean if summary.has_u_stats else np.zeros(0),
        "u_m2_re": summary.u_moments.m2_re if summary.has_u_stats else np.zeros(0),
        "u_m2_im": summary.u_moments.m2_im if summary.has_u_stats else np.zeros(0),
        "config_hash": config_hash,
        "trace_offset": trace_offset,
    }
    np.savez(path, **payload)


def load_checkpoint(path) -> dict:
    if not os.path.exists(path):
        raise StorageError(f"checkpoint {path} does not exist")
    with np.load(path, allow_pickle=False) as npz:
        payload = {key: npz[key] for key in npz.files}
    if int(payload["version"]) != CHECKPOINT_VERSION:
        raise StorageError(
            f"{path}: unsupported checkpoint version {payload['version']}"
        )
    return payload


# -- summaries ---------------------------------------------------------------

SUMMARY_VERSION = 1


def write_summary(path, summary, meta: dict | None = None) -> None:
    """Persist a chain summary (documented npz keys, stable per version)."""
    payload = {
        "version": SUMMARY_VERSION,
        "times": summary.times,
        "watch_modes": np.array(summary.watch_modes, dtype=int),
        "beta": summary.beta,
        "burn_in": summary.burn_in,
        "thin": summary.thin,
        "n_iterations": summary.n_iterations,
        "accept_count": summary.accept_count,
        "n_recorded": summary.n_recorded,
        "phi_trace": summary.phi_trace,
        "watch_w": summary.watch_w,
        "w_n": summary.w_moments.n if summary.w_moments else 0,
        "w_mean": summary.w_moments.mean if summary.w_moments else np.zeros(0),
        "w_m2_re": summary.w_moments.m2_re if summary.w_moments else np.zeros(0),
        "w_m2_im": summary.w_moments.m2_im if summary.w_moments else np.zeros(0),
        "has_u": int(summary.has_u_stats),
        "u_n": summary.u_moments.n if summary.has_u_stats else 0,
        "u_mean": summary.u_moments.mean if summary.has_u_stats else np.zeros(0),
        "u_m2_re": summary.u_moments.m2_re if summary.has_u_stats else np.zeros(0),
        "u_m2_im": summary.u_moments.m2_im if summary.has_u_stats else np.zeros(0),
    }
    for key, value in (meta or {}).items():
        payload[f"meta_{key}"] = value
    np.savez(path, **payload)


def read_summary(path):
    """Load a summary written by ``write_summary`` back into objects."""
    from .mcmc import ChainSummary, RunningMoments

    if not os.path.exists(path):
        raise StorageError(f"summary {path} does not exist")
    with np.load(path, allow_pickle=False) as npz:
        payload = {key: npz[key] for key in npz.files}
    if int(payload["version"]) != SUMMARY_VERSION:
        raise StorageError(f"{path}: unsupported summary version")
    summary = ChainSummary(
        times=payload["times"],
        watch_modes=tuple(tuple(int(x) for x in row) for row in payload["watch_modes"]),
        beta=float(payload["beta"]),
        burn_in=int(payload["burn_in"]),
        thin=int(payload["thin"]),
    )
    summary.n_iterations = int(payload["n_iterations"])
    summary.accept_count = int(payload["accept_count"])
    summary.phi_trace = payload["phi_trace"]
    summary.watch_w = payload["watch_w"]
    if int(payload["w_n"]) > 0:
        wm = RunningMoments(payload["w_mean"].shape)
        wm.n = int(payload["w_n"])
        wm.mean = payload["w_mean"]
        wm.m2_re = payload["w_m2_re"]
        wm.m2_im = payload["w_m2_im"]
        summary.w_moments = wm
    if int(payload["has_u"]):
        um = RunningMoments(payload["u_mean"].shape)
        um.n = int(payload["u_n"])
        um.mean = payload["u_mean"]
        um.m2_re = payload["u_m2_re"]
        um.m2_im = payload["u_m2_im"]
        summary.u_moments = um
        summary.has_u_stats = True
    meta = {
        key[5:]: payload[key] for key in payload if key.startswith("meta_")
    }
    return summary, meta
