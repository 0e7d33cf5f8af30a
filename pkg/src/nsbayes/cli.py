"""Command-line front end: truth / observe / sample / export / check-prior.

A run directory created by ``truth`` carries the resolved configuration,
and later stages default to it, so a complete experiment is:

    nsbayes truth --preset desk --out runs/demo
    nsbayes observe --out runs/demo
    nsbayes sample --out runs/demo
    nsbayes export --out runs/demo --what fig2

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O.
"""

from __future__ import annotations

import functools
import os
import sys

import click
import numpy as np

from . import config as cfgmod
from . import report, storage
from .errors import ConfigError, NumericalError, StorageError
from .forward import solve_forward
from .mcmc import run_chain
from .observation import GridObservationLikelihood, synthesize_data
from .prior import check_trace_class, sample_initial, sample_path
from .spectral import SpectralField

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"configuration error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
        except (StorageError, OSError) as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(EXIT_IO)

    return wrapper


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="TOML configuration file.")(fn)
    fn = click.option("--preset", type=str, default=None,
                      help="Named preset: paper-sec5 or desk.")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(), required=True,
                      help="Run directory.")(fn)
    fn = click.option("--seed-truth", type=int, default=None)(fn)
    fn = click.option("--seed-noise", type=int, default=None)(fn)
    fn = click.option("--seed-chain", type=int, default=None)(fn)
    fn = click.option("--mode", type=click.Choice(["forcing", "joint"]), default=None,
                      help="Inference mode override.")(fn)
    return fn


def _resolve_config(config_path, preset, out_dir, seed_truth, seed_noise,
                    seed_chain, mode, allow_saved=True):
    if config_path and preset:
        raise ConfigError("give either --config or --preset, not both")
    if config_path:
        cfg = cfgmod.load_config(config_path)
    elif preset:
        cfg = cfgmod.preset(preset)
    elif allow_saved:
        cfg = cfgmod.load_resolved_config(os.path.join(out_dir, "run-config.json"))
    else:
        raise ConfigError("a --config file or --preset is required")
    cfg = cfg.with_seeds(seed_truth, seed_noise, seed_chain)
    if mode is not None and mode != cfg.mode:
        import dataclasses

        cfg = dataclasses.replace(cfg, mode=mode)
    return cfg


@click.group()
def main():
    """Sampling-based inference of stochastic forcing from velocity data."""


@main.command()
@_common_options
@_handle_errors
def truth(config_path, preset, out_dir, seed_truth, seed_noise, seed_chain, mode):
    """Draw the true driving path from the prior and solve forward."""
    cfg = _resolve_config(config_path, preset, out_dir, seed_truth, seed_noise,
                          seed_chain, mode, allow_saved=False)
    lattice = cfg.lattice()
    prior = cfg.prior_spec(lattice)
    rng = np.random.default_rng(cfg.seed_truth)
    path = sample_path(prior, rng)
    if cfg.mode == "joint":
        u0 = sample_initial(cfg.initial_prior(lattice), rng)
    else:
        u0 = SpectralField.zeros(lattice)
    traj = solve_forward(
        u0,
        path,
        cfg.viscosity,
        decay_noise=(cfg.noise_placement == "decayed"),
        blowup_cap=cfg.blowup_cap,
    )
    os.makedirs(out_dir, exist_ok=True)
    cfgmod.save_resolved_config(os.path.join(out_dir, "run-config.json"), cfg)
    storage.write_path(os.path.join(out_dir, "truth", "w"), path)
    storage.write_trajectory(os.path.join(out_dir, "truth", "u"), traj)
    click.echo(
        f"truth written to {out_dir}/truth ({traj.times.size} knots, "
        f"seed {cfg.seed_truth})"
    )


@main.command()
@_common_options
@_handle_errors
def observe(config_path, preset, out_dir, seed_truth, seed_noise, seed_chain, mode):
    """Synthesise noisy observations from the stored truth trajectory."""
    cfg = _resolve_config(config_path, preset, out_dir, seed_truth, seed_noise,
                          seed_chain, mode)
    traj = storage.read_trajectory(os.path.join(out_dir, "truth", "u"))
    obs_cfg = cfg.observation_config(traj.lattice)
    rng = np.random.default_rng(cfg.seed_noise)
    data = synthesize_data(traj, obs_cfg, rng)
    data.seed = cfg.seed_noise
    storage.write_observations(os.path.join(out_dir, "observations.nsbobs"), data)
    click.echo(
        f"observations written ({obs_cfg.times.size} x {obs_cfg.n_per_time} "
        f"values, gamma {cfg.gamma}, seed {cfg.seed_noise})"
    )


def _run_one_chain(cfg, lattice, prior, data, rng, out_dir, resume_path):
    settings = cfg.chain_settings()
    likelihood = GridObservationLikelihood(
        data,
        cfg.viscosity,
        blowup_cap=cfg.blowup_cap,
    )
    ic_prior = cfg.initial_prior(lattice) if cfg.mode == "joint" else None
    cfg_hash = cfg.config_hash()

    resume_payload = None
    trace_offset = None
    if resume_path is not None:
        resume_payload = storage.load_checkpoint(resume_path)
        stored = str(resume_payload["config_hash"])
        if stored != cfg_hash:
            raise ConfigError(
                "checkpoint was produced under a different configuration "
                f"(hash {stored[:12]} != {cfg_hash[:12]}); refusing to resume"
            )
        trace_offset = int(resume_payload["trace_offset"])

    ckpt_dir = os.path.join(out_dir, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    trace_path = os.path.join(out_dir, "trace.txt")
    with storage.TraceWriter(trace_path, settings.watch_modes, trace_offset) as tw:

        def save_ckpt(state, summary, chain_rng):
            storage.save_checkpoint(
                os.path.join(ckpt_dir, f"ckpt-{state.iteration:07d}.npz"),
                state,
                summary,
                chain_rng,
                config_hash=cfg_hash,
                trace_offset=tw.offset,
            )

        summary, _state = run_chain(
            settings,
            likelihood,
            prior,
            rng,
            ic_prior=ic_prior,
            trace_writer=tw,
            checkpoint_saver=save_ckpt,
            resume_payload=resume_payload,
        )
    storage.write_summary(
        os.path.join(out_dir, "summary.npz"),
        summary,
        meta={"config_hash": cfg_hash, "seed_chain": cfg.seed_chain},
    )
    return summary


@main.command()
@_common_options
@click.option("--resume", "resume_path", type=click.Path(), default=None,
              help="Checkpoint file to resume from.")
@click.option("--chains", type=int, default=1, show_default=True,
              help="Number of independent chains (derived seeds).")
@_handle_errors
def sample(config_path, preset, out_dir, seed_truth, seed_noise, seed_chain, mode,
           resume_path, chains):
    """Run the pCN sampler against the stored observations."""
    cfg = _resolve_config(config_path, preset, out_dir, seed_truth, seed_noise,
                          seed_chain, mode)
    if chains < 1:
        raise ConfigError("--chains must be >= 1")
    if chains > 1 and resume_path is not None:
        raise ConfigError("--resume only supports single-chain runs")
    lattice = cfg.lattice()
    prior = cfg.prior_spec(lattice)
    obs_cfg = cfg.observation_config(lattice)
    data = storage.read_observations(
        os.path.join(out_dir, "observations.nsbobs"), obs_cfg
    )

    if chains == 1:
        rng = np.random.default_rng(cfg.seed_chain)
        summary = _run_one_chain(cfg, lattice, prior, data, rng, out_dir, resume_path)
    else:
        merged = None
        for i in range(chains):
            sub = os.path.join(out_dir, f"chain-{i:02d}")
            os.makedirs(sub, exist_ok=True)
            rng = np.random.default_rng([cfg.seed_chain, i])
            summary_i = _run_one_chain(cfg, lattice, prior, data, rng, sub, None)
            merged = summary_i if merged is None else merged.merge(summary_i)
        storage.write_summary(
            os.path.join(out_dir, "summary.npz"),
            merged,
            meta={"config_hash": cfg.config_hash(), "seed_chain": cfg.seed_chain},
        )
        summary = merged
    click.echo(
        f"chain finished: {summary.n_iterations} iterations, acceptance "
        f"{summary.acceptance_rate:.3f}, {summary.n_recorded} recorded samples"
    )


@main.command()
@_common_options
@click.option("--what", type=click.Choice(report.EXPORT_KINDS), required=True)
@_handle_errors
def export(config_path, preset, out_dir, seed_truth, seed_noise, seed_chain, mode,
           what):
    """Write plot-data tables and rendered figures from a chain summary."""
    cfg = _resolve_config(config_path, preset, out_dir, seed_truth, seed_noise,
                          seed_chain, mode)
    lattice = cfg.lattice()
    summary, _meta = storage.read_summary(os.path.join(out_dir, "summary.npz"))
    export_dir = os.path.join(out_dir, "export")
    if what == "csv":
        written = report.export_csv(summary, lattice, export_dir)
    else:
        truth_path = storage.read_path(os.path.join(out_dir, "truth", "w"))
        truth_traj = storage.read_trajectory(os.path.join(out_dir, "truth", "u"))
        if what == "fig2":
            written = report.export_fig2(
                summary, lattice, truth_path.values, truth_traj.states, export_dir
            )
        else:
            written = report.export_fig1(
                summary, lattice, truth_traj.states, export_dir,
                cfg.observation_times(),
            )
    for path in written:
        click.echo(path)


@main.command("check-prior")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="TOML configuration file.")
@click.option("--preset", type=str, default=None,
              help="Named preset: paper-sec5 or desk.")
@_handle_errors
def check_prior(config_path, preset):
    """Report the covariance summability check for the configured prior."""
    cfg = _resolve_config(config_path, preset, None, None, None, None, None,
                          allow_saved=False)
    prior = cfg.prior_spec()
    rep = check_trace_class(prior, cfg.epsilon_check)
    click.echo(rep.describe())
    click.echo(f"  total forcing energy rate (sum sigma_k^2): "
               f"{prior.total_energy_rate:.6e}")


if __name__ == "__main__":
    main()
