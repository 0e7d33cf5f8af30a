"""Run configuration: schema, validation, presets, and hashing.

Configuration files are TOML with a versioned schema; unknown keys are
rejected so typos cannot silently corrupt an experiment.  All randomness
flows through three named seeds (truth, noise, chain) and resolved
configurations hash canonically, which is what resumption checks against.
"""

from __future__ import annotations

import hashlib
import json

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .mcmc import ChainSettings
from .observation import ObservationConfig
from .prior import (
    SIGMA_RULES,
    TAU_RULES,
    InitialConditionPrior,
    PriorSpec,
    make_initial_prior,
    make_prior,
)
from .spectral import WavenumberLattice, build_lattice

CONFIG_VERSION = 1

MODES = ("forcing", "joint")
NOISE_PLACEMENTS = ("decayed", "raw")


@dataclass
class RunConfig:
    """Complete description of one experiment."""

    modes_per_dim: int = 16
    viscosity: float = 0.1
    horizon: float = 0.1
    dt: float = 0.01

    sigma_rule: str = "pi2_over_lambda"
    sigma_table: list | None = None
    epsilon_check: float = 0.25
    tau_rule: str = "pi2_over_lambda"
    tau_table: list | None = None

    obs_times: list | None = None  # None: every knot t = n dt, n >= 1
    gamma: float = 3.2

    iterations: int = 20000
    beta: float = 0.05
    burn_in_fraction: float = 0.1
    thin: int = 10
    checkpoint_every: int = 5000
    watch_modes: tuple = ((0, 1), (4, 4))
    mode: str = "forcing"
    noise_placement: str = "decayed"
    blowup_cap: float = 1.0e6

    seed_truth: int = 1
    seed_noise: int = 2
    seed_chain: int = 3

    # -- validation --------------------------------------------------------

    def __post_init__(self):
        self.watch_modes = tuple(tuple(int(x) for x in m) for m in self.watch_modes)
        self.validate()

    def validate(self) -> None:
        if self.modes_per_dim % 2 != 0 or self.modes_per_dim < 4:
            raise ConfigError("modes_per_dim must be even and >= 4")
        if self.viscosity <= 0:
            raise ConfigError("viscosity must be positive")
        if self.horizon <= 0 or self.dt <= 0:
            raise ConfigError("horizon and dt must be positive")
        n = self.horizon / self.dt
        if abs(n - round(n)) > 1e-9:
            raise ConfigError(f"dt {self.dt} does not divide horizon {self.horizon}")
        if self.sigma_rule not in SIGMA_RULES:
            raise ConfigError(f"sigma_rule must be one of {SIGMA_RULES}")
        if self.tau_rule not in TAU_RULES:
            raise ConfigError(f"tau_rule must be one of {TAU_RULES}")
        if self.epsilon_check <= 0:
            raise ConfigError("epsilon_check must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.noise_placement not in NOISE_PLACEMENTS:
            raise ConfigError(f"noise_placement must be one of {NOISE_PLACEMENTS}")
        if self.gamma < 0:
            raise ConfigError("gamma must be nonnegative")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ConfigError("burn_in_fraction must lie in [0, 1)")
        if self.iterations < 0 or self.thin < 1 or self.checkpoint_every < 0:
            raise ConfigError("invalid chain iteration settings")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("beta must lie in [0, 1]")
        half = self.modes_per_dim // 2
        for k1, k2 in self.watch_modes:
            if (k1, k2) == (0, 0) or not (-half <= k1 < half and -half <= k2 < half):
                raise ConfigError(f"watch mode {(k1, k2)} outside the lattice")
        for t in self.observation_times():
            steps = t / self.dt
            if abs(steps - round(steps)) > 1e-9 or not (0 < t <= self.horizon + 1e-12):
                raise ConfigError(
                    f"observation time {t} does not sit on the knot grid"
                )

    # -- derived objects -----------------------------------------------------

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def knot_times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def observation_times(self) -> np.ndarray:
        if self.obs_times is not None:
            return np.asarray(self.obs_times, dtype=float)
        return self.knot_times()[1:]

    def lattice(self) -> WavenumberLattice:
        return build_lattice(self.modes_per_dim)

    def prior_spec(self, lattice=None) -> PriorSpec:
        lattice = lattice or self.lattice()
        return make_prior(
            lattice,
            self.horizon,
            self.dt,
            rule=self.sigma_rule,
            table=self.sigma_table,
            epsilon=self.epsilon_check,
        )

    def initial_prior(self, lattice=None) -> InitialConditionPrior:
        lattice = lattice or self.lattice()
        return make_initial_prior(lattice, rule=self.tau_rule, table=self.tau_table)

    def observation_config(self, lattice=None) -> ObservationConfig:
        lattice = lattice or self.lattice()
        return ObservationConfig(lattice, self.observation_times(), self.gamma)

    def chain_settings(self) -> ChainSettings:
        return ChainSettings(
            iterations=self.iterations,
            beta=self.beta,
            burn_in=int(round(self.burn_in_fraction * self.iterations)),
            thin=self.thin,
            watch_modes=self.watch_modes,
            joint=(self.mode == "joint"),
            checkpoint_every=self.checkpoint_every,
        )

    # -- serialisation -------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "version": CONFIG_VERSION,
            "grid": {
                "modes_per_dim": self.modes_per_dim,
                "viscosity": self.viscosity,
                "horizon": self.horizon,
                "dt": self.dt,
            },
            "prior": {
                "sigma_rule": self.sigma_rule,
                "epsilon_check": self.epsilon_check,
                "ic": {"tau_rule": self.tau_rule},
            },
            "observation": {"gamma": self.gamma},
            "chain": {
                "iterations": self.iterations,
                "beta": self.beta,
                "burn_in_fraction": self.burn_in_fraction,
                "thin": self.thin,
                "checkpoint_every": self.checkpoint_every,
                "watch_modes": [list(m) for m in self.watch_modes],
                "mode": self.mode,
                "noise_placement": self.noise_placement,
                "blowup_cap": self.blowup_cap,
            },
            "seeds": {
                "truth": self.seed_truth,
                "noise": self.seed_noise,
                "chain": self.seed_chain,
            },
        }
        if self.sigma_table is not None:
            d["prior"]["sigma_table"] = [list(r) for r in self.sigma_table]
        if self.tau_table is not None:
            d["prior"]["ic"]["tau_table"] = [list(r) for r in self.tau_table]
        if self.obs_times is not None:
            d["observation"]["times"] = list(self.obs_times)
        return d

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def with_seeds(self, truth=None, noise=None, chain=None) -> "RunConfig":
        return replace(
            self,
            seed_truth=self.seed_truth if truth is None else int(truth),
            seed_noise=self.seed_noise if noise is None else int(noise),
            seed_chain=self.seed_chain if chain is None else int(chain),
        )


def _take(table: dict, allowed: dict, context: str) -> dict:
    """Pop known keys from a config table, rejecting anything else."""
    out = {}
    for key, target in allowed.items():
        if key in table:
            out[target] = table.pop(key)
    if table:
        raise ConfigError(f"unknown keys in [{context}]: {sorted(table)}")
    return out


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    version = data.pop("version", None)
    if version != CONFIG_VERSION:
        raise ConfigError(
            f"config version {version!r} unsupported (expected {CONFIG_VERSION})"
        )
    kwargs: dict = {}
    grid = dict(data.pop("grid", {}))
    kwargs.update(
        _take(
            grid,
            {
                "modes_per_dim": "modes_per_dim",
                "viscosity": "viscosity",
                "horizon": "horizon",
                "dt": "dt",
            },
            "grid",
        )
    )
    prior = dict(data.pop("prior", {}))
    ic = dict(prior.pop("ic", {}))
    kwargs.update(
        _take(
            prior,
            {
                "sigma_rule": "sigma_rule",
                "sigma_table": "sigma_table",
                "epsilon_check": "epsilon_check",
            },
            "prior",
        )
    )
    kwargs.update(_take(ic, {"tau_rule": "tau_rule", "tau_table": "tau_table"}, "prior.ic"))
    obs = dict(data.pop("observation", {}))
    kwargs.update(_take(obs, {"gamma": "gamma", "times": "obs_times"}, "observation"))
    chain = dict(data.pop("chain", {}))
    kwargs.update(
        _take(
            chain,
            {
                "iterations": "iterations",
                "beta": "beta",
                "burn_in_fraction": "burn_in_fraction",
                "thin": "thin",
                "checkpoint_every": "checkpoint_every",
                "watch_modes": "watch_modes",
                "mode": "mode",
                "noise_placement": "noise_placement",
                "blowup_cap": "blowup_cap",
            },
            "chain",
        )
    )
    seeds = dict(data.pop("seeds", {}))
    kwargs.update(
        _take(
            seeds,
            {"truth": "seed_truth", "noise": "seed_noise", "chain": "seed_chain"},
            "seeds",
        )
    )
    if data:
        raise ConfigError(f"unknown top-level config keys: {sorted(data)}")
    if "watch_modes" in kwargs:
        kwargs["watch_modes"] = tuple(tuple(m) for m in kwargs["watch_modes"])
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    """Parse and validate a TOML configuration file."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} does not exist") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    return config_from_dict(data)


def save_resolved_config(path, cfg: RunConfig) -> None:
    """Write the resolved configuration as canonical JSON (round-trippable)."""
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_resolved_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            return config_from_dict(json.load(fh))
    except FileNotFoundError as exc:
        raise ConfigError(f"resolved config {path} does not exist") from exc


def preset(name: str) -> RunConfig:
    """Named experiment presets.

    ``paper-sec5`` is the full reference configuration (32^2 modes); its
    chain length is an operational default, not a quoted value.  ``desk``
    scales the grid down to 16^2 for workstation and CI runtimes.
    """
    if name == "paper-sec5":
        return RunConfig(modes_per_dim=32, iterations=100000)
    if name == "desk":
        return RunConfig(modes_per_dim=16, iterations=20000)
    raise ConfigError(f"unknown preset {name!r}; expected 'paper-sec5' or 'desk'")
