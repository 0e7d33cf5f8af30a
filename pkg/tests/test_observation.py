import numpy as np
import pytest

from nsbayes.errors import ConfigError
from nsbayes.forward import WienerPath, solve_forward
from nsbayes.observation import (
    GridObservationLikelihood,
    NullLikelihood,
    ObservationConfig,
    ObservationSet,
    forward_observe,
    misfit,
    synthesize_data,
)
from nsbayes.prior import make_prior, sample_path
from nsbayes.spectral import SpectralField, basis_field, to_physical

from conftest import random_field

NU = 0.1
DT = 0.01
TIMES = np.arange(11) * DT
OBS_TIMES = TIMES[1:]


def stokes_traj(lat, u0=None, seed=None):
    if seed is None:
        path = WienerPath.zeros(lat, TIMES)
    else:
        path = sample_path(make_prior(lat, 0.1, DT), np.random.default_rng(seed))
    u0 = u0 if u0 is not None else SpectralField.zeros(lat)
    return solve_forward(u0, path, NU, include_nonlinear=False), path


class TestObservationConfig:
    def test_counts(self, lat16):
        cfg = ObservationConfig(lat16, OBS_TIMES, 3.2)
        assert cfg.n_per_time == 2 * 256
        assert cfg.n_total == 10 * 512

    def test_rejects_bad_times(self, lat16):
        with pytest.raises(ConfigError):
            ObservationConfig(lat16, [0.0, 0.01], 3.2)
        with pytest.raises(ConfigError):
            ObservationConfig(lat16, [0.02, 0.01], 3.2)
        with pytest.raises(ConfigError):
            ObservationConfig(lat16, [], 3.2)


class TestForwardObserve:
    def test_zero_trajectory(self, lat16):
        traj, _ = stokes_traj(lat16)
        cfg = ObservationConfig(lat16, OBS_TIMES, 3.2)
        g = forward_observe(traj, cfg)
        assert g.shape == (cfg.n_total,)
        assert np.all(g == 0.0)

    def test_off_grid_time_rejected(self, lat16):
        traj, _ = stokes_traj(lat16)
        cfg = ObservationConfig(lat16, [0.015], 3.2)
        with pytest.raises(ConfigError):
            forward_observe(traj, cfg)

    def test_single_mode_values_and_ordering(self, lat16):
        # Observations of a known field reproduce its grid values in
        # time-major, row-major, component order.
        e = basis_field(lat16, (1, 0), "cos", 1.3)
        traj, _ = stokes_traj(lat16, u0=e)
        cfg = ObservationConfig(lat16, [0.02, 0.05], 3.2)
        g = forward_observe(traj, cfg)
        for j, t in enumerate(cfg.times):
            idx = traj.knot_of_time(t)
            expected = to_physical(traj.field_at(idx)).values.ravel()
            block = g[j * cfg.n_per_time : (j + 1) * cfg.n_per_time]
            assert np.max(np.abs(block - expected)) < 1e-12

    def test_constant_field_blocks_identical(self, lat8):
        # steady observation of the same state at every configured time
        e = basis_field(lat8, (2, 1), "sin", 0.5)
        m = lat8.modes_per_dim
        states = np.broadcast_to(e.coeffs, (11, m, m)).copy()
        from nsbayes.forward import Trajectory

        traj = Trajectory(lat8, TIMES, states)
        cfg = ObservationConfig(lat8, OBS_TIMES, 1.0)
        g = forward_observe(traj, cfg).reshape(10, -1)
        assert np.max(np.abs(g - g[0])) == 0.0


class TestSynthesize:
    def test_zero_gamma_reproduces_forward(self, lat16):
        traj, _ = stokes_traj(lat16, seed=1)
        cfg = ObservationConfig(lat16, OBS_TIMES, 0.0)
        data = synthesize_data(traj, cfg, np.random.default_rng(0))
        assert np.array_equal(data.values, forward_observe(traj, cfg))

    def test_noise_std_matches_gamma(self, lat16):
        # 5120 entries: empirical std of the injected noise within 3%.
        traj, _ = stokes_traj(lat16, seed=2)
        cfg = ObservationConfig(lat16, OBS_TIMES, 3.2)
        data = synthesize_data(traj, cfg, np.random.default_rng(1))
        noise = data.values - forward_observe(traj, cfg)
        assert abs(np.std(noise) - 3.2) < 0.03 * 3.2

    def test_seeds_change_noise_not_signal(self, lat8):
        traj, _ = stokes_traj(lat8, seed=3)
        cfg = ObservationConfig(lat8, OBS_TIMES, 1.0)
        a = synthesize_data(traj, cfg, np.random.default_rng(1))
        b = synthesize_data(traj, cfg, np.random.default_rng(2))
        assert not np.array_equal(a.values, b.values)
        clean = forward_observe(traj, cfg)
        assert np.std(a.values - clean) < 2.0
        assert np.std(b.values - clean) < 2.0


class TestMisfit:
    def test_exact_data_gives_zero(self, lat16):
        traj, path = stokes_traj(lat16, seed=4)
        cfg = ObservationConfig(lat16, OBS_TIMES, 3.2)
        data = ObservationSet(cfg, forward_observe(traj, cfg))
        val = misfit(path, SpectralField.zeros(lat16), data, NU,
                     include_nonlinear=False)
        assert val < 1e-18

    def test_single_residual_of_gamma(self, lat8):
        # residual vector with every entry equal to gamma -> (J K)/2
        traj, path = stokes_traj(lat8, seed=5)
        cfg = ObservationConfig(lat8, [0.05], 2.5)
        clean = forward_observe(traj, cfg)
        data = ObservationSet(cfg, clean + 2.5)
        val = misfit(path, SpectralField.zeros(lat8), data, NU,
                     include_nonlinear=False)
        assert abs(val - cfg.n_total / 2.0) < 1e-9

    def test_nonnegative_and_reorder_invariant(self, lat8):
        rng = np.random.default_rng(6)
        traj, path = stokes_traj(lat8, seed=7)
        cfg = ObservationConfig(lat8, OBS_TIMES, 1.5)
        data = synthesize_data(traj, cfg, rng)
        base = misfit(path, SpectralField.zeros(lat8), data, NU,
                      include_nonlinear=False)
        assert base >= 0.0
        # reordering data and predictions together leaves the misfit alone
        perm = rng.permutation(cfg.n_total)
        resid = data.values - forward_observe(traj, cfg)
        assert abs(0.5 * np.sum((resid[perm] / 1.5) ** 2) - base) < 1e-9

    def test_gamma_zero_rejected(self, lat8):
        traj, path = stokes_traj(lat8, seed=8)
        cfg = ObservationConfig(lat8, OBS_TIMES, 0.0)
        data = ObservationSet(cfg, forward_observe(traj, cfg))
        with pytest.raises(ConfigError):
            misfit(path, SpectralField.zeros(lat8), data, NU)

    def test_lipschitz_in_data(self, lat8):
        # |Phi(d) - Phi(d')| <= gamma^-2 (|d| + |d'| + 2|G|) |d - d'|
        rng = np.random.default_rng(9)
        traj, path = stokes_traj(lat8, seed=10)
        cfg = ObservationConfig(lat8, OBS_TIMES, 1.7)
        g = forward_observe(traj, cfg)
        u0 = SpectralField.zeros(lat8)
        for _ in range(10):
            d1 = g + rng.standard_normal(g.size)
            d2 = d1 + 0.1 * rng.standard_normal(g.size)
            p1 = misfit(path, u0, ObservationSet(cfg, d1), NU,
                        include_nonlinear=False)
            p2 = misfit(path, u0, ObservationSet(cfg, d2), NU,
                        include_nonlinear=False)
            bound = (
                (np.linalg.norm(d1) + np.linalg.norm(d2) + 2 * np.linalg.norm(g))
                * np.linalg.norm(d1 - d2)
                / 1.7**2
            )
            assert abs(p1 - p2) <= bound + 1e-12

    def test_continuity_in_path(self, lat8):
        # Phi(W + eps dW) -> Phi(W) as eps -> 0.
        rng = np.random.default_rng(11)
        spec = make_prior(lat8, 0.1, DT)
        path = sample_path(spec, rng)
        pert = sample_path(spec, rng)
        u0 = random_field(lat8, rng, decay=0.3)
        traj = solve_forward(u0, path, NU)
        cfg = ObservationConfig(lat8, OBS_TIMES, 2.0)
        data = synthesize_data(traj, cfg, rng)
        base = misfit(path, u0, data, NU)
        gaps = []
        for eps in (1e-1, 1e-2, 1e-3):
            shifted = WienerPath(lat8, path.times, path.values + eps * pert.values)
            gaps.append(abs(misfit(shifted, u0, data, NU) - base))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 1e-2 * max(base, 1.0)


class TestLikelihoodObjects:
    def test_grid_likelihood_counts_evals(self, lat8):
        traj, path = stokes_traj(lat8, seed=12)
        cfg = ObservationConfig(lat8, OBS_TIMES, 1.0)
        data = synthesize_data(traj, cfg, np.random.default_rng(3))
        like = GridObservationLikelihood(data, NU, include_nonlinear=False)
        u0 = SpectralField.zeros(lat8)
        for expected in (1, 2, 3):
            phi, traj_out = like.evaluate(u0, path)
            assert like.n_evals == expected
            assert traj_out is not None
        # matches the plain function
        assert abs(phi - misfit(path, u0, data, NU, include_nonlinear=False)) < 1e-12

    def test_null_likelihood(self, lat8):
        like = NullLikelihood()
        phi, traj = like.evaluate(None, None)
        assert phi == 0.0 and traj is None and like.n_evals == 1
