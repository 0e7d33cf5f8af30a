import numpy as np
import pytest

from nsbayes.errors import BlowupError, ConfigError, NumericalError
from nsbayes.forward import (
    Trajectory,
    WienerPath,
    solve_forward,
    step,
    stochastic_convolution,
    weak_form_residual,
)
from nsbayes.prior import make_prior, sample_path
from nsbayes.spectral import (
    PhysicalField,
    SpectralField,
    basis_field,
    sobolev_norm,
    to_spectral,
)

from conftest import random_field

NU = 0.1
DT = 0.01
TIMES = np.arange(11) * DT


def taylor_green(lattice):
    X, Y = lattice.grid()
    vals = np.stack([np.cos(X) * np.sin(Y), -np.sin(X) * np.cos(Y)], axis=-1)
    return to_spectral(PhysicalField(lattice, vals))


def prior_path(lattice, seed, horizon=0.1, dt=DT):
    spec = make_prior(lattice, horizon, dt)
    return sample_path(spec, np.random.default_rng(seed))


class TestWienerPath:
    def test_requires_zero_start(self, lat8):
        vals = np.zeros((11, 8, 8), complex)
        vals[0, 1, 0] = 1.0
        with pytest.raises(ConfigError):
            WienerPath(lat8, TIMES, vals)

    def test_requires_uniform_grid(self, lat8):
        vals = np.zeros((3, 8, 8), complex)
        with pytest.raises(ConfigError):
            WienerPath(lat8, [0.0, 0.01, 0.05], vals)

    def test_increments_consistent(self, lat16):
        path = prior_path(lat16, 1)
        rebuilt = np.cumsum(path.increments, axis=0)
        assert np.max(np.abs(rebuilt - path.values[1:])) < 1e-14

    def test_refine_preserves_knots(self, lat8):
        path = prior_path(lat8, 2)
        fine = path.refine(4)
        assert fine.n_steps == 4 * path.n_steps
        assert np.max(np.abs(fine.values[::4] - path.values)) == 0.0
        mid = 0.5 * (path.values[0] + path.values[1])
        assert np.max(np.abs(fine.values[2] - mid)) < 1e-15


class TestStep:
    def test_stokes_decay_factor(self, lat32):
        # nu=0.1, lam=1, dt=0.01: factor e^{-0.001} ~ 0.99900050
        e = basis_field(lat32, (0, 1))
        out = step(e, SpectralField.zeros(lat32), DT, NU, include_nonlinear=False)
        factor = np.exp(-0.001)
        assert abs(factor - 0.999000499833375) < 1e-15
        assert np.max(np.abs(out.coeffs - factor * e.coeffs)) < 1e-16

    def test_pure_noise_step(self, lat16):
        # u=0, b=0: the step returns the decayed increment.
        inc = basis_field(lat16, (2, 2), "sin", 0.7)
        out = step(SpectralField.zeros(lat16), inc, DT, NU, include_nonlinear=False)
        expected = np.exp(-NU * 8.0 * DT) * inc.coeffs
        assert np.max(np.abs(out.coeffs - expected)) < 1e-16

    def test_raw_noise_placement(self, lat16):
        inc = basis_field(lat16, (2, 2), "sin", 0.7)
        out = step(
            SpectralField.zeros(lat16), inc, DT, NU,
            include_nonlinear=False, decay_noise=False,
        )
        assert np.max(np.abs(out.coeffs - inc.coeffs)) == 0.0

    def test_taylor_green_ten_steps(self, lat32):
        u = taylor_green(lat32)
        current = u
        for n in range(10):
            current = step(current, SpectralField.zeros(lat32), DT, NU)
        expected = np.exp(-2 * NU * 0.1) * u.coeffs
        scale = np.max(np.abs(expected))
        assert np.max(np.abs(current.coeffs - expected)) < 1e-10 * scale

    def test_nonfinite_rejected(self, lat8):
        bad = SpectralField.zeros(lat8)
        bad.coeffs[1, 0] = np.nan
        with pytest.raises(NumericalError):
            step(bad, SpectralField.zeros(lat8), DT, NU)


class TestSolveForward:
    def test_zero_everything(self, lat16):
        traj = solve_forward(
            SpectralField.zeros(lat16), WienerPath.zeros(lat16, TIMES), NU
        )
        assert np.all(traj.states == 0.0)

    def test_shear_mode_exact_decay(self, lat16):
        # single shear mode: the advection vanishes identically, so the
        # full nonlinear solver reproduces the analytic decay.
        e = basis_field(lat16, (1, 2), "cos", 0.8)
        traj = solve_forward(e, WienerPath.zeros(lat16, TIMES), NU)
        lam = 5.0
        for n, t in enumerate(TIMES):
            expected = np.exp(-NU * lam * t) * e.coeffs
            assert np.max(np.abs(traj.states[n] - expected)) < 1e-12

    def test_matches_repeated_step(self, lat8):
        path = prior_path(lat8, 3)
        traj = solve_forward(taylor_green(lat8), path, NU)
        u = taylor_green(lat8)
        for n in range(path.n_steps):
            u = step(u, SpectralField(lat8, path.increments[n]), DT, NU)
            assert np.max(np.abs(u.coeffs - traj.states[n + 1])) < 1e-14

    def test_first_order_convergence(self, lat16):
        # Fixed piecewise-linear path; errors against a dt/8 reference
        # should shrink by ~7/3 when dt halves.
        path = prior_path(lat16, 4)
        u0 = taylor_green(lat16)
        ref = solve_forward(u0, path.refine(8), NU).states[-1]
        ratios = []
        err_h = np.linalg.norm(solve_forward(u0, path, NU).states[-1] - ref)
        err_h2 = np.linalg.norm(solve_forward(u0, path.refine(2), NU).states[-1] - ref)
        ratios.append(err_h / err_h2)
        assert 1.5 <= ratios[0] <= 2.5

    def test_blowup_guard(self, lat8):
        e = basis_field(lat8, (0, 1), "cos", 5.0)
        with pytest.raises(BlowupError) as info:
            solve_forward(e, WienerPath.zeros(lat8, TIMES), NU, blowup_cap=1.0)
        assert "knot 1" in str(info.value)

    def test_energy_decay_without_forcing(self, lat16):
        rng = np.random.default_rng(6)
        u0 = random_field(lat16, rng, decay=0.1, scale=2.0)
        traj = solve_forward(u0, WienerPath.zeros(lat16, TIMES), NU)
        norms = [sobolev_norm(traj.field_at(n), 0.0) for n in range(11)]
        for a, b in zip(norms, norms[1:]):
            assert b <= a + 50.0 * DT**2 * max(1.0, a)

    def test_forward_continuity_in_path(self, lat16):
        # ||u(T; W) - u(T; W')|| shrinks with the path perturbation and
        # the ratio to the perturbation size stays bounded.
        base_rng = np.random.default_rng(7)
        spec = make_prior(lat16, 0.1, DT)
        s = 0.75
        ratios = []
        for trial in range(20):
            path = sample_path(spec, base_rng)
            pert = sample_path(spec, base_rng)
            pert_scale = pert.sup_norm(s)
            u0 = random_field(lat16, base_rng, decay=0.2)
            uT = solve_forward(u0, path, NU).states[-1]
            errs = []
            for eps in (1e-2, 1e-3, 1e-4):
                shifted = WienerPath(
                    lat16, path.times, path.values + (eps / pert_scale) * pert.values
                )
                vT = solve_forward(u0, shifted, NU).states[-1]
                errs.append(np.linalg.norm(uT - vT))
            assert errs[0] > errs[1] > errs[2]
            ratios.append(errs[0] / 1e-2)
        assert max(ratios) < 10.0 * min(r for r in ratios if r > 0) + 10.0


class TestStochasticConvolution:
    def test_zero_path(self, lat16):
        z = stochastic_convolution(WienerPath.zeros(lat16, TIMES), 0.05, NU)
        assert np.all(z.coeffs == 0.0)

    def test_linear_ramp_closed_form(self, lat16):
        c = 2.7
        mode = (1, 2)
        lam = 5.0
        path = WienerPath.zeros(lat16, TIMES)
        i = lat16.index_of(mode)
        for n, t in enumerate(TIMES):
            path.values[n][i] = c * t
        for t in (0.02, 0.055, 0.1):
            z = stochastic_convolution(path, t, NU)
            expected = c * (1.0 - np.exp(-NU * lam * t)) / (NU * lam)
            assert abs(z.coeffs[i] - expected) < 1e-12

    def test_linearity(self, lat16):
        rng = np.random.default_rng(8)
        spec = make_prior(lat16, 0.1, DT)
        wa = sample_path(spec, rng)
        wb = sample_path(spec, rng)
        za = stochastic_convolution(wa, 0.08, NU).coeffs
        zb = stochastic_convolution(wb, 0.08, NU).coeffs
        combo = WienerPath(lat16, TIMES, 2.0 * wa.values - 0.5 * wb.values)
        zc = stochastic_convolution(combo, 0.08, NU).coeffs
        scale = max(np.max(np.abs(za)), np.max(np.abs(zb)), 1.0)
        assert np.max(np.abs(zc - (2.0 * za - 0.5 * zb))) < 1e-13 * scale

    def test_time_out_of_range(self, lat8):
        path = WienerPath.zeros(lat8, TIMES)
        with pytest.raises(ConfigError):
            stochastic_convolution(path, 0.2, NU)
        with pytest.raises(ConfigError):
            stochastic_convolution(path, -0.01, NU)


class TestWeakFormResidual:
    def test_zero_trajectory(self, lat16):
        path = WienerPath.zeros(lat16, TIMES)
        traj = solve_forward(SpectralField.zeros(lat16), path, NU)
        assert weak_form_residual(traj, path, (0, 1), 10, NU) == 0.0

    def test_stokes_run_residual_shrinks(self, lat16):
        # Residual is quadrature + scheme error: O(dt) or better.
        u0 = random_field(lat16, np.random.default_rng(9), decay=0.3)
        resids = []
        for factor in (1, 2, 4):
            path = WienerPath.zeros(lat16, TIMES).refine(factor)
            traj = solve_forward(u0, path, NU, include_nonlinear=False)
            resids.append(
                weak_form_residual(
                    traj, path, (1, 1), path.n_steps, NU, include_nonlinear=False
                )
            )
        assert resids[0] > 0
        assert resids[1] < 0.6 * resids[0]
        assert resids[2] < 0.6 * resids[1]

    def test_full_nonlinear_residual_bounded(self, lat32):
        # Reference-experiment parameters: residual below 10 dt times the
        # solution scale for the watched modes.
        path = prior_path(lat32, 10)
        traj = solve_forward(taylor_green(lat32), path, NU)
        scale = max(sobolev_norm(traj.field_at(n), 0.0) for n in range(11))
        for mode in [(0, 1), (4, 4)]:
            resid = weak_form_residual(traj, path, mode, 10, NU)
            assert resid < 10.0 * DT * max(scale, 1.0)
