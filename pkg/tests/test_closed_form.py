"""Fourier-domain characteristics solver for the narrow-cone transport equation."""

import math
import warnings

import numpy as np
import pytest

from beamflow.errors import NumericalError
from beamflow.medium import MediumStats
from beamflow.transport import (design_grids, initial_mass, initial_wigner,
                                propagate_closed_form,
                                total_cross_section_paraxial)
from beamflow.transport.closed_form import _centered_grid, fourier_grid_transform
from beamflow.transport.kernels import FlowVelocity


@pytest.fixture
def grids(stats, wn, pulse_source, flow1):
    sig = total_cross_section_paraxial(stats, wn)
    return design_grids(stats, wn, pulse_source, flow1, 3.0 / sig)


def z_at(stats, wn, n_mfp):
    return n_mfp / total_cross_section_paraxial(stats, wn)


class TestFourierHelper:
    @pytest.mark.parametrize("sign,measure_factor", [(+1, 1.0), (-1, 0.5)])
    def test_matches_direct_sum(self, sign, measure_factor):
        rng = np.random.default_rng(0)
        n, h = 24, 0.41
        s = _centered_grid(n, h)
        f = rng.normal(size=n) + 1j * rng.normal(size=n)
        du = 2 * math.pi / (n * h)
        u = _centered_grid(n, du)
        measure = h * measure_factor
        direct = np.array([np.sum(f * np.exp(sign * 1j * uv * s)) * measure
                           for uv in u])
        fast = fourier_grid_transform(f, 0, h, n, sign, measure)
        assert np.abs(direct - fast).max() < 1e-12 * np.abs(direct).max()

    def test_multi_axis(self):
        rng = np.random.default_rng(1)
        f = rng.normal(size=(8, 12))
        out = fourier_grid_transform(f.astype(complex), 1, 0.3, 12, +1, 0.3)
        s = _centered_grid(12, 0.3)
        u = _centered_grid(12, 2 * math.pi / (12 * 0.3))
        direct = np.array([[np.sum(f[i] * np.exp(1j * uv * s)) * 0.3 for uv in u]
                           for i in range(8)])
        assert np.abs(out - direct).max() < 1e-12 * np.abs(direct).max()


class TestInitialCondition:
    def test_z_zero_returns_regularized_source(self, stats, wn, pulse_source,
                                               flow1, grids):
        f = propagate_closed_form(stats, wn, pulse_source, flow1, 0.0, grids=grids)
        om, kx, xx = grids.omega, grids.k_axes[0], grids.x_axes[0]
        W0 = initial_wigner(pulse_source, wn, om[:, None], [kx[None, :]])
        g = np.exp(-xx ** 2 / (2 * grids.sigma_reg ** 2)) \
            / (math.sqrt(2 * math.pi) * grids.sigma_reg)
        pred = W0[:, :, None] * g[None, None, :]
        assert np.abs(f.values - pred).max() < 1e-9 * pred.max()

    def test_initial_mass_formula(self, wn, pulse_source, grids, stats, flow1):
        f = propagate_closed_form(stats, wn, pulse_source, flow1, 0.0, grids=grids)
        assert f.total_mass() == pytest.approx(initial_mass(pulse_source, wn, 1),
                                               rel=1e-12)


class TestFreeTransport:
    def test_ballistic_shift(self, wn, pulse_source, grids):
        stats0 = MediumStats(c_o=340.0, sigma_c=0.0, ell=1.7, T_corr=0.25)
        flow0 = FlowVelocity(v_perp=np.zeros(1))
        z = 5.0
        f = propagate_closed_form(stats0, wn, pulse_source, flow0, z, grids=grids)
        om, kx, xx = grids.omega, grids.k_axes[0], grids.x_axes[0]
        W0 = initial_wigner(pulse_source, wn, om[:, None], [kx[None, :]])
        shift = kx[None, :, None] * z / wn.k_o
        g = np.exp(-(xx[None, None, :] - shift) ** 2
                   / (2 * grids.sigma_reg ** 2)) \
            / (math.sqrt(2 * math.pi) * grids.sigma_reg)
        pred = W0[:, :, None] * g
        assert np.abs(f.values - pred).max() < 1e-9 * pred.max()


class TestConservationAndPositivity:
    def test_mass_invariant_over_range(self, stats, wn, pulse_source, flow1):
        sig = total_cross_section_paraxial(stats, wn)
        z_max = 5.0 / sig
        grids = design_grids(stats, wn, pulse_source, flow1, z_max)
        m0 = initial_mass(pulse_source, wn, 1)
        for frac in (0.0, 0.2, 0.6, 1.0):
            f = propagate_closed_form(stats, wn, pulse_source, flow1,
                                      frac * z_max, grids=grids)
            assert abs(f.total_mass() - m0) / m0 < 1e-6

    def test_nonnegative_within_budget(self, stats, wn, pulse_source, flow1, grids):
        f = propagate_closed_form(stats, wn, pulse_source, flow1,
                                  z_at(stats, wn, 3.0), grids=grids)
        assert f.values.min() >= -1e-9 * f.values.max()

    def test_aliasing_detected(self, stats, wn, pulse_source, flow1):
        # deliberately tiny box in t: mass parks on the boundary
        sig = total_cross_section_paraxial(stats, wn)
        z = 3.0 / sig
        good = design_grids(stats, wn, pulse_source, flow1, z)
        from beamflow.transport.closed_form import TransportGrids
        nt = 16
        t = _centered_grid(nt, 2 * pulse_source.T_s / nt)
        om = _centered_grid(nt, 2 * math.pi / (nt * (t[1] - t[0])))
        bad = TransportGrids(omega=om, k_axes=good.k_axes, x_axes=good.x_axes,
                             t=t, y_axes=good.y_axes, q_axes=good.q_axes,
                             sigma_reg=good.sigma_reg)
        with pytest.raises(NumericalError), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            propagate_closed_form(stats, wn, pulse_source, flow1, z, grids=bad)

    def test_resolution_warning(self, stats, wn, pulse_source, flow1):
        sig = total_cross_section_paraxial(stats, wn)
        z = 3.0 / sig
        good = design_grids(stats, wn, pulse_source, flow1, z)
        with pytest.warns(UserWarning, match="decoherence"):
            propagate_closed_form(stats, wn, pulse_source, flow1, 60.0 / sig,
                                  grids=good, aliasing_tol=1.0)


class TestFlowShift:
    def test_flow_sets_omega_k_covariance(self, stats, wn, pulse_source):
        """Each transfer adds omega' + k'.v with the same k' added to k, so
        Cov(omega, k) = v * Sigma_par z / ell^2 exactly (Wald identity)."""
        z = z_at(stats, wn, 2.0)
        flow_fast = FlowVelocity(v_perp=np.array([2.0]))
        grids = design_grids(stats, wn, pulse_source, flow_fast, z)
        f = propagate_closed_form(stats, wn, pulse_source, flow_fast, z,
                                  grids=grids)
        m0 = initial_mass(pulse_source, wn, 1)
        assert abs(f.total_mass() - m0) / m0 < 1e-6
        om = grids.omega
        kx = grids.k_axes[0]
        joint = f.values.sum(axis=2)
        mass = joint.sum()
        cov = float((joint * om[:, None] * kx[None, :]).sum() / mass)
        want = flow_fast.v_perp[0] * 2.0 / stats.ell ** 2
        assert cov == pytest.approx(want, rel=1e-4)

    def test_still_flow_runs(self, stats, wn, pulse_source):
        z = z_at(stats, wn, 1.5)
        flow0 = FlowVelocity(v_perp=np.zeros(1))
        grids = design_grids(stats, wn, pulse_source, flow0, z)
        f = propagate_closed_form(stats, wn, pulse_source, flow0, z, grids=grids)
        m0 = initial_mass(pulse_source, wn, 1)
        assert abs(f.total_mass() - m0) / m0 < 1e-6


class TestGenericModelPath:
    def test_gamma_generic_matches_gaussian(self, wn, pulse_source, flow1):
        """Route the Gaussian model through the generic Simpson path."""
        from beamflow.medium import register_cov_model
        from beamflow.transport import closed_form as cf

        class Alias:
            tag = "test_alias_gaussian"
            time_dependent = True

            def cov(self, tau, rvec):
                r2 = np.sum(np.square(rvec), axis=-1)
                return np.exp(-0.5 * (np.square(tau) + r2))

        register_cov_model(Alias())
        stats_g = MediumStats(c_o=340.0, sigma_c=0.02, ell=1.7, T_corr=0.25)
        stats_a = MediumStats(c_o=340.0, sigma_c=0.02, ell=1.7, T_corr=0.25,
                              cov_model="test_alias_gaussian")
        tau = np.array([0.0, 0.4])[:, None, None]
        b = [np.array([0.0, 0.8])[None, :, None]]
        s = [np.array([0.0, 0.02, -0.05])[None, None, :]]
        z = 4.0
        got = cf._gamma_generic(stats_a, tau, b, s, z)
        want = cf._gamma_exponent(stats_g, tau, b, s, z)
        assert np.abs(got - want).max() < 1e-7 * np.abs(want).max()
