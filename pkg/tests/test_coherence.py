"""Coherence coefficients, time-harmonic Wigner transform, dual routes."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beamflow.coherence import (coherence_function, coherence_params,
                                wigner_quadratic_form, wigner_time_harmonic)
from beamflow.errors import ConfigurationError
from beamflow.medium import MediumStats, taylor_coeffs
from beamflow.transport.kernels import FlowVelocity, SourceSpec


def params_for(stats, wn, flow, ell_s, z, kappa=300.0, sigma=1.0):
    src = SourceSpec(ell_s=ell_s, sigma=sigma)
    return coherence_params(stats, wn, src, flow, kappa, z), src


class TestCoefficients:
    def test_values_against_formulas(self, stats, wn, flow1):
        z = 30.0
        p, _ = params_for(stats, wn, flow1, ell_s=1.2, z=z)
        tc = taylor_coeffs(stats, wn.k_o)
        assert p.decoherence_time == pytest.approx(
            stats.T_corr / math.sqrt(tc.alpha * z), rel=1e-14)
        assert p.decoherence_length == pytest.approx(
            stats.ell / math.sqrt(tc.vartheta * z), rel=1e-14)
        assert p.critical_range == pytest.approx(
            (stats.ell / 1.2) ** 2 / tc.vartheta, rel=1e-14)
        u = (1.2 / p.decoherence_length) ** 2
        assert p.u == pytest.approx(u, rel=1e-13)
        assert p.beam_radius == pytest.approx(
            z / (math.sqrt(2) * 1.2 * wn.k_o) * math.sqrt(1 + 2 * u / 3), rel=1e-13)

    def test_scaling_constants_z_free(self, stats, wn, flow1):
        vals = []
        for z in (10.0, 20.0, 40.0):
            p, _ = params_for(stats, wn, flow1, ell_s=1.2, z=z)
            vals.append((p.decoherence_time * math.sqrt(z),
                         p.decoherence_length * math.sqrt(z)))
        for a, b in zip(vals[:-1], vals[1:]):
            assert a[0] == pytest.approx(b[0], rel=1e-13)
            assert a[1] == pytest.approx(b[1], rel=1e-13)

    def test_beam_radius_asymptotics(self, stats, wn, flow1):
        # source-dominated side: R_z -> z / (sqrt(2) ell_s k_o)
        z = 30.0
        p, _ = params_for(stats, wn, flow1, ell_s=1e-2 * 0.4, z=z)
        assert p.beam_radius == pytest.approx(
            z / (math.sqrt(2) * p.ell_s * wn.k_o), rel=1e-2)
        # scattering-dominated side: R_z -> sqrt(vartheta/3) z^{3/2} / (k_o ell)
        tc = taylor_coeffs(stats, wn.k_o)
        p2, _ = params_for(stats, wn, flow1, ell_s=1e2 * 0.4, z=z)
        want = math.sqrt(tc.vartheta / 3) * z ** 1.5 / (wn.k_o * stats.ell)
        assert p2.beam_radius == pytest.approx(want, rel=1e-2)

    def test_speckle_scale_limits(self, stats, wn, flow1):
        z = 30.0
        p, _ = params_for(stats, wn, flow1, ell_s=100 * 0.4, z=z)
        assert p.speckle_len_1 == pytest.approx(math.sqrt(2) * p.ell_s, rel=1e-2)
        assert p.speckle_len_2 == pytest.approx(2 * p.decoherence_length, rel=1e-2)
        assert p.drift_factor == pytest.approx(1.0, abs=1e-2)

    def test_drift_factor_weak_medium_limit(self, wn, flow1):
        weak = MediumStats(c_o=340.0, sigma_c=1e-7, ell=1.7, T_corr=0.25)
        p, _ = params_for(weak, wn, flow1, ell_s=1.2, z=30.0)
        assert p.drift_factor == pytest.approx(0.5, abs=1e-9)

    def test_scaling_law_slopes(self, stats, wn, flow1):
        # far beyond the critical range the log-log slopes are 3/2 and -1/2
        tc = taylor_coeffs(stats, wn.k_o)
        ell_s = 30.0  # deep in the scattering-dominated branch
        z_star = (stats.ell / ell_s) ** 2 / tc.vartheta
        zs = np.geomspace(3e4 * z_star, 3e6 * z_star, 7)
        R, D, T = [], [], []
        for z in zs:
            p, _ = params_for(stats, wn, flow1, ell_s=ell_s, z=z)
            R.append(p.beam_radius)
            D.append(p.decoherence_length)
            T.append(p.decoherence_time)
        sR = np.polyfit(np.log(zs), np.log(R), 1)[0]
        sD = np.polyfit(np.log(zs), np.log(D), 1)[0]
        sT = np.polyfit(np.log(zs), np.log(T), 1)[0]
        assert abs(sR - 1.5) < 1e-3
        assert abs(sD + 0.5) < 1e-3
        assert abs(sT + 0.5) < 1e-3

    def test_frozen_medium_flag(self, wn, flow1):
        frozen = MediumStats(c_o=340.0, sigma_c=0.02, ell=1.7, T_corr=0.25,
                             cov_model="gaussian_frozen")
        p, _ = params_for(frozen, wn, flow1, ell_s=1.2, z=30.0)
        assert math.isinf(p.decoherence_time)
        assert not p.time_dependent

    def test_z_must_be_positive(self, stats, wn, flow1):
        with pytest.raises(ValueError):
            params_for(stats, wn, flow1, ell_s=1.2, z=0.0)


class TestWignerTimeHarmonic:
    def test_requires_harmonic_source(self, stats, wn, flow1):
        pulse = SourceSpec(ell_s=1.2, T_s=1.0, sigma_s=1.0, harmonic=False)
        with pytest.raises(ConfigurationError):
            wigner_time_harmonic(stats, wn, pulse, flow1, 0.0, np.zeros(1),
                                 np.zeros(1), 30.0, warn_regime=False)

    def test_real_positive_at_center(self, stats, wn, flow1):
        src = SourceSpec(ell_s=1.2, sigma=1.0)
        w = wigner_time_harmonic(stats, wn, src, flow1, 0.0, np.zeros(1),
                                 np.zeros(1), 30.0, warn_regime=False)
        assert w > 0

    @pytest.mark.parametrize("d", [1, 2])
    def test_closed_vs_quadrature(self, stats, wn, d):
        flow = FlowVelocity(v_perp=np.array([0.4, -0.25][:d]))
        src = SourceSpec(ell_s=1.2, sigma=1.0)
        z = 30.0
        _, M = wigner_quadratic_form(stats, wn, src, flow, z)
        vstd = np.sqrt(np.diag(M))
        rng = np.random.default_rng(d)
        worst = 0.0
        for _ in range(20):
            om = rng.normal(0.0, 0.8 * vstd[0])
            k = rng.normal(0.0, 0.8 * vstd[1], size=d)
            x = k * z / wn.k_o + rng.normal(0.0, 0.8 * vstd[1 + d], size=d)
            w1 = wigner_time_harmonic(stats, wn, src, flow, om, k, x, z,
                                      method="closed", warn_regime=False)
            w2 = wigner_time_harmonic(stats, wn, src, flow, om, k, x, z,
                                      method="quadrature", warn_regime=False)
            worst = max(worst, abs(w1 - w2) / abs(w1))
        assert worst <= 1e-8

    def test_weak_scattering_warns(self, wn, flow1):
        weak = MediumStats(c_o=340.0, sigma_c=1e-4, ell=1.7, T_corr=0.25)
        src = SourceSpec(ell_s=1.2, sigma=1.0)
        with pytest.warns(UserWarning, match="strong-scattering"):
            wigner_time_harmonic(weak, wn, src, flow1, 0.0, np.zeros(1),
                                 np.zeros(1), 30.0)

    def test_frequency_tail_rate(self, stats, wn):
        """Integrated over k, the frequency profile decays like the Fourier
        pair of the temporal coherence decay: exp(-omega^2 T_z^2 / 2)."""
        flow0 = FlowVelocity(v_perp=np.zeros(1))
        src = SourceSpec(ell_s=1.2, sigma=1.0)
        z = 30.0
        p = coherence_params(stats, wn, src, flow0, 300.0, z)
        kk = np.linspace(-25, 25, 901)
        def k_marginal(om):
            vals = [wigner_time_harmonic(stats, wn, src, flow0, om,
                                         np.array([kv]), np.zeros(1), z,
                                         warn_regime=False) for kv in kk]
            return np.trapezoid(vals, kk)
        w1, w2 = 2.0 / p.decoherence_time, 3.0 / p.decoherence_time
        r = math.log(k_marginal(w1) / k_marginal(w2))
        want = (w2 ** 2 - w1 ** 2) * p.decoherence_time ** 2 / 2
        assert r == pytest.approx(want, rel=1e-6)


class TestCoherenceFunction:
    def test_amplitude_at_origin(self, stats, wn, flow1):
        z = 30.0
        p, src = params_for(stats, wn, flow1, ell_s=1.2, z=z)
        c = coherence_function(stats, wn, src, flow1, 0.0, np.zeros(1),
                               np.zeros(1), z)
        want = src.sigma ** 2 * 1.2 / (2 ** 2.5 * wn.k_o * p.beam_radius)
        assert c.imag == 0
        assert c.real == pytest.approx(want, rel=1e-13)

    @pytest.mark.parametrize("d", [1, 2])
    def test_closed_vs_quadrature(self, stats, wn, d):
        flow = FlowVelocity(v_perp=np.array([0.4, -0.25][:d]))
        src = SourceSpec(ell_s=1.2, sigma=1.0)
        z = 30.0
        p = coherence_params(stats, wn, src, flow, 300.0, z)
        rng = np.random.default_rng(10 + d)
        worst = 0.0
        for _ in range(20):
            dt = rng.normal(0.0, p.decoherence_time)
            dx = rng.normal(0.0, p.speckle_len_1, size=d)
            x = rng.normal(0.0, p.beam_radius / 2, size=d)
            c1 = coherence_function(stats, wn, src, flow, dt, dx, x, z,
                                    method="closed")
            c2 = coherence_function(stats, wn, src, flow, dt, dx, x, z,
                                    method="quadrature")
            worst = max(worst, abs(c1 - c2) / abs(c1))
        assert worst <= 1e-8

    def test_deep_scattering_exponent_shape(self, stats, wn, flow1):
        """Far beyond the critical range the normalized coherence takes the
        four-term limit form with D1 -> sqrt(2) ell_s and D2 -> 2 D_z."""
        z = 30.0
        ell_s = 40.0
        p, src = params_for(stats, wn, flow1, ell_s=ell_s, z=z)
        dt, dxv = 0.02, 0.8
        dx = np.array([dxv])
        x = np.array([0.5])
        got = abs(coherence_function(stats, wn, src, flow1, dt, dx, x, z,
                                     params=p))
        c0 = abs(coherence_function(stats, wn, src, flow1, 0.0, np.zeros(1),
                                    np.zeros(1), z, params=p))
        drift = dxv - flow1.v_perp[0] * dt
        want = math.exp(-dt ** 2 / (2 * p.decoherence_time ** 2)
                        - 0.5 ** 2 / (2 * p.beam_radius ** 2)
                        - dxv ** 2 / (4 * ell_s ** 2)
                        - drift ** 2 / (8 * p.decoherence_length ** 2))
        assert got / c0 == pytest.approx(want, rel=2e-3)

    @given(dt=st.floats(-0.05, 0.05), dx=st.floats(-1.0, 1.0),
           x=st.floats(-1.0, 1.0))
    @settings(max_examples=40, deadline=None)
    def test_hermitian_symmetry(self, dt, dx, x):
        stats = MediumStats(c_o=340.0, sigma_c=0.02, ell=1.7, T_corr=0.25)
        from beamflow.transport.kernels import Wavenumbers
        wn = Wavenumbers(k_o=37.0, c_o=340.0)
        flow = FlowVelocity(v_perp=np.array([0.4]))
        src = SourceSpec(ell_s=1.2, sigma=1.0)
        a = coherence_function(stats, wn, src, flow, dt, np.array([dx]),
                               np.array([x]), 30.0)
        b = coherence_function(stats, wn, src, flow, -dt, np.array([-dx]),
                               np.array([x]), 30.0)
        assert a == pytest.approx(np.conj(b), rel=1e-12)

    def test_peak_at_zero_lag_when_still(self, stats, wn):
        flow0 = FlowVelocity(v_perp=np.zeros(1))
        src = SourceSpec(ell_s=1.2, sigma=1.0)
        c0 = abs(coherence_function(stats, wn, src, flow0, 0.0, np.zeros(1),
                                    np.zeros(1), 30.0))
        rng = np.random.default_rng(3)
        for _ in range(25):
            dt = rng.normal(0.0, 0.05)
            dx = rng.normal(0.0, 1.0, size=1)
            c = abs(coherence_function(stats, wn, src, flow0, dt, dx,
                                       np.zeros(1), 30.0))
            assert c <= c0 + 1e-15

    def test_fourier_consistency_with_wigner(self, stats, wn, flow1):
        """int C e^{i w dt - i k dx} ddt ddx reproduces the Wigner transform."""
        src = SourceSpec(ell_s=1.2, sigma=1.0)
        z = 30.0
        p = coherence_params(stats, wn, src, flow1, 300.0, z)
        nt, nx = 257, 257
        dts = np.linspace(-6 * p.decoherence_time, 6 * p.decoherence_time, nt)
        dxs = np.linspace(-6 * p.speckle_len_1, 6 * p.speckle_len_1, nx)
        x = np.array([0.4])
        DT, DX = np.meshgrid(dts, dxs, indexing="ij")
        from beamflow.imaging import _coherence_closed_grid
        C = _coherence_closed_grid(p, flow1.v_perp, DT, DX[..., None],
                                   np.broadcast_to(x, DT.shape + (1,)))
        for om, kv in [(0.0, 0.0), (10.0, 0.3), (-14.0, -0.5)]:
            phase = np.exp(1j * om * DT - 1j * kv * DX)
            got = np.trapezoid(np.trapezoid(C * phase, dxs, axis=1), dts, axis=0)
            want = wigner_time_harmonic(stats, wn, src, flow1, om,
                                        np.array([kv]), x, z, warn_regime=False)
            assert got.real == pytest.approx(want, rel=1e-6)
            assert abs(got.imag) < 1e-9 * abs(want)
