"""Built-in oracle cross-checks, exposed through the ``verify`` subcommand.

Each check pits an implementation against an independent route: closed
forms against quadrature, spectral-domain integrals against correlation-
domain ones, the Fourier propagator against the jump-process sampler.
The battery is a fast subset of the full acceptance suite, meant to be run
on any scenario to confirm the installation and the scenario's numerics.
"""

from __future__ import annotations

import math
import time

import numpy as np

from . import coherence, transport
from .transport import kernels

__all__ = ["run_crosschecks"]


def _check(name, fn):
    t0 = time.perf_counter()
    try:
        detail = fn()
        ok = True
    except AssertionError as exc:
        detail = str(exc)
        ok = False
    return {"name": name, "passed": ok, "detail": detail,
            "seconds": time.perf_counter() - t0}


def run_crosschecks(scenario, quick=True):
    """Run the oracle battery on a scenario; returns a list of result dicts."""
    stats = scenario.medium
    wn = scenario.wavenumbers
    flow = scenario.flow
    checks = []

    def kernel_conservation():
        worst = 0.0
        for d in (1, 2):
            fl = kernels.FlowVelocity(v_perp=np.zeros(d))
            sig = transport.total_cross_section_paraxial(stats, wn)
            num = _paraxial_kernel_mass(stats, wn, d)
            worst = max(worst, abs(num - sig) / sig)
        assert worst < 1e-8, f"relative error {worst:.2e} >= 1e-8"
        return f"max rel err {worst:.2e} (d=1,2)"

    def decay_duality():
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(3):
            k = np.array([rng.uniform(-0.5, 0.5) * wn.k_o])
            lhs = kernels.kernel_integral(stats, wn, flow, k)
            rhs = -2.0 * kernels.decay_rate(stats, wn, flow, k).real
            worst = max(worst, abs(lhs - rhs) / abs(rhs))
        assert worst < 1e-4, f"relative error {worst:.2e} >= 1e-4"
        return f"max rel err {worst:.2e}"

    def coherence_dual_route():
        src = scenario.source
        rng = np.random.default_rng(11)
        p = coherence.coherence_params(stats, wn, src, flow, scenario.array.kappa,
                                       scenario.z)
        worst = 0.0
        for _ in range(5):
            dt = rng.normal(0.0, p.decoherence_time if np.isfinite(p.decoherence_time)
                            else 1.0)
            dx = rng.normal(0.0, p.speckle_len_1, size=flow.d)
            x = rng.normal(0.0, p.beam_radius / 2.0, size=flow.d)
            c1 = coherence.coherence_function(stats, wn, src, flow, dt, dx, x,
                                              scenario.z, method="closed")
            c2 = coherence.coherence_function(stats, wn, src, flow, dt, dx, x,
                                              scenario.z, method="quadrature")
            worst = max(worst, abs(c1 - c2) / abs(c1))
        assert worst < 1e-8, f"relative error {worst:.2e} >= 1e-8"
        return f"max rel err {worst:.2e}"

    def estimate_dual_route():
        src = scenario.source
        arr = scenario.array
        rng = np.random.default_rng(13)
        p = coherence.coherence_params(stats, wn, src, flow, arr.kappa, scenario.z)
        worst = 0.0
        for _ in range(3):
            omega = rng.normal(0.0, 0.5 / p.decoherence_time
                               if np.isfinite(p.decoherence_time) else 1.0)
            k = p.k_o * arr.x_o / scenario.z * p.peak_bias \
                + rng.normal(0.0, p.doa_width() * p.k_o, size=flow.d)
            from .array import estimate_wigner
            w1 = estimate_wigner(stats, wn, src, flow, arr, omega, k, arr.x_o,
                                 scenario.z, method="fourier")
            w2 = estimate_wigner(stats, wn, src, flow, arr, omega, k, arr.x_o,
                                 scenario.z, method="smoothing")
            worst = max(worst, abs(w1 - w2) / max(abs(w1), 1e-300))
        assert worst < 1e-6, f"relative error {worst:.2e} >= 1e-6"
        return f"max rel err {worst:.2e}"

    def rte_identity():
        rng = np.random.default_rng(3)
        probes = []
        for _ in range(100):
            k = rng.uniform(-0.6, 0.6, size=2) * wn.k_o / math.sqrt(2.0)
            kp = rng.uniform(-0.6, 0.6, size=2) * wn.k_o / math.sqrt(2.0)
            probes.append((rng.normal(), rng.normal(),
                           k[:flow.d] if flow.d == 1 else k,
                           kp[:flow.d] if flow.d == 1 else kp))
        fl = flow
        rep = kernels.rte_kernel_identity_check(stats, wn, fl, probes)
        assert rep["passed"], f"max rel err {rep['max_rel_err']:.2e} > 1e-12"
        return f"max rel err {rep['max_rel_err']:.2e} over {rep['n_probes']} probes"

    def conservation_and_mc():
        src = scenario.source
        if src.T_s is None:
            return "skipped: harmonic source with no acquisition window"
        sig = transport.total_cross_section_paraxial(stats, wn)
        z = min(scenario.z, 3.0 / sig)
        fl = flow
        grids = transport.design_grids(stats, wn, src, fl, z)
        field = transport.propagate_closed_form(stats, wn, src, fl, z, grids=grids)
        mass0 = transport.initial_mass(src, wn, fl.d)
        drift = abs(field.total_mass() - mass0) / mass0
        assert drift < 1e-6, f"mass drift {drift:.2e} >= 1e-6"
        n = 100_000 if quick else 1_000_000
        mc = transport.propagate_monte_carlo(stats, wn, src, fl, z, n,
                                             seed=scenario.seed,
                                             grids=grids, workers=1)
        factors = [max(1, s // 12) for s in field.values.shape]
        ref = field.coarsen(factors)
        got = mc.field.coarsen(factors)
        cell = ref.cell_volume()
        l1 = float(np.abs(got.values - ref.values).sum() * cell) / mass0
        tol = 0.12 if quick else 0.05
        assert l1 < tol, f"MC vs closed-form L1 distance {l1:.3f} >= {tol}"
        return f"mass drift {drift:.1e}; MC L1 {l1:.3f} at {n} particles"

    checks.append(_check("kernel-conservation identity", kernel_conservation))
    checks.append(_check("decay-kernel duality", decay_duality))
    checks.append(_check("coherence closed vs quadrature", coherence_dual_route))
    checks.append(_check("wigner estimate dual route", estimate_dual_route))
    checks.append(_check("radiative-transfer prefactor chain", rte_identity))
    checks.append(_check("transport conservation + MC cross-validation",
                         conservation_and_mc))
    return checks


def _paraxial_kernel_mass(stats, wn, d):
    """Numeric int Q_par dw dk / (2 pi)^{d+1} on a wide tensor grid."""
    n = 200 if d == 1 else 96
    x, w = np.polynomial.legendre.leggauss(n)
    half_w = 10.0 / stats.T_corr
    half_k = 10.0 / stats.ell
    wg = x * half_w
    ww = w * half_w
    kg = x * half_k
    wk = w * half_k
    if d == 1:
        W, K = np.meshgrid(wg, kg, indexing="ij")
        vals = kernels.dcs_paraxial(stats, wn, W, K[..., None])
        total = np.einsum("ij,i,j->", vals, ww, wk)
    else:
        W, K1, K2 = np.meshgrid(wg, kg, kg, indexing="ij")
        kk = np.stack([K1, K2], axis=-1)
        vals = kernels.dcs_paraxial(stats, wn, W, kk)
        total = np.einsum("ijk,i,j,k->", vals, ww, wk, wk)
    return float(total) / (2.0 * math.pi) ** (d + 1)
