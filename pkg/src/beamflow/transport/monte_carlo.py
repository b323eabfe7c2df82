"""Jump-process Monte Carlo solver for the narrow-cone transport equation.

Each particle carries a phase-space state (omega, k, x).  Between jumps the
cross-range position advances ballistically, dx/dz = k / k_o.  Jumps arrive
as a Poisson process in z with the constant total rate Sigma_par; at a jump
a transfer (omega', k') is drawn from the normalized kernel density
Q_par(omega', k') / ((2 pi)^{d+1} Sigma_par) and the state updates as

    omega += omega' + k' . v_o,      k += k'.

Because the jump rate does not depend on the state, the jump count and the
jump ranges can be drawn first and the final state accumulated in a single
vectorized pass: with jumps at ranges z_j,

    x(z) = x_0 + (k_0 / k_o) z + sum_j (k'_j / k_o)(z - z_j).

Particles are partitioned into fixed-size blocks; block b uses the
counter-based Philox stream seeded by (seed, b), so the result depends only
on (seed, n_particles, block size) and is invariant under the worker count.
Histograms from blocks are merged by summation.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
import math

import numpy as np

from ..errors import ConfigurationError
from .field import WignerField

__all__ = ["propagate_monte_carlo", "MonteCarloResult"]

_BLOCK = 1 << 15


class MonteCarloResult:
    """Histogram estimate with per-bin standard errors and jump statistics."""

    def __init__(self, field, n_particles, n_jumps_total, seed):
        self.field = field
        self.n_particles = n_particles
        self.n_jumps_total = n_jumps_total
        self.seed = seed

    @property
    def mean_jumps(self):
        return self.n_jumps_total / self.n_particles

    @property
    def mean_jumps_stderr(self):
        # Poisson counts: var of the per-particle mean is lambda / N
        return math.sqrt(self.mean_jumps / self.n_particles)


def _kernel_sampler(stats, rng, n, d):
    """Draw (omega', k') from the normalized paraxial kernel density."""
    model = stats.model
    if stats.cov_model == "gaussian":
        om = rng.normal(0.0, 1.0 / stats.T_corr, size=n)
        kk = rng.normal(0.0, 1.0 / stats.ell, size=(n, d))
        return om, kk
    if not getattr(model, "time_dependent", True):
        raise ConfigurationError("Monte Carlo transport requires a time-dependent model")
    return _rejection_sampler(stats, rng, n, d)


def _rejection_sampler(stats, rng, n, d):
    """Generic models: rejection against a fitted Gaussian envelope."""
    from ..medium import psd_eval

    # fit envelope variance from spectral probes, then bound the ratio
    probe = np.linspace(-6.0, 6.0, 41)
    zero = np.zeros((41, d))
    sp_t = psd_eval(stats, probe, np.concatenate([zero, np.zeros((41, 1))], axis=-1))
    var_t = float(np.sum(sp_t * probe ** 2) / np.sum(sp_t)) * 1.5
    q = np.concatenate([probe[:, None], np.zeros((41, d))], axis=-1)
    sp_x = psd_eval(stats, np.zeros(41), q)
    var_x = float(np.sum(sp_x * probe ** 2) / np.sum(sp_x)) * 1.5

    def target(om, kk):
        qv = np.concatenate([stats.ell * kk, np.zeros((len(om), 1))], axis=-1)
        return psd_eval(stats, stats.T_corr * om, qv)

    def envelope(om, kk):
        return np.exp(-0.5 * (stats.T_corr * om) ** 2 / var_t
                      - 0.5 * np.sum((stats.ell * kk) ** 2, axis=-1) / var_x)

    # bound constant from a probe grid
    og = np.linspace(-5, 5, 21) / stats.T_corr
    kg = np.linspace(-5, 5, 21) / stats.ell
    om_m, k_m = np.meshgrid(og, kg, indexing="ij")
    kk_m = np.repeat(k_m.ravel()[:, None], d, axis=1)
    ratio = target(om_m.ravel(), kk_m) / envelope(om_m.ravel(), kk_m)
    c_bound = 1.2 * float(np.max(ratio))

    out_om = np.empty(n)
    out_kk = np.empty((n, d))
    filled = 0
    while filled < n:
        m = 2 * (n - filled) + 16
        om = rng.normal(0.0, math.sqrt(var_t) / stats.T_corr, size=m)
        kk = rng.normal(0.0, math.sqrt(var_x) / stats.ell, size=(m, d))
        accept = rng.uniform(size=m) * c_bound * envelope(om, kk) <= target(om, kk)
        take = min(int(accept.sum()), n - filled)
        out_om[filled:filled + take] = om[accept][:take]
        out_kk[filled:filled + take] = kk[accept][:take]
        filled += take
    return out_om, out_kk


def _run_block(args):
    (stats, wn_k_o, source, v_perp, z, sigma_reg, n, seed, block_index, d) = args
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, block_index))))
    sigma = _block_sigma(stats, wn_k_o)
    # initial state from the source phase-space density
    omega = rng.normal(0.0, 1.0 / (math.sqrt(2.0) * source.T_s), size=n)
    k = rng.normal(0.0, 1.0 / (math.sqrt(2.0) * source.ell_s), size=(n, d))
    x = rng.normal(0.0, sigma_reg, size=(n, d))
    n_jumps = rng.poisson(sigma * z, size=n)
    total = int(n_jumps.sum())
    om_j, k_j = _kernel_sampler(stats, rng, total, d)
    z_j = rng.uniform(0.0, z, size=total)
    owner = np.repeat(np.arange(n), n_jumps)
    # ballistic advance of the pre-jump state plus per-jump contributions
    x += k * (z / wn_k_o)
    np.add.at(omega, owner, om_j + k_j @ v_perp)
    np.add.at(k, owner, k_j)
    contrib = k_j * ((z - z_j)[:, None] / wn_k_o)
    np.add.at(x, owner, contrib)
    return omega, k, x, total


def _block_sigma(stats, k_o):
    from ..medium import marginal_covariance
    r00 = float(marginal_covariance(stats, 0.0, np.zeros(1)))
    return stats.sigma_c ** 2 * stats.ell * k_o ** 2 * r00 / 4.0


def propagate_monte_carlo(stats, wn, source, flow, z, n_particles, seed,
                          grids=None, workers=1, block=_BLOCK, meta=None):
    """Monte Carlo estimate of the Wigner field at range z.

    Returns a :class:`MonteCarloResult` whose ``field`` carries the histogram
    density and per-bin standard errors on the grid of ``grids`` (designed
    automatically when omitted).  Deterministic for fixed (seed, n_particles,
    block); the worker count only controls scheduling.
    """
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    if source.T_s is None:
        raise ConfigurationError("Monte Carlo transport requires a finite "
                                 "source duration T_s")
    d = flow.d
    if grids is None:
        from .closed_form import design_grids
        grids = design_grids(stats, wn, source, flow, z)
    sigma_reg = grids.sigma_reg

    counts = [block] * (n_particles // block)
    if n_particles % block:
        counts.append(n_particles % block)
    tasks = [(stats, wn.k_o, source, flow.v_perp, z, sigma_reg, n, seed, i, d)
             for i, n in enumerate(counts)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, tasks))
    else:
        results = [_run_block(t) for t in tasks]

    omega = np.concatenate([r[0] for r in results])
    k = np.concatenate([r[1] for r in results])
    x = np.concatenate([r[2] for r in results])
    n_jumps_total = sum(r[3] for r in results)

    edges = [_edges(grids.omega)] + [_edges(a) for a in grids.k_axes] \
        + [_edges(a) for a in grids.x_axes]
    sample = np.column_stack([omega, k, x])
    hist, _ = np.histogramdd(sample, bins=edges)

    from .closed_form import initial_mass
    mass = initial_mass(source, wn, d)
    w = mass / n_particles
    cell = grids.omega[1] - grids.omega[0]
    for a in list(grids.k_axes) + list(grids.x_axes):
        cell *= a[1] - a[0]
    values = hist * (w / cell)
    stderr = np.sqrt(hist) * (w / cell)

    field = WignerField(
        omega=grids.omega, k_axes=list(grids.k_axes), x_axes=list(grids.x_axes),
        z=float(z), values=values, stderr=stderr,
        meta={
            "solver": "monte_carlo_jump_process",
            "medium_hash": stats.content_hash(),
            "n_particles": n_particles,
            "seed": seed,
            "block": block,
            "particle_weight": w,
            "sigma_reg": sigma_reg,
            **(meta or {}),
        },
    )
    return MonteCarloResult(field, n_particles, n_jumps_total, seed)


def _edges(axis):
    step = axis[1] - axis[0]
    return np.concatenate([axis - step / 2.0, [axis[-1] + step / 2.0]])
