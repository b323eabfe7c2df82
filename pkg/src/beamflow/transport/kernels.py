"""Scattering kernels, coherent-wave decay and kernel identities.

Conventions (fixed throughout the package):

* forward Fourier transform in space uses exp(-i q . x); every 2*pi is
  attached to the inverse transform;
* the power spectral density is evaluated at the dimensionless arguments
  (T * frequency shift, ell * wavevector shift);
* wave vectors are split as kvec = (k, beta(k)) with beta(k) the range
  component, defined for |k| < k_o only.

The full-regime differential cross-section couples modes through the
speed-speed spectrum plus density terms carrying |q|^4 and |q|^2 spectral
weights (Fourier transforms of the Laplacian-squared and Laplacian of the
corresponding covariances).  In the narrow-cone (paraxial) limit only the
speed-speed term survives at leading order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math
import warnings

import numpy as np
from scipy import special

from ..errors import ConfigurationError, DomainError, NumericalError
from ..medium import marginal_covariance, psd_eval

__all__ = [
    "Wavenumbers",
    "FlowVelocity",
    "SourceSpec",
    "dcs_paraxial",
    "total_cross_section_paraxial",
    "scattering_mean_free_path_paraxial",
    "strong_scattering_ratio",
    "dcs_full",
    "phase_rate",
    "decay_rate",
    "mean_amplitude_decay",
    "scattering_mean_free_path",
    "kernel_integral",
    "rte_kernel_identity_check",
]


@dataclass(frozen=True)
class Wavenumbers:
    """Carrier wavenumber and the range-wavenumber map beta(k)."""

    k_o: float
    c_o: float = None

    @property
    def lambda_o(self):
        return 2.0 * math.pi / self.k_o

    @property
    def omega_o(self):
        if self.c_o is None:
            raise ConfigurationError("omega_o requires the reference sound speed")
        return self.c_o * self.k_o

    def beta(self, k):
        """Range wavenumber sqrt(k_o^2 - |k|^2); |k| >= k_o is evanescent."""
        k = np.asarray(k, dtype=float)
        k2 = np.sum(np.square(k), axis=-1) if k.ndim else np.square(k)
        if np.any(k2 >= self.k_o ** 2):
            raise DomainError("evanescent wavenumber: |k| must be < k_o")
        return np.sqrt(self.k_o ** 2 - k2)


@dataclass(frozen=True)
class FlowVelocity:
    """Mean flow split into cross-range and range components [m/s]."""

    v_perp: np.ndarray
    v_z: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "v_perp", np.atleast_1d(np.asarray(self.v_perp, dtype=float)))

    @property
    def d(self):
        return self.v_perp.size

    @property
    def speed(self):
        return float(np.hypot(np.linalg.norm(self.v_perp), self.v_z))

    def full_vector(self):
        return np.concatenate([self.v_perp, [self.v_z]])

    def warn_if_fast(self, c_o):
        ratio = self.speed / c_o
        if ratio > 0.1:
            warnings.warn(
                f"mean flow speed is {ratio:.2f} of the sound speed; the slow-flow "
                "asymptotics assume |v| << c_o", stacklevel=2)
        return ratio


@dataclass(frozen=True)
class SourceSpec:
    """Source geometry and amplitude.

    A pulse source has duration ``T_s`` and amplitude ``sigma_s`` (or
    ``sigma`` with sigma_s = sigma / sqrt(T_s)).  A harmonic source is
    parameterized by ``sigma``; it may still carry a ``T_s`` meaning the
    acquisition window, which enters the stability diagnostics and the
    speckle synthesis but not the carrier.  The cross-range profile is
    Gaussian with radius ``ell_s``: the frequency-integrated squared
    spectrum is (2 pi)^d exp(-|K|^2) in the dimensionless spectral variable.
    """

    ell_s: float
    T_s: float = None
    sigma: float = None
    sigma_s: float = None
    harmonic: bool = None

    def __post_init__(self):
        if self.ell_s <= 0:
            raise ConfigurationError("source radius ell_s must be positive")
        if self.harmonic is None:
            object.__setattr__(self, "harmonic", self.T_s is None)
        if self.T_s is not None and self.T_s <= 0:
            raise ConfigurationError("duration T_s must be positive")
        if self.harmonic:
            if self.sigma is None:
                raise ConfigurationError("harmonic source requires the amplitude sigma")
        else:
            if self.T_s is None:
                raise ConfigurationError("pulse source requires the duration T_s")
            if self.sigma_s is None and self.sigma is None:
                raise ConfigurationError("pulse source requires sigma_s or sigma")

    @property
    def is_harmonic(self):
        return self.harmonic

    @property
    def amplitude(self):
        """sigma_s (sigma/sqrt(T_s) when given via sigma); requires T_s."""
        if self.T_s is None:
            raise ConfigurationError("sigma_s is defined only for a finite duration T_s")
        if self.sigma_s is not None:
            return self.sigma_s
        return self.sigma / math.sqrt(self.T_s)

    @property
    def harmonic_amplitude(self):
        """sigma (sigma_s * sqrt(T_s) when given via sigma_s)."""
        if self.sigma is not None:
            return self.sigma
        return self.sigma_s * math.sqrt(self.T_s)

    def spectrum_sq(self, Omega, K):
        """|S_hat(Omega, K)|^2 for the Gaussian pulse profile.

        Normalized so that the integral over Omega equals
        (2 pi)^d exp(-|K|^2).
        """
        K = np.asarray(K, dtype=float)
        d = K.shape[-1]
        K2 = np.sum(np.square(K), axis=-1)
        return (2.0 * np.pi) ** d / math.sqrt(math.pi) * np.exp(
            -np.square(Omega) - K2)


# ---------------------------------------------------------------------------
# paraxial kernel
# ---------------------------------------------------------------------------

def dcs_paraxial(stats, wn, omega, k):
    """Narrow-cone differential scattering cross-section Q_par(omega, k).

    (k_o^2 sigma_c^2 ell^{d+1} T / 4) * psd(T omega, (ell k, 0)); ``k`` has d
    components in its trailing axis.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    omega = np.asarray(omega, dtype=float)
    d = k.shape[-1]
    q = np.concatenate([stats.ell * k, np.zeros(k.shape[:-1] + (1,))], axis=-1)
    pref = wn.k_o ** 2 * stats.sigma_c ** 2 * stats.ell ** (d + 1) * stats.T_corr / 4.0
    return pref * psd_eval(stats, stats.T_corr * omega, q)


def total_cross_section_paraxial(stats, wn):
    """Total paraxial cross-section sigma_c^2 ell k_o^2 R(0,0) / 4."""
    r00 = float(marginal_covariance(stats, 0.0, np.zeros(1)))
    return stats.sigma_c ** 2 * stats.ell * wn.k_o ** 2 * r00 / 4.0


def scattering_mean_free_path_paraxial(stats, wn):
    """Mean free path 2 / Sigma_par of the coherent wave in the narrow cone."""
    return 2.0 / total_cross_section_paraxial(stats, wn)


def strong_scattering_ratio(stats, wn, z):
    """Range over mean free path, z / S_par; >> 1 means fully incoherent."""
    return z / scattering_mean_free_path_paraxial(stats, wn)


# ---------------------------------------------------------------------------
# full-regime kernel
# ---------------------------------------------------------------------------

def _shift_arguments(stats, wn, flow, omega, omegap, k, kp):
    """Dimensionless spectral arguments (A, Qvec) of the mode-coupling kernel."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    kp = np.atleast_1d(np.asarray(kp, dtype=float))
    bk = wn.beta(k)
    bkp = wn.beta(kp)
    dk_perp = k - kp
    dk_z = bk - bkp
    doppler = np.tensordot(dk_perp, flow.v_perp, axes=(-1, 0)) + dk_z * flow.v_z
    A = stats.T_corr * (omega - omegap - doppler)
    Q = stats.ell * np.concatenate([dk_perp, dk_z[..., None]], axis=-1)
    return A, Q, bk, bkp


def dcs_full(stats, wn, flow, omega, omegap, k, kp):
    """Full-regime differential scattering cross-section Q(omega, omega', k, k').

    Evaluates the speed-speed spectrum plus the density-density (|Q|^4
    weight) and cross (|Q|^2 weight) terms at the Doppler-shifted argument.
    """
    A, Q, bk, bkp = _shift_arguments(stats, wn, flow, omega, omegap, k, kp)
    d = np.atleast_1d(np.asarray(k, dtype=float)).shape[-1]
    q2 = np.sum(np.square(Q), axis=-1)
    kl2 = (wn.k_o * stats.ell) ** 2
    bracket = stats.sigma_c ** 2 * psd_eval(stats, A, Q, "cc")
    if stats.sigma_rho:
        bracket = bracket + stats.sigma_rho ** 2 / (4.0 * kl2 ** 2) * q2 ** 2 \
            * psd_eval(stats, A, Q, "rho_rho")
        bracket = bracket + stats.sigma_c * stats.sigma_rho / kl2 * q2 \
            * psd_eval(stats, A, Q, "c_rho")
    pref = wn.k_o ** 4 * stats.ell ** (d + 1) * stats.T_corr / (4.0 * bk * bkp)
    return pref * bracket


# ---------------------------------------------------------------------------
# coherent-wave decay
# ---------------------------------------------------------------------------

def phase_rate(stats, wn, flow, omega, k):
    """Phase accumulation rate theta(omega, k) of the mean amplitude.

    Doppler part k_o (omega - v_o . k) / (c_o beta), plus the small
    density correction proportional to the covariance Laplacian at zero lag.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    bk = wn.beta(k)
    d = k.shape[-1]
    theta = wn.k_o / bk * (omega - np.tensordot(k, flow.v_perp, axes=(-1, 0))) / wn.c_o
    if stats.sigma_rho:
        lap = _laplacian_origin(stats, d + 1)
        theta = theta + stats.sigma_rho ** 2 / (8.0 * bk * stats.ell ** 2) * lap
    return theta


def _laplacian_origin(stats, ndim):
    model = stats.model
    if hasattr(model, "laplacian_origin"):
        return model.laplacian_origin(ndim)
    h = 1e-4
    tot = 0.0
    for axis in range(ndim):
        def f(x, axis=axis):
            r = np.zeros(ndim)
            r[axis] = x
            return float(model.cov(0.0, r))
        tot += (-f(2 * h) + 16 * f(h) - 30 * f(0.0) + 16 * f(-h) - f(-2 * h)) / (12 * h * h)
    return tot


@lru_cache(maxsize=32)
def _leggauss(n):
    return np.polynomial.legendre.leggauss(n)


def _offset_nodes(d, half_width, n):
    """Tensor Gauss-Legendre nodes/weights for the k' - k offset box."""
    x, w = _leggauss(n)
    x = x * half_width
    w = w * half_width
    if d == 1:
        return x[:, None], w
    gx, gy = np.meshgrid(x, x, indexing="ij")
    nodes = np.column_stack([gx.ravel(), gy.ravel()])
    weights = np.outer(w, w).ravel()
    return nodes, weights


def _halfline_nodes(n=400, t_max=3.5):
    """exp-sinh nodes/weights for integrals over r_z in (0, inf)."""
    t = np.linspace(-t_max, t_max, n)
    dt = t[1] - t[0]
    r = np.exp(0.5 * math.pi * np.sinh(t))
    w = r * 0.5 * math.pi * np.cosh(t) * dt
    keep = r < 60.0
    return r[keep], w[keep]


def _halfline_gaussian_ft(qz):
    """int_0^inf exp(-r^2/2) exp(-i qz r) dr, closed form via Dawson's integral."""
    qz = np.asarray(qz, dtype=float)
    re = math.sqrt(math.pi / 2.0) * np.exp(-0.5 * np.square(qz))
    im = -math.sqrt(2.0) * special.dawsn(qz / math.sqrt(2.0))
    return re + 1j * im


def _transverse_gaussian_ft(d, p2, m):
    """FT over r in R^d of |r|^{2m} exp(-|r|^2/2), as a function of p^2 = |q_perp|^2."""
    g = (2.0 * math.pi) ** (d / 2.0) * np.exp(-0.5 * p2)
    if m == 0:
        return g
    if m == 1:
        return (d - p2) * g
    if m == 2:
        return ((p2 - d) ** 2 + 2.0 * d - 4.0 * p2) * g
    raise ValueError(m)


def _bracket_halfspace_ft(stats, wn, d, Q):
    """F(Q) = int_{R^d} dr int_0^inf dr_z exp(-i Q . rvec) B(rvec).

    B collects the covariance bracket of the decay exponent: speed-speed
    plus the density Laplacian terms.  Gaussian models use the analytic
    transverse transform; the range integral of the density terms is done
    on exp-sinh nodes.
    """
    Q = np.atleast_2d(Q)
    p2 = np.sum(np.square(Q[:, :-1]), axis=-1)
    qz = Q[:, -1]
    model = stats.model
    if not hasattr(model, "psd"):
        if stats.sigma_rho:
            raise ConfigurationError(
                "density-fluctuation decay terms require the Gaussian model")
        return stats.sigma_c ** 2 * _generic_halfspace_ft(model, d, Q)
    out = stats.sigma_c ** 2 * _transverse_gaussian_ft(d, p2, 0) * _halfline_gaussian_ft(qz)
    if stats.sigma_rho:
        r, w = _halfline_nodes()
        a = np.square(r)
        ga = np.exp(-0.5 * a)
        phase = np.exp(-1j * np.outer(qz, r))
        n = d + 1
        kl2 = (wn.k_o * stats.ell) ** 2
        # Laplacian-squared of the Gaussian, split into transverse powers |r|^{2m}
        t0 = _transverse_gaussian_ft(d, p2, 0)[:, None]
        t1 = _transverse_gaussian_ft(d, p2, 1)[:, None]
        t2 = _transverse_gaussian_ft(d, p2, 2)[:, None]
        poly_rr = (t2
                   + (2.0 * a - 2.0 * n - 4.0)[None, :] * t1
                   + (a ** 2 - (2.0 * n + 4.0) * a + n ** 2 + 2.0 * n)[None, :] * t0)
        term_rr = (phase * poly_rr * (ga * w)[None, :]).sum(axis=1)
        out = out + stats.sigma_rho ** 2 / (4.0 * kl2 ** 2) * term_rr
        if stats.rho_cross:
            poly_cr = t1 + (a - n)[None, :] * t0
            term_cr = (phase * poly_cr * (ga * w)[None, :]).sum(axis=1)
            out = out - stats.sigma_c * stats.sigma_rho * stats.rho_cross / kl2 * term_cr
    return out


def _generic_halfspace_ft(model, d, Q):
    """Numeric transform of a pluggable covariance (speed-speed term only)."""
    xg, wg = _leggauss(160)
    span = 10.0
    x = xg * span
    wx = wg * span
    rz, wz = _halfline_nodes()
    out = np.empty(Q.shape[0], dtype=complex)
    if d == 1:
        R, Z = np.meshgrid(x, rz, indexing="ij")
        rvec = np.stack([R, Z], axis=-1)
        vals = model.cov(0.0, rvec)
        wgt = np.outer(wx, wz)
        for i, q in enumerate(Q):
            out[i] = np.sum(vals * wgt * np.exp(-1j * (q[0] * R + q[1] * Z)))
        return out
    R1, R2, Z = np.meshgrid(x, x, rz, indexing="ij")
    rvec = np.stack([R1, R2, Z], axis=-1)
    vals = model.cov(0.0, rvec)
    wgt = wx[:, None, None] * wx[None, :, None] * wz[None, None, :]
    for i, q in enumerate(Q):
        out[i] = np.sum(vals * wgt * np.exp(-1j * (q[0] * R1 + q[1] * R2 + q[2] * Z)))
    return out


def decay_rate(stats, wn, flow, k, n_nodes=96, offset_sigmas=8.0):
    """Complex decay exponent rate D(k) of the mean amplitude.

    Quadrature over the coupled wavenumbers k' concentrated in the spectral
    support |k' - k| = O(1/ell), with the half-space covariance transform
    evaluated per node.  Re D < 0 always; the scattering mean free path is
    -1 / Re D.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    d = k.shape[-1]
    bk = float(wn.beta(k))
    half = offset_sigmas / stats.ell
    gap = wn.k_o - np.linalg.norm(k)
    if gap <= 0:
        raise DomainError("evanescent wavenumber: |k| must be < k_o")
    half = min(half, 0.98 * gap)  # stay inside the propagating disk
    nodes, weights = _offset_nodes(d, half, n_nodes)
    kp = k[None, :] + nodes
    bkp = wn.beta(kp)
    Q = stats.ell * np.concatenate([k[None, :] - kp, (bk - bkp)[:, None]], axis=-1)
    F = _bracket_halfspace_ft(stats, wn, d, Q)
    integrand = F / bkp
    total = np.sum(weights * integrand) / (2.0 * math.pi) ** d
    D = -wn.k_o ** 4 * stats.ell ** (d + 1) / (4.0 * bk) * total
    if not np.isfinite(D) or D.real >= 0:
        raise NumericalError(
            "decay-rate quadrature failed (Re D must be negative)",
            {"D": D, "k": k.tolist(), "half_width": half})
    return complex(D)


def mean_amplitude_decay(stats, wn, flow, omega, k):
    """Exponent rate i theta(omega,k) + D(k) of the coherent mode amplitude."""
    return 1j * float(phase_rate(stats, wn, flow, omega, k)) + decay_rate(stats, wn, flow, k)


def scattering_mean_free_path(stats, wn, flow, k):
    """Full-regime mean free path -1 / Re D(k)."""
    return -1.0 / decay_rate(stats, wn, flow, k).real


def kernel_integral(stats, wn, flow, k, omega=0.0, n_k=96, n_omega=200,
                    offset_sigmas=8.0):
    """Total cross-section: int Q(omega,omega',k,k') domega' dk' / (2 pi)^{d+1}.

    Spectral-domain route, independent of :func:`decay_rate`; equals
    -2 Re D(k) by the conservation identity of the kernel.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    d = k.shape[-1]
    gap = wn.k_o - np.linalg.norm(k)
    if gap <= 0:
        raise DomainError("evanescent wavenumber: |k| must be < k_o")
    half = min(offset_sigmas / stats.ell, 0.98 * gap)
    nodes, wk = _offset_nodes(d, half, n_k)
    kp = k[None, :] + nodes
    xo, wo = _leggauss(n_omega)
    # The spectral bump in omega' is centered at omega - doppler with width 1/T.
    bk = float(wn.beta(k))
    bkp = wn.beta(kp)
    doppler = np.tensordot(k[None, :] - kp, flow.v_perp, axes=(-1, 0)) \
        + (bk - bkp) * flow.v_z
    centers = omega - doppler
    spread = 12.0 / stats.T_corr
    omegap = centers[:, None] + xo[None, :] * spread
    kk = np.broadcast_to(kp[:, None, :], (kp.shape[0], n_omega, d))
    vals = dcs_full(stats, wn, flow, omega, omegap, k[None, None, :], kk)
    inner = np.sum(vals * (wo * spread)[None, :], axis=1)
    total = np.sum(inner * wk) / (2.0 * math.pi) ** (d + 1)
    return float(total)


def rte_kernel_identity_check(stats, wn, flow, probes, tol=1e-12):
    """Check the prefactor chain tying the mode kernel to the 3-D transfer kernel.

    For each probe (omega, omega', k, k') the on-shell reduction of the
    energy-conservation delta must collapse the transfer-kernel weights to
    c_o / k_o on both the gain and loss sides.  Returns a report dict; raises
    nothing, callers assert on ``report['passed']``.
    """
    worst = 0.0
    rows = []
    for omega, omegap, k, kp in probes:
        k = np.atleast_1d(np.asarray(k, dtype=float))
        kp = np.atleast_1d(np.asarray(kp, dtype=float))
        bk = float(wn.beta(k))
        bkp = float(wn.beta(kp))
        base = 2.0 * math.pi * wn.c_o ** 2 / wn.k_o ** 2 * bk * bkp
        target = wn.c_o / wn.k_o
        gain = base * (wn.k_o / (wn.c_o * bk)) / (2.0 * math.pi) / bkp
        loss = base * (wn.k_o / (wn.c_o * bkp)) / (2.0 * math.pi) / bk
        err = max(abs(gain - target), abs(loss - target)) / target
        q = dcs_full(stats, wn, flow, omega, omegap, k, kp)
        transfer = base * float(q)
        back = transfer / base
        kerr = abs(back - float(q)) / max(abs(float(q)), 1e-300)
        err = max(err, kerr)
        worst = max(worst, err)
        rows.append({"k": k.tolist(), "kp": kp.tolist(), "rel_err": err})
    return {
        "passed": bool(worst <= tol),
        "max_rel_err": worst,
        "tol": tol,
        "n_probes": len(rows),
        "beta_weight_origin": wn.k_o / (wn.c_o * float(wn.beta(np.zeros(1)))),
    }
