"""Time-harmonic Wigner transform and space-time coherence of the beam.

In the strongly scattering regime the phase-space density of a
time-harmonic Gaussian source is a Gaussian integral over (t, xi, q) whose
exponent is an explicit quadratic form.  The ``closed`` evaluation computes
that integral exactly by linear algebra; the ``quadrature`` evaluation uses
tensor Gauss-Hermite after whitening and exists purely as an independent
oracle.

The coherence function C(dt, dx, x, z) is the inverse Fourier transform of
the Wigner transform over (omega, k).  Its closed form is a complex-phased
Gaussian controlled by a small set of scales:

* decoherence time  T_z = T / sqrt(alpha z)
* decoherence length D_z = ell / sqrt(vartheta z)
* beam radius R_z, speckle scales D1_z and D2_z, drift factor H_z
* critical range z* = (ell / ell_s)^2 / vartheta separating
  diffraction-dominated from scattering-dominated beam spreading,

plus the effective aperture and the dimensionless factors used by the
velocity estimator.  All coefficient formulas are evaluated exactly as
closed forms; ``D_z sqrt(z)`` and ``T_z sqrt(z)`` are z-independent
constants, which is what a known-source calibration measures.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import warnings

import numpy as np

from .errors import ConfigurationError, NumericalError
from .medium import taylor_coeffs

__all__ = ["CoherenceParams", "coherence_params", "wigner_time_harmonic",
           "coherence_function", "wigner_quadratic_form"]


@dataclass(frozen=True)
class CoherenceParams:
    """Closed-form coefficient set of the coherence function at range z.

    ``u`` is the squared ratio (ell_s / D_z)^2 that switches between the
    source-dominated (u << 1) and scattering-dominated (u >> 1) regimes.
    ``phase_dx`` and ``phase_dt`` are the coefficients of the linear phase
    phi = x . (phase_dx * dx - phase_dt * v_o * dt).
    """

    z: float
    k_o: float
    ell_s: float
    v_perp: np.ndarray
    kappa: float
    amplitude: float          # C(0, 0, 0, z)
    decoherence_time: float   # T_z
    decoherence_length: float  # D_z
    beam_radius: float        # R_z
    speckle_len_1: float      # D1_z
    speckle_len_2: float      # D2_z
    drift_factor: float       # H_z
    critical_range: float     # z*
    effective_aperture: float  # A_z
    peak_scale: float         # m_z
    decay_scale: float        # n_z
    slope_bias: float         # s_z
    mix_ratio: float          # q_z
    phase_dx: float
    phase_dt: float
    u: float
    time_dependent: bool = True

    @property
    def peak_bias(self):
        """Ratio of the observed arrival-direction peak to k_o x_o / z; in [1, 3/2]."""
        return (1.0 + self.u) / (1.0 + 2.0 * self.u / 3.0)

    def doa_width(self, kappa=None):
        """Predicted width of the arrival-direction peak in units of k_o."""
        kappa = self.kappa if kappa is None else kappa
        dz2k2 = (self.decoherence_length * self.k_o) ** 2
        first = (1.0 + self.u / 2.0) / (1.0 + 2.0 * self.u / 3.0) / (3.0 * dz2k2)
        return math.sqrt(first + 1.0 / (2.0 * kappa ** 2))

    def range_width(self, v_mag=None):
        """Predicted Gaussian width of the temporal decay of the range image."""
        if not self.time_dependent or not np.isfinite(self.decoherence_time):
            return math.inf
        v_mag = float(np.linalg.norm(self.v_perp)) if v_mag is None else v_mag
        g = (1.0 + self.u / 6.0) / (1.0 + 2.0 * self.u / 3.0)
        corr = 1.0 + (v_mag * self.decoherence_time / self.decoherence_length) ** 2 * g
        return self.decoherence_time / math.sqrt(corr)

    def velocity_resolution(self, v_mag=None):
        """Achievable velocity resolution for the peak-tracking estimator."""
        v_mag = float(np.linalg.norm(self.v_perp)) if v_mag is None else v_mag
        base = self.peak_scale * self.effective_aperture \
            / (self.slope_bias * self.decoherence_time)
        v_crit = self.decay_scale * self.effective_aperture / self.decoherence_time
        if v_mag <= v_crit:
            return base
        return base * v_mag / v_crit


def coherence_params(stats, wn, source, flow, kappa, z):
    """Evaluate the full coherence coefficient set at range z."""
    if z <= 0:
        raise ValueError("range z must be positive")
    tc = taylor_coeffs(stats, wn.k_o)
    ell_s = source.ell_s
    k_o = wn.k_o
    d = flow.d

    T_z = stats.T_corr / math.sqrt(tc.alpha * z) if tc.alpha > 0 else math.inf
    D_z = stats.ell / math.sqrt(tc.vartheta * z) if tc.vartheta > 0 else math.inf
    u = (ell_s / D_z) ** 2 if np.isfinite(D_z) else 0.0
    R_z = z / (math.sqrt(2.0) * ell_s * k_o) * math.sqrt(1.0 + 2.0 * u / 3.0)
    D1_z = 2.0 * D_z * math.sqrt(3.0 * (1.0 + u / 6.0))
    D2_z = D_z * math.sqrt((1.0 + 2.0 * u / 3.0) / (1.0 + u / 6.0))
    H_z = 1.0 - 1.0 / (2.0 * (1.0 + u / 6.0))
    z_star = (stats.ell / ell_s) ** 2 / tc.vartheta if tc.vartheta > 0 else math.inf
    zk = z / (k_o * ell_s)
    kk = kappa / k_o
    A2 = ((kk) ** 2 + zk ** 2 * (1.0 + 2.0 * u / 3.0)) / 4.0
    m2 = 8.0 / (1.0
                + 2.0 / (3.0 * D_z ** 2) * zk ** 2 * (1.0 + u / 2.0)
                + (kappa / (k_o * ell_s)) ** 2 * (1.0 + 2.0 * u)
                + (k_o / kappa) ** 2 * zk ** 2 * (1.0 + 2.0 * u / 3.0))
    s_z = m2 / (4.0 * D_z ** 2) * (kk ** 2 + 0.5 * zk ** 2 * (1.0 + u / 3.0))
    q_z = (kk ** 2 + zk ** 2 * (1.0 + u / 6.0)) \
        / (2.0 * kk ** 2 + zk ** 2 * (1.0 + u / 3.0))
    n2 = m2 / (s_z * (q_z - s_z / 2.0)) if s_z > 0 else math.inf
    amplitude = source.harmonic_amplitude ** 2 * ell_s ** d / (2.0 ** (2.0 + d / 2.0) * k_o * R_z ** d)
    denom = z * (1.0 + 2.0 * u / 3.0)
    return CoherenceParams(
        z=float(z), k_o=k_o, ell_s=ell_s, v_perp=flow.v_perp, kappa=kappa,
        amplitude=amplitude,
        decoherence_time=T_z, decoherence_length=D_z, beam_radius=R_z,
        speckle_len_1=D1_z, speckle_len_2=D2_z, drift_factor=H_z,
        critical_range=z_star, effective_aperture=math.sqrt(A2),
        peak_scale=math.sqrt(m2), decay_scale=math.sqrt(n2),
        slope_bias=s_z, mix_ratio=q_z,
        phase_dx=k_o * (1.0 + u) / denom,
        phase_dt=k_o * u / denom,
        u=u,
        time_dependent=tc.time_dependent and tc.alpha > 0,
    )


# ---------------------------------------------------------------------------
# time-harmonic Wigner transform
# ---------------------------------------------------------------------------

def wigner_quadratic_form(stats, wn, source, flow, z):
    """Quadratic form (prefactor, M, linear map) of the (t, xi, q) integral.

    The exponent is -(1/2) u^T M u + i v . u with u = (t, xi, q) and
    v = (omega, -k, x - k z / k_o) stacked per evaluation point.
    """
    tc = taylor_coeffs(stats, wn.k_o)
    d = flow.d
    ell, T = stats.ell, stats.T_corr
    ell_s = source.ell_s
    k_o = wn.k_o
    n = 1 + 2 * d
    M = np.zeros((n, n))
    v2 = float(np.dot(flow.v_perp, flow.v_perp))
    M[0, 0] = tc.alpha * z / T ** 2 + tc.vartheta * z * v2 / ell ** 2
    for j in range(d):
        xi = 1 + j
        q = 1 + d + j
        M[xi, xi] = tc.vartheta * z / ell ** 2 + 1.0 / (2.0 * ell_s ** 2)
        M[q, q] = tc.vartheta * z ** 3 / (3.0 * ell ** 2 * k_o ** 2)
        M[0, xi] = M[xi, 0] = -tc.vartheta * z * flow.v_perp[j] / ell ** 2
        M[0, q] = M[q, 0] = -tc.vartheta * z ** 2 * flow.v_perp[j] / (2.0 * ell ** 2 * k_o)
        M[xi, q] = M[q, xi] = tc.vartheta * z ** 2 / (2.0 * ell ** 2 * k_o)
    pref = source.harmonic_amplitude ** 2 * ell_s ** d * math.pi ** (d / 2.0) \
        / (4.0 * k_o * (2.0 * math.pi) ** d)
    return pref, M


def _stack_v(omega, k, x, z, k_o, d):
    omega = np.asarray(omega, dtype=float)
    k = np.atleast_1d(np.asarray(k, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if k.ndim == 1 and k.shape[-1] != d:
        raise ConfigurationError("cross-range wavevector has wrong dimension")
    return np.concatenate([np.atleast_1d(omega), -k, x - k * z / k_o])


def wigner_time_harmonic(stats, wn, source, flow, omega, k, x, z,
                         method="closed", gh_order=40, warn_regime=True):
    """Mean phase-space density of a time-harmonic source at range z.

    ``closed`` evaluates the Gaussian integral analytically; ``quadrature``
    integrates it with tensor Gauss-Hermite of the given order and is the
    independent oracle for the closed form.
    """
    if not source.is_harmonic:
        raise ConfigurationError("time-harmonic Wigner transform requires "
                                 "a harmonic source (T_s=None)")
    if warn_regime:
        from .transport.kernels import strong_scattering_ratio
        ratio = strong_scattering_ratio(stats, wn, z)
        if ratio < 2.0:
            warnings.warn(
                f"strong-scattering ratio z/S_par = {ratio:.2f} < 2; the "
                "incoherent-regime closed forms may be inaccurate", stacklevel=2)
    d = flow.d
    pref, M = wigner_quadratic_form(stats, wn, source, flow, z)
    v = _stack_v(omega, k, x, z, wn.k_o, d)
    n = M.shape[0]
    if method == "closed":
        sol = np.linalg.solve(M, v)
        det = np.linalg.det(M)
        return float(pref * (2.0 * math.pi) ** (n / 2.0) / math.sqrt(det)
                     * math.exp(-0.5 * float(v @ sol)))
    if method == "quadrature":
        return float(pref * _gh_refined(M, v, gh_order).real)
    raise ConfigurationError(f"unknown method {method!r}")


def _gh_refined(M, v, order, linear_real=None, rtol=1e-10, max_order=160):
    """Gauss-Hermite with order escalation until two refinements agree.

    Values below 1e-13 of the zero-phase scale of the whitened integral are
    treated as converged zeros (the phase factors there oscillate faster
    than any practical node set, and the closed form is what matters).
    """
    L = np.linalg.cholesky(M)
    n = M.shape[0]
    scale0 = 2.0 ** (n / 2.0) / float(np.prod(np.diag(L))) * math.pi ** (n / 2.0)
    if linear_real is not None:
        c = math.sqrt(2.0) * np.linalg.solve(L, linear_real)
        scale0 *= math.exp(float(c @ c) / 4.0)
    atol = 1e-13 * scale0
    prev = _gauss_hermite_whitened(M, v, order, linear_real)
    while order < max_order:
        order = min(2 * order, max_order)
        cur = _gauss_hermite_whitened(M, v, order, linear_real)
        if abs(cur - prev) <= rtol * abs(cur) + atol:
            return cur
        prev = cur
    raise NumericalError(
        f"Gauss-Hermite quadrature did not converge by order {max_order}",
        {"last_value": complex(prev)})


def _gauss_hermite_whitened(M, v, order, linear_real=None):
    """int exp(-u^T M u / 2 + i v.u [+ c.u]) du by separable Gauss-Hermite.

    After the substitution u = sqrt(2) L^{-T} w with M = L L^T the integral
    factorizes into 1-D Gauss-Hermite sums, one per whitened axis.
    ``linear_real`` adds a real linear term c.u to the exponent.
    """
    L = np.linalg.cholesky(M)
    b = math.sqrt(2.0) * np.linalg.solve(L, v)
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    n = M.shape[0]
    det_l = np.prod(np.diag(L))
    acc = 2.0 ** (n / 2.0) / det_l
    if linear_real is not None:
        c = math.sqrt(2.0) * np.linalg.solve(L, linear_real)
    else:
        c = np.zeros(n)
    # per whitened axis: int e^{-w^2 + (c + i b) w} dw; the real shift is
    # completed analytically so the nodes stay centered on the mass
    for j in range(n):
        shift = np.exp(c[j] ** 2 / 4.0 + 1j * b[j] * c[j] / 2.0)
        acc = acc * shift * np.sum(weights * np.exp(1j * b[j] * nodes))
    if not np.isfinite(acc.real):
        raise NumericalError("Gauss-Hermite quadrature overflowed; refine the "
                             "evaluation point or raise the order")
    return acc


# ---------------------------------------------------------------------------
# coherence function
# ---------------------------------------------------------------------------

def coherence_function(stats, wn, source, flow, dt, dx, x, z,
                       method="closed", gh_order=40, params=None):
    """Space-time coherence C(dt, dx, x, z) of the transmitted field.

    ``closed`` uses the printed coefficient set; ``quadrature`` evaluates the
    residual d-dimensional Gaussian integral over the conjugate variable q
    with Gauss-Hermite and serves as the independent oracle.  The two agree
    to quadrature accuracy.
    """
    d = flow.d
    dx = np.atleast_1d(np.asarray(dx, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if method == "closed":
        if params is None:
            params = coherence_params(stats, wn, source, flow, kappa=1.0, z=z)
        return _coherence_closed(params, flow, dt, dx, x)
    if method != "quadrature":
        raise ConfigurationError(f"unknown method {method!r}")
    tc = taylor_coeffs(stats, wn.k_o)
    ell, T, ell_s, k_o = stats.ell, stats.T_corr, source.ell_s, wn.k_o
    pref = source.harmonic_amplitude ** 2 * ell_s ** d * math.pi ** (d / 2.0) \
        / (4.0 * k_o * (2.0 * math.pi) ** d)
    # Exponent in q after the exact (omega, k) -> (dt, dx) reduction:
    # E(q) = -(a/2)|xi - v dt|^2 - |xi|^2/(4 ell_s^2) - b (xi - v dt).q
    #        - (c/2)|q|^2 + i q.x   with xi = dx - (z/k_o) q, t = dt.
    a = tc.vartheta * z / ell ** 2
    b = tc.vartheta * z ** 2 / (2.0 * ell ** 2 * k_o)
    c = tc.vartheta * z ** 3 / (3.0 * ell ** 2 * k_o ** 2)
    zk = z / k_o
    A = (a * zk ** 2 + zk ** 2 / (2.0 * ell_s ** 2) - 2.0 * b * zk + c) * np.eye(d)
    w0 = dx - flow.v_perp * dt
    lin_real = a * zk * w0 + zk / (2.0 * ell_s ** 2) * dx - b * w0
    const = -0.5 * a * float(w0 @ w0) - float(dx @ dx) / (4.0 * ell_s ** 2) \
        - 0.5 * tc.alpha * z * (dt / T) ** 2
    val = _gauss_hermite_whitened(A, np.asarray(x, dtype=float), gh_order,
                                  linear_real=lin_real)
    return complex(pref * math.exp(const) * val)


def _coherence_closed(p, flow, dt, dx, x):
    drift = p.drift_factor * dx - flow.v_perp * dt
    if np.isfinite(p.decoherence_time):
        t_term = dt ** 2 / (2.0 * p.decoherence_time ** 2)
    else:
        t_term = 0.0
    expo = (-t_term
            - float(x @ x) / (2.0 * p.beam_radius ** 2)
            - float(dx @ dx) / (2.0 * p.speckle_len_1 ** 2)
            - float(drift @ drift) / (2.0 * p.speckle_len_2 ** 2))
    phase = float(x @ (p.phase_dx * dx - p.phase_dt * flow.v_perp * dt))
    return complex(p.amplitude * np.exp(expo) * np.exp(1j * phase))
