"""Second-order statistics of the random medium.

The medium is described by relative fluctuations of the sound speed and
density, statistically stationary in time and space, with a prescribed
covariance in the dimensionless variables (tau, rvec) where tau is the
time lag in units of the correlation time and rvec is the (d+1)-dimensional
spatial lag in units of the correlation length.

The default model is the isotropic unit-width Gaussian

    R(tau, rvec) = exp(-(tau^2 + |rvec|^2) / 2),

which has an analytic power spectral density, range-marginal and Taylor
expansion, so every derived quantity can be cross-checked against an exact
value.  Additional models can be registered with :func:`register_cov_model`;
anything that is even, integrable and four times differentiable in the
dimensionless arguments is admissible (positivity of the spectrum is the
caller's responsibility and is probed by the shipped tests).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import math

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, ModelValidityError

__all__ = [
    "MediumStats",
    "TaylorCoeffs",
    "covariance_eval",
    "psd_eval",
    "marginal_covariance",
    "taylor_coeffs",
    "register_cov_model",
]


class GaussianCovariance:
    """Isotropic unit-width Gaussian covariance in dimensionless arguments."""

    tag = "gaussian"
    time_dependent = True

    def cov(self, tau, rvec):
        r2 = np.sum(np.square(rvec), axis=-1)
        return np.exp(-0.5 * (np.square(tau) + r2))

    def psd(self, ndim_space, Omega, qvec):
        # Fourier transform over (tau, rvec) in ndim_space + 1 variables.
        q2 = np.sum(np.square(qvec), axis=-1)
        n = ndim_space + 1
        return (2.0 * np.pi) ** (n / 2.0) * np.exp(-0.5 * (np.square(Omega) + q2))

    def marginal(self, tau, r_transverse):
        r2 = np.sum(np.square(r_transverse), axis=-1)
        return np.sqrt(2.0 * np.pi) * np.exp(-0.5 * (np.square(tau) + r2))

    def marginal_taylor(self):
        # R(0,0), -d^2/dtau^2, -d^2/dr1^2 of the marginal at the origin.
        r00 = math.sqrt(2.0 * math.pi)
        return r00, r00, r00

    def laplacian_origin(self, ndim):
        # Laplacian of cov(0, rvec) at rvec = 0 in `ndim` variables.
        return -float(ndim)


class FrozenGaussianCovariance(GaussianCovariance):
    """Gaussian in space, constant in time: a frozen (time-independent) medium.

    The temporal curvature of the covariance vanishes, so the decoherence
    time is infinite and range estimation from temporal decay is impossible.
    """

    tag = "gaussian_frozen"
    time_dependent = False

    def cov(self, tau, rvec):
        r2 = np.sum(np.square(rvec), axis=-1)
        return np.broadcast_to(np.exp(-0.5 * r2), np.broadcast(np.asarray(tau), r2).shape).copy()

    def psd(self, ndim_space, Omega, qvec):
        raise ConfigurationError(
            "frozen medium has a singular temporal spectrum; transport kernels "
            "require a time-dependent covariance model"
        )

    def marginal(self, tau, r_transverse):
        r2 = np.sum(np.square(r_transverse), axis=-1)
        out = np.sqrt(2.0 * np.pi) * np.exp(-0.5 * r2)
        return np.broadcast_to(out, np.broadcast(np.asarray(tau), r2).shape).copy()

    def marginal_taylor(self):
        r00 = math.sqrt(2.0 * math.pi)
        return r00, 0.0, r00


_COV_MODELS = {
    GaussianCovariance.tag: GaussianCovariance(),
    FrozenGaussianCovariance.tag: FrozenGaussianCovariance(),
}


def register_cov_model(model):
    """Register a pluggable covariance model instance under ``model.tag``."""
    _COV_MODELS[model.tag] = model
    return model


@dataclass(frozen=True)
class MediumStats:
    """Background constants and fluctuation statistics of the medium.

    Parameters
    ----------
    c_o : float
        Reference sound speed [m/s].
    sigma_c, sigma_rho : float
        Dimensionless standard deviations of the wave-speed and density
        fluctuations.  ``sigma_rho`` defaults to zero, which is the regime
        where the narrow-cone transport kernels are derived.
    ell : float
        Correlation length [m].
    T_corr : float
        Correlation time [s] (lifespan of a spatial realization).
    rho_o : float
        Reference density [kg/m^3]; diagnostic only.
    cov_model : str
        Tag of a registered covariance family.
    rho_cross : float
        Correlation coefficient between speed and density fluctuations,
        used only by the full-regime scattering kernel.
    sigma_v : float
        Standard deviation of the velocity fluctuations.  Accepted for
        completeness but unused: the implemented formulas depend only on
        the mean flow, the contribution of velocity fluctuations being
        negligible in the regime covered here.
    """

    c_o: float
    sigma_c: float
    ell: float
    T_corr: float
    rho_o: float = 1.2
    sigma_rho: float = 0.0
    cov_model: str = "gaussian"
    rho_cross: float = 0.0
    sigma_v: float = 0.0

    def __post_init__(self):
        if self.c_o <= 0:
            raise ConfigurationError("c_o must be positive")
        if self.ell <= 0:
            raise ConfigurationError("ell must be positive")
        if self.T_corr <= 0:
            raise ConfigurationError("T_corr must be positive")
        if self.sigma_c < 0 or self.sigma_rho < 0:
            raise ConfigurationError("fluctuation standard deviations must be >= 0")
        if not -1.0 <= self.rho_cross <= 1.0:
            raise ConfigurationError("rho_cross must lie in [-1, 1]")
        if self.cov_model not in _COV_MODELS:
            raise ConfigurationError(
                f"unsupported covariance model {self.cov_model!r}; "
                f"registered: {sorted(_COV_MODELS)}"
            )

    @property
    def model(self):
        return _COV_MODELS[self.cov_model]

    def content_hash(self):
        """Stable hash of the statistical content, used in field metadata."""
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class TaylorCoeffs:
    """Quadratic expansion of the range-marginal covariance at the origin.

    ``R00`` is the marginal at zero lag, ``alpha_o`` and ``vartheta_o`` the
    negative second derivatives in the time and transverse directions, and
    ``alpha``/``vartheta`` the same curvatures scaled by the scattering
    strength sigma_c^2 ell k_o^2 / 4.
    """

    R00: float
    alpha_o: float
    vartheta_o: float
    alpha: float
    vartheta: float
    time_dependent: bool = True


def covariance_eval(stats, tau, r):
    """Evaluate the speed-speed covariance at dimensionless lag (tau, r).

    ``r`` has d+1 components in its trailing axis.  The result is even in
    (tau, r) by stationarity.
    """
    return stats.model.cov(np.asarray(tau, dtype=float), np.asarray(r, dtype=float))


def psd_eval(stats, Omega, q, component="cc"):
    """Power spectral density of the fluctuations at (Omega, q), q in R^{d+1}.

    Non-negative for any admissible model (Bochner).  ``component`` selects
    the speed-speed, density-density or cross spectrum; for the shipped
    isotropic model the three share one shape, the cross spectrum carrying
    the correlation coefficient.
    """
    Omega = np.asarray(Omega, dtype=float)
    q = np.asarray(q, dtype=float)
    ndim_space = q.shape[-1]
    model = stats.model
    if hasattr(model, "psd"):
        base = model.psd(ndim_space, Omega, q)
    else:
        base = _psd_quadrature(model, ndim_space, Omega, q)
    if component == "cc" or component == "rho_rho":
        return base
    if component == "c_rho":
        return stats.rho_cross * base
    raise ConfigurationError(f"unknown spectral component {component!r}")


def _psd_quadrature(model, ndim_space, Omega, q):
    """Slow generic fallback: tensor Gauss-Legendre transform of the covariance."""
    nodes, weights = np.polynomial.legendre.leggauss(96)
    half = 10.0
    x = nodes * half
    w = weights * half

    def single(Om, qv):
        grids = np.meshgrid(*([x] * (ndim_space + 1)), indexing="ij")
        tau = grids[0]
        rvec = np.stack(grids[1:], axis=-1)
        vals = model.cov(tau, rvec)
        phase = Om * tau - np.tensordot(rvec, qv, axes=(-1, 0))
        integrand = vals * np.exp(1j * phase)
        for axis in range(ndim_space + 1):
            shape = [1] * integrand.ndim
            shape[axis] = w.size
            integrand = integrand * w.reshape(shape)
        # all axes already weighted; sum everything
        return float(np.real(integrand.sum()))

    it = np.nditer([Omega, np.zeros(np.broadcast(Omega, q[..., 0]).shape)],
                   flags=["multi_index"])
    out = np.empty(np.broadcast(Omega, q[..., 0]).shape)
    for _ in it:
        idx = it.multi_index
        out[idx] = single(np.broadcast_to(Omega, out.shape)[idx],
                          np.broadcast_to(q, out.shape + (ndim_space,))[idx])
    return out if out.shape else float(out)


def marginal_covariance(stats, tau, r_transverse):
    """Covariance integrated over the range lag: int dr_z R(tau, (r, r_z))."""
    tau = np.asarray(tau, dtype=float)
    r_transverse = np.asarray(r_transverse, dtype=float)
    model = stats.model
    if hasattr(model, "marginal"):
        return model.marginal(tau, r_transverse)
    return _marginal_quadrature(model, tau, r_transverse)


def _marginal_quadrature(model, tau, r_transverse):
    shape = np.broadcast(tau, r_transverse[..., 0]).shape
    out = np.empty(shape or (1,))
    tau_b = np.broadcast_to(tau, shape or (1,))
    d = r_transverse.shape[-1]
    r_b = np.broadcast_to(r_transverse, (shape or (1,)) + (d,))
    for idx in np.ndindex(out.shape):
        t = tau_b[idx]
        r = r_b[idx]

        def f(rz):
            return model.cov(t, np.concatenate([r, [rz]]))

        val, err = integrate.quad(f, -np.inf, np.inf, epsabs=1e-12, epsrel=1e-11)
        if not np.isfinite(val):
            raise ConfigurationError("covariance model is not integrable in the range lag")
        out[idx] = val
    return out if shape else float(out[0])


def taylor_coeffs(stats, k_o, h=1e-4):
    """Curvatures of the range-marginal covariance at the origin.

    Analytic for the shipped Gaussian models; otherwise fourth-order central
    differences with step ``h`` in the dimensionless arguments.  Raises
    :class:`ModelValidityError` when a curvature of a time-dependent model
    is not positive (the expansion assumes a negative-definite Hessian).
    """
    model = stats.model
    time_dependent = getattr(model, "time_dependent", True)
    if hasattr(model, "marginal_taylor"):
        r00, alpha_o, vartheta_o = model.marginal_taylor()
    else:
        r00 = float(marginal_covariance(stats, 0.0, np.zeros(1)))
        alpha_o = -_second_derivative(lambda t: marginal_covariance(stats, t, np.zeros(1)), h)
        vartheta_o = -_second_derivative(
            lambda x: marginal_covariance(stats, 0.0, np.array([x])), h)
    floor = 1e-8 * abs(r00)
    if vartheta_o <= floor or (time_dependent and alpha_o <= floor):
        raise ModelValidityError(
            f"marginal covariance curvature not positive (alpha_o={alpha_o:.3e}, "
            f"vartheta_o={vartheta_o:.3e}); the quadratic expansion is invalid"
        )
    scale = stats.sigma_c ** 2 * stats.ell * k_o ** 2 / 4.0
    return TaylorCoeffs(
        R00=float(r00),
        alpha_o=float(alpha_o),
        vartheta_o=float(vartheta_o),
        alpha=float(alpha_o) * scale,
        vartheta=float(vartheta_o) * scale,
        time_dependent=time_dependent,
    )


def _second_derivative(f, h):
    """Fourth-order central second derivative at 0."""
    f0 = f(0.0)
    f1, f2 = f(h), f(2 * h)
    g1, g2 = f(-h), f(-2 * h)
    return float((-f2 + 16 * f1 - 30 * f0 + 16 * g1 - g2) / (12 * h * h))
