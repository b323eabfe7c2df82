"""Inverse-problem estimators: arrival direction, range, lateral velocity.

The estimators consume array-side images built from the estimated Wigner
transform:

* the arrival-direction image integrates the estimate over frequency and
  peaks at a biased multiple of k_o x_o / z, the bias moving from 1 to 3/2
  as the range grows past the critical distance;
* the range image is the temporal decay of the frequency-resolved estimate
  at the array center, whose Gaussian width inverts to the range when the
  medium constants (the z-independent products D_z sqrt(z), T_z sqrt(z))
  and the flow magnitude are known;
* the velocity image tracks the drift of the spatially-resolved peak,
  y_max(t) = s_z v_o t, and a weighted least-squares slope divided by the
  slope bias s_z estimates the cross-range flow.  For a large array and
  range far beyond critical, s_z -> 1 and the estimate needs no knowledge
  of the медиум statistics.

Peak localization uses quadratic interpolation of the log-image around the
grid argmax (exact for Gaussian peaks); widths come from a linear fit of
the log-image against the squared offset over the top decade.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
import json
import math

import numpy as np
from scipy import optimize

from .coherence import coherence_params
from .errors import (ConfigurationError, NoDetectionError, NonIdentifiableError,
                     NumericalError, RangeBracketError)
from .medium import taylor_coeffs

__all__ = [
    "ClosedFormImager", "GriddedImager", "RangeConstants", "EstimateReport",
    "image_doa", "doa_aperture_saturation", "image_range", "estimate_velocity",
    "localize_source", "fit_medium_constants",
]


# ---------------------------------------------------------------------------
# image providers
# ---------------------------------------------------------------------------

def _coherence_closed_grid(p, v_perp, dt, dx, x):
    """Vectorized closed-form coherence; dt (...), dx (..., d), x (..., d)."""
    dt = np.asarray(dt, dtype=float)
    dx = np.asarray(dx, dtype=float)
    x = np.asarray(x, dtype=float)
    drift = p.drift_factor * dx - v_perp * dt[..., None]
    inv_t2 = 1.0 / p.decoherence_time ** 2 if np.isfinite(p.decoherence_time) else 0.0
    expo = (-0.5 * np.square(dt) * inv_t2
            - 0.5 * np.sum(np.square(x), axis=-1) / p.beam_radius ** 2
            - 0.5 * np.sum(np.square(dx), axis=-1) / p.speckle_len_1 ** 2
            - 0.5 * np.sum(np.square(drift), axis=-1) / p.speckle_len_2 ** 2)
    phase = np.sum(x * (p.phase_dx * dx - p.phase_dt * v_perp * dt[..., None]), axis=-1)
    return p.amplitude * np.exp(expo + 1j * phase)


class ClosedFormImager:
    """Array-side images computed from the closed-form coherence model.

    This is the forward model used to exercise the estimators: the images
    are built by numerical quadrature of the coherence function (not from
    the printed image formulas, which serve as independent oracles in the
    tests).
    """

    def __init__(self, stats, wn, source, flow, array, z):
        self.stats = stats
        self.wn = wn
        self.source = source
        self.flow = flow
        self.array = array
        self.z = float(z)
        self.params = coherence_params(stats, wn, source, flow, array.kappa, z)

    @property
    def d(self):
        return self.flow.d

    # -- arrival-direction image -------------------------------------------

    def default_k_grid(self, n=121, span_sigmas=5.0):
        p = self.params
        center = p.k_o * self.array.x_o / self.z * p.peak_bias
        width = p.doa_width() * p.k_o
        axes = [np.linspace(c - span_sigmas * width, c + span_sigmas * width, n)
                for c in center]
        return axes

    def doa_image(self, k_axes=None):
        """|O_DoA(k)| on a tensor k grid; returns (axes, values)."""
        if k_axes is None:
            k_axes = self.default_k_grid()
        p = self.params
        k_o, kappa = p.k_o, self.array.kappa
        # integration window over the spatial lag
        inv_w2 = (1.0 / p.speckle_len_1 ** 2 + p.drift_factor ** 2 / p.speckle_len_2 ** 2
                  + k_o ** 2 / (2.0 * kappa ** 2))
        w = 1.0 / math.sqrt(inv_w2)
        kmax = max(float(np.max(np.abs(a))) for a in k_axes)
        n_dx = max(257, int(16.0 * w * kmax / math.pi) | 1)
        dx_axis = np.linspace(-8.0 * w, 8.0 * w, n_dx)
        if self.d == 1:
            dx = dx_axis[:, None]
            c_vals = _coherence_closed_grid(p, self.flow.v_perp,
                                            np.zeros(n_dx), dx,
                                            np.broadcast_to(self.array.x_o, (n_dx, 1)))
            taper = np.exp(-k_o ** 2 * dx_axis ** 2 / (4.0 * kappa ** 2))
            phases = np.exp(-1j * np.outer(k_axes[0], dx_axis))
            vals = np.trapezoid(phases * (c_vals * taper)[None, :], dx_axis, axis=1)
            return k_axes, np.abs(vals)
        g1, g2 = np.meshgrid(dx_axis, dx_axis, indexing="ij")
        dx = np.stack([g1, g2], axis=-1)
        c_vals = _coherence_closed_grid(
            p, self.flow.v_perp, np.zeros_like(g1), dx,
            np.broadcast_to(self.array.x_o, g1.shape + (2,)))
        taper = np.exp(-k_o ** 2 * (g1 ** 2 + g2 ** 2) / (4.0 * kappa ** 2))
        f = c_vals * taper
        out = np.empty((len(k_axes[0]), len(k_axes[1])), dtype=complex)
        e1 = np.exp(-1j * np.outer(k_axes[0], dx_axis))
        e2 = np.exp(-1j * np.outer(k_axes[1], dx_axis))
        inner = np.trapezoid(f[None, :, :] * e1[:, :, None], dx_axis, axis=1)
        out = np.trapezoid(inner[:, None, :] * e2[None, :, :], dx_axis, axis=2)
        return k_axes, np.abs(out)

    # -- range image ---------------------------------------------------------

    def _west_grid(self, omega_axis, k_axes, x):
        """Vectorized analytic W_est on a tensor (omega, k) grid at fixed x."""
        p = self.params
        k_o, kappa = p.k_o, self.array.kappa
        d = self.d
        n = 1 + d
        M = np.zeros((n, n))
        v2 = float(self.flow.v_perp @ self.flow.v_perp)
        inv_t2 = 1.0 / p.decoherence_time ** 2 if np.isfinite(p.decoherence_time) else 0.0
        M[0, 0] = inv_t2 + v2 / p.speckle_len_2 ** 2
        for j in range(d):
            M[1 + j, 1 + j] = (1.0 / p.speckle_len_1 ** 2
                               + p.drift_factor ** 2 / p.speckle_len_2 ** 2
                               + k_o ** 2 / (2.0 * kappa ** 2))
            M[0, 1 + j] = M[1 + j, 0] = (-p.drift_factor * self.flow.v_perp[j]
                                         / p.speckle_len_2 ** 2)
        Minv = np.linalg.inv(M)
        det = np.linalg.det(M)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        mesh = np.meshgrid(omega_axis, *k_axes, indexing="ij")
        vt = mesh[0] - p.phase_dt * float(x @ self.flow.v_perp)
        vk = [-mesh[1 + j] + p.phase_dx * x[j] for j in range(d)]
        comps = [vt] + vk
        quad = np.zeros_like(vt)
        for a in range(n):
            for b in range(n):
                quad = quad + Minv[a, b] * comps[a] * comps[b]
        taper = math.exp(-k_o ** 2 * float((x - self.array.x_o) @ (x - self.array.x_o))
                         / kappa ** 2)
        amp = p.amplitude * math.exp(-float(x @ x) / (2.0 * p.beam_radius ** 2))
        return taper * amp * (2.0 * math.pi) ** (n / 2.0) / math.sqrt(det) \
            * np.exp(-0.5 * quad)

    def range_trace(self, t_grid, n_omega=257, n_k=97):
        """O_range(t) = int dw/2pi e^{-iwt} int dk/(2pi)^d W_est(w, k, x_o)."""
        p = self.params
        width = p.range_width()
        if not np.isfinite(width):
            raise NonIdentifiableError(
                "frozen medium: the temporal decay carries no range information")
        sig_w = 1.0 / width
        omega_axis = np.linspace(-6.0 * sig_w, 6.0 * sig_w, n_omega)
        center = p.k_o * self.array.x_o / self.z * p.peak_bias
        sig_k = p.doa_width() * p.k_o
        k_axes = [np.linspace(c - 6.0 * sig_k, c + 6.0 * sig_k, n_k) for c in center]
        west = self._west_grid(omega_axis, k_axes, self.array.x_o)
        dk = np.prod([a[1] - a[0] for a in k_axes])
        wk = west.reshape(n_omega, -1).sum(axis=1) * dk / (2.0 * math.pi) ** self.d
        dw = omega_axis[1] - omega_axis[0]
        phases = np.exp(-1j * np.outer(t_grid, omega_axis))
        return phases @ wk * dw / (2.0 * math.pi)

    # -- velocity image ------------------------------------------------------

    def velocity_image(self, y_axes, t_grid, method="analytic", n_x=181):
        """|O_v(y, t)| on a tensor y grid; returns values of shape (nt, *ny).

        The coherence function is Gaussian in the array coordinate, so the
        aperture integral over x is evaluated in closed form (``analytic``);
        ``quadrature`` integrates it numerically for cross-checking (d=1).
        """
        p = self.params
        k_o, kappa = p.k_o, self.array.kappa
        if method == "quadrature":
            return self._velocity_image_quadrature(y_axes, t_grid, n_x)
        mesh = np.meshgrid(t_grid, *y_axes, indexing="ij")
        T = mesh[0]
        Y = np.stack(mesh[1:], axis=-1)
        v = self.flow.v_perp
        inv_t2 = 1.0 / p.decoherence_time ** 2 if np.isfinite(p.decoherence_time) \
            else 0.0
        drift = p.drift_factor * Y - v * T[..., None]
        log_amp = (-0.5 * np.square(T) * inv_t2
                   - 0.5 * np.sum(np.square(Y), axis=-1) / p.speckle_len_1 ** 2
                   - 0.5 * np.sum(np.square(drift), axis=-1) / p.speckle_len_2 ** 2)
        # aperture integral: int dx exp(-A|x|^2 + b.x) with complex b
        A = 0.5 / p.beam_radius ** 2 + k_o ** 2 / kappa ** 2
        b_re = 2.0 * k_o ** 2 / kappa ** 2 * self.array.x_o
        b_im = p.phase_dx * Y - p.phase_dt * v * T[..., None]
        b2_re = float(b_re @ b_re) - np.sum(np.square(b_im), axis=-1)
        log_gauss = (b2_re / (4.0 * A)
                     - k_o ** 2 * float(self.array.x_o @ self.array.x_o)
                     / kappa ** 2)
        taper = -k_o ** 2 * np.sum(np.square(Y), axis=-1) / (4.0 * kappa ** 2)
        mag = p.amplitude * (math.pi / A) ** (self.d / 2.0) \
            * np.exp(log_amp + log_gauss + taper)
        return mag

    def _velocity_image_quadrature(self, y_axes, t_grid, n_x):
        p = self.params
        k_o, kappa = p.k_o, self.array.kappa
        sx = kappa / (math.sqrt(2.0) * k_o)
        x_axis = [np.linspace(xo - 6.0 * sx, xo + 6.0 * sx, n_x)
                  for xo in self.array.x_o]
        if self.d != 1:
            raise ConfigurationError("quadrature velocity image is d=1 only")
        yg = y_axes[0]
        T, Y, X = np.meshgrid(t_grid, yg, x_axis[0], indexing="ij")
        c_vals = _coherence_closed_grid(p, self.flow.v_perp, T, Y[..., None],
                                        X[..., None])
        apod = np.exp(-k_o ** 2 * (X - self.array.x_o[0]) ** 2 / kappa ** 2)
        integ = np.trapezoid(c_vals * apod, x_axis[0], axis=2)
        pref = np.exp(-k_o ** 2 * yg ** 2 / (4.0 * kappa ** 2))
        return np.abs(integ) * pref[None, :]


class GriddedImager:
    """Images computed by discrete sums over a tabulated W_est(omega, k).

    ``values`` has shape (n_omega, *n_k) sampled at the array center.  This
    is the path taken by measured (speckle-synthesized) data.
    """

    def __init__(self, values, omega_axis, k_axes, params=None):
        self.values = np.asarray(values, dtype=float)
        self.omega_axis = np.asarray(omega_axis, dtype=float)
        self.k_axes = [np.asarray(a, dtype=float) for a in k_axes]
        self.params = params
        self.d = len(self.k_axes)

    def doa_image(self, k_axes=None):
        dw = self.omega_axis[1] - self.omega_axis[0]
        vals = self.values.sum(axis=0) * dw / (2.0 * math.pi)
        return self.k_axes, np.abs(vals)

    def range_trace(self, t_grid):
        dw = self.omega_axis[1] - self.omega_axis[0]
        dk = np.prod([a[1] - a[0] for a in self.k_axes])
        wk = self.values.reshape(len(self.omega_axis), -1).sum(axis=1) \
            * dk / (2.0 * math.pi) ** self.d
        phases = np.exp(-1j * np.outer(t_grid, self.omega_axis))
        return phases @ wk * dw / (2.0 * math.pi)


# ---------------------------------------------------------------------------
# peak and width fitting
# ---------------------------------------------------------------------------

def _quadratic_peak_1d(axis, logvals, i):
    if i == 0 or i == len(axis) - 1:
        return float(axis[i])
    a, b, c = logvals[i - 1], logvals[i], logvals[i + 1]
    denom = a - 2 * b + c
    if denom >= 0:
        return float(axis[i])
    step = axis[1] - axis[0]
    return float(axis[i] + 0.5 * step * (a - c) / denom)


def _find_peak(axes, values):
    """Grid argmax refined by per-axis quadratic interpolation of the log."""
    v = np.asarray(values, dtype=float)
    idx = np.unravel_index(int(np.argmax(v)), v.shape)
    floor = float(np.median(v))
    peak = float(v[idx])
    if peak <= 3.0 * max(floor, 1e-300) or peak <= 0:
        raise NoDetectionError("image has no peak above three times the floor")
    logs = np.log(np.clip(v, peak * 1e-12, None))
    coords = []
    for ax in range(v.ndim):
        sl = list(idx)
        line = logs[tuple(sl[:ax]) + (slice(None),) + tuple(sl[ax + 1:])]
        coords.append(_quadratic_peak_1d(axes[ax], line, idx[ax]))
    return np.array(coords), idx, peak


def _fit_gaussian_width(axis_sq, logvals, weights=None):
    """Slope of log(image) against squared offset -> Gaussian std."""
    A = np.column_stack([axis_sq, np.ones_like(axis_sq)])
    if weights is None:
        weights = np.ones_like(axis_sq)
    W = np.sqrt(weights)
    coef, *_ = np.linalg.lstsq(A * W[:, None], logvals * W, rcond=None)
    slope = coef[0]
    if slope >= 0:
        raise NumericalError("width fit produced a non-decaying profile",
                             {"slope": float(slope)})
    return math.sqrt(-0.5 / slope)


@dataclass
class DoAResult:
    k_peak: np.ndarray
    theta_doa_fit: float
    k_pred: np.ndarray
    theta_doa_pred: float
    z_assumed: float


def image_doa(imager, z_assumed=None, k_axes=None):
    """Locate the arrival-direction peak and fit its width.

    Returns the interpolated peak wavevector, the fitted width in units of
    k_o, and the closed-form predictions at the assumed range.
    """
    axes, vals = imager.doa_image(k_axes)
    p = imager.params
    if p is not None:
        for ax in axes:
            step = ax[1] - ax[0]
            if step > p.doa_width() * p.k_o / 5.0:
                raise ConfigurationError(
                    "arrival-direction grid spacing must be at most a fifth of "
                    "the predicted peak width")
    k_peak, idx, peak = _find_peak(axes, vals)
    # width from the top decade, radially around the peak
    mesh = np.meshgrid(*axes, indexing="ij")
    r2 = sum(np.square(m - c) for m, c in zip(mesh, k_peak))
    mask = vals >= 0.1 * peak
    logs = np.log(vals[mask] / peak)
    width_k = _fit_gaussian_width(r2[mask], logs)
    z_used = z_assumed if z_assumed is not None else getattr(imager, "z", None)
    if p is not None and z_used is not None:
        # predictions from the coefficient set at the assumed range
        pred = _doa_predictions(p, imager, z_used)
    else:
        pred = (np.full(len(axes), np.nan), np.nan)
    k_o = p.k_o if p is not None else np.nan
    return DoAResult(k_peak=k_peak, theta_doa_fit=width_k / k_o,
                     k_pred=pred[0], theta_doa_pred=pred[1],
                     z_assumed=z_used if z_used is not None else np.nan)


def _doa_predictions(p, imager, z_assumed):
    if abs(z_assumed - p.z) < 1e-12 * max(p.z, 1.0) \
            or getattr(imager, "stats", None) is None:
        params = p
        z_assumed = p.z
    else:
        params = coherence_params(imager.stats, imager.wn, imager.source,
                                  imager.flow, imager.array.kappa, z_assumed)
    x_o = getattr(imager, "array", None)
    if x_o is None:
        return np.full(1, np.nan), params.doa_width()
    k_pred = params.k_o * imager.array.x_o / z_assumed * params.peak_bias
    return k_pred, params.doa_width()


def doa_aperture_saturation(params):
    """Critical aperture kappa = sqrt(2) D_z k_o beyond which the width saturates.

    Below it the aperture term dominates the arrival-direction resolution;
    beyond it the decoherence of the field sets the floor and enlarging the
    array no longer pays.
    """
    return math.sqrt(2.0) * params.decoherence_length * params.k_o


def doa_width_scan(params, kappas):
    """Predicted arrival-direction width as a function of the aperture."""
    return np.array([params.doa_width(kappa=kk) for kk in kappas])


# ---------------------------------------------------------------------------
# range estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RangeConstants:
    """z-independent medium constants T_z sqrt(z) and D_z sqrt(z).

    These are what a known-source calibration measures; together with the
    source radius they determine the temporal-decay width at every range.
    """

    c_T: float
    c_D: float
    ell_s: float

    @classmethod
    def from_stats(cls, stats, wn, source):
        tc = taylor_coeffs(stats, wn.k_o)
        c_T = stats.T_corr / math.sqrt(tc.alpha) if tc.alpha > 0 else math.inf
        c_D = stats.ell / math.sqrt(tc.vartheta) if tc.vartheta > 0 else math.inf
        return cls(c_T=c_T, c_D=c_D, ell_s=source.ell_s)

    def theta_range(self, z, v_mag):
        if not np.isfinite(self.c_T):
            return math.inf
        T_z = self.c_T / math.sqrt(z)
        D_z = self.c_D / math.sqrt(z)
        u = (self.ell_s / D_z) ** 2
        g = (1.0 + u / 6.0) / (1.0 + 2.0 * u / 3.0)
        return T_z / math.sqrt(1.0 + (v_mag * T_z / D_z) ** 2 * g)


@dataclass
class RangeResult:
    z_hat: float
    theta_range_fit: float
    residual: float


def image_range(trace_t, trace_vals, constants, v_mag, z_bracket, rtol=1e-4):
    """Invert the temporal decay of the range image for the source range.

    ``trace_vals`` is O_range on the time grid ``trace_t``.  The Gaussian
    half-width is fitted on the top decade and the closed-form width formula
    is solved for z by bisection over ``z_bracket``.
    """
    if not np.isfinite(constants.c_T):
        raise NonIdentifiableError(
            "frozen medium: the decoherence time is infinite, range cannot be "
            "estimated from the temporal decay")
    vals = np.abs(np.asarray(trace_vals))
    peak = float(vals.max())
    if peak <= 0 or peak <= 3.0 * max(float(np.median(vals)), 1e-300):
        raise NoDetectionError("range image has no usable temporal peak")
    t = np.asarray(trace_t, dtype=float)
    mask = vals >= 0.1 * peak
    theta_fit = _fit_gaussian_width(np.square(t[mask]), np.log(vals[mask] / peak))

    def f(z):
        return constants.theta_range(z, v_mag) - theta_fit

    lo, hi = z_bracket
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise RangeBracketError(
            f"width {theta_fit:.4e}s is not bracketed by z in [{lo:.4g}, {hi:.4g}] "
            f"(theta({lo:.4g})={constants.theta_range(lo, v_mag):.4e}, "
            f"theta({hi:.4g})={constants.theta_range(hi, v_mag):.4e})")
    z_hat = optimize.bisect(f, lo, hi, rtol=rtol)
    return RangeResult(z_hat=float(z_hat), theta_range_fit=float(theta_fit),
                       residual=float(f(z_hat)))


def fit_medium_constants(z_known, theta_v0, ell_s, theta_v=None, v_mag=None):
    """Calibrate the range-inversion constants from known-source widths.

    ``theta_v0`` is the fitted temporal width at a known range in still air
    (gives c_T); optionally a second width measured under a known cross-range
    flow of magnitude ``v_mag`` pins c_D through the width-reduction factor.
    """
    c_T = theta_v0 * math.sqrt(z_known)
    if theta_v is None:
        return RangeConstants(c_T=c_T, c_D=math.inf, ell_s=ell_s)
    if theta_v >= theta_v0:
        raise ConfigurationError("flow must shrink the temporal width")

    def mismatch(c_D):
        trial = RangeConstants(c_T=c_T, c_D=c_D, ell_s=ell_s)
        return trial.theta_range(z_known, v_mag) - theta_v

    lo, hi = 1e-6 * ell_s, 1e6 * ell_s
    # theta_range is monotone in c_D: wider decoherence weakens the reduction
    flo, fhi = mismatch(lo), mismatch(hi)
    if flo * fhi > 0:
        raise RangeBracketError("calibration widths are inconsistent")
    c_D = optimize.bisect(mismatch, lo, hi, rtol=1e-6)
    return RangeConstants(c_T=c_T, c_D=float(c_D), ell_s=ell_s)


# ---------------------------------------------------------------------------
# velocity estimation
# ---------------------------------------------------------------------------

@dataclass
class VelocityResult:
    v_hat: np.ndarray
    slope: np.ndarray
    slope_bias: float
    res_v: float
    n_slices: int


def estimate_velocity(imager, t_grid=None, y_axes=None, min_slices=3):
    """Track the drifting peak of the velocity image and regress its slope.

    Per time slice the peak position is interpolated quadratically; a linear
    least-squares fit of peak position against time, weighted by the slice
    peak amplitude, estimates s_z v_o, and dividing by the slope bias s_z
    gives the velocity.  The resolution follows the closed-form budget.
    """
    p = imager.params
    if not (np.isfinite(p.slope_bias) and p.slope_bias > 0):
        raise NonIdentifiableError(
            "no scattering-induced drift: the lateral velocity is not "
            "identifiable in a non-decorrelating medium")
    v_mag = float(np.linalg.norm(p.v_perp))
    span = p.decoherence_time if np.isfinite(p.decoherence_time) else 1.0
    if v_mag > 0:
        span = min(span, p.decay_scale * p.effective_aperture / v_mag)
    if t_grid is None:
        t_grid = np.linspace(-1.0 * span, 1.0 * span, 15)
    if y_axes is None:
        half = 5.0 * p.peak_scale * p.effective_aperture \
            + abs(p.slope_bias) * v_mag * float(np.max(np.abs(t_grid)))
        n_y = max(101, int(20 * half / (p.peak_scale * p.effective_aperture)) | 1)
        y_axes = [np.linspace(-half, half, n_y)] * imager.d
    vals = imager.velocity_image(y_axes, t_grid)

    peaks = []
    weights = []
    global_peak = float(vals.max())
    if global_peak <= 0:
        raise NoDetectionError("velocity image is empty")
    for it in range(len(t_grid)):
        sl = vals[it]
        amp = float(sl.max())
        if amp < 1e-3 * global_peak:
            continue
        coords, idx, peak = _find_peak(y_axes, sl) if amp > 0 else (None, None, 0)
        peaks.append((t_grid[it], coords))
        weights.append(amp)
    if len(peaks) < min_slices:
        raise NumericalError(
            f"velocity regression is degenerate: only {len(peaks)} usable slices",
            {"min_slices": min_slices})
    t_used = np.array([t for t, _ in peaks])
    y_used = np.array([c for _, c in peaks])
    w = np.array(weights)
    # weighted LSQ of y on t, per component, common weights
    tw = w * t_used
    denom = float(tw @ t_used) - float(w @ t_used) ** 2 / float(w.sum())
    slope = np.empty(imager.d)
    for j in range(imager.d):
        num = float(tw @ y_used[:, j]) \
            - float(w @ t_used) * float(w @ y_used[:, j]) / float(w.sum())
        slope[j] = num / denom
    v_hat = slope / p.slope_bias
    res_v = p.velocity_resolution(v_mag=float(np.linalg.norm(v_hat)))
    return VelocityResult(v_hat=v_hat, slope=slope, slope_bias=p.slope_bias,
                          res_v=res_v, n_slices=len(peaks))


# ---------------------------------------------------------------------------
# composed localization
# ---------------------------------------------------------------------------

@dataclass
class EstimateReport:
    """Imaging outputs with resolutions and identifiability diagnostics."""

    k_peak: list = None
    theta_doa: float = None
    z_hat: float = None
    theta_range: float = None
    v_hat: list = None
    s_z_used: float = None
    res_v: float = None
    x_o_hat: list = None
    res_x: float = None
    res_z: float = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self, path=None, indent=2):
        blob = json.dumps(self.to_dict(), indent=indent, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(blob + "\n")
        return blob


def localize_source(imager, z_bracket=None, constants=None, v_mag=None,
                    z_known=None, with_velocity=True, t_grid=None):
    """Full pipeline: range inversion, arrival direction, cross-range position.

    The range is estimated first (unless ``z_known`` is given), the
    arrival-direction peak is converted to a cross-range position through
    the range-dependent bias factor, and the velocity step runs optionally.
    Near the critical range the straight-ray conversions are ambiguous, so
    the report carries all candidate inversions instead of silently picking
    one.
    """
    report = EstimateReport()
    p = imager.params
    if constants is None:
        constants = RangeConstants.from_stats(imager.stats, imager.wn, imager.source)
    if v_mag is None:
        v_mag = float(np.linalg.norm(imager.flow.v_perp))

    if z_known is not None:
        z_hat = float(z_known)
        report.diagnostics["range_mode"] = "known"
    else:
        if not p.time_dependent:
            raise NonIdentifiableError(
                "frozen medium: range is not identifiable from a time-harmonic "
                "source; supply z_known")
        if z_bracket is None:
            z_bracket = (imager.z / 10.0, imager.z * 10.0)
        width = p.range_width()
        t_span = 4.0 * width
        tg = np.linspace(-t_span, t_span, 257)
        trace = imager.range_trace(tg)
        rr = image_range(tg, trace, constants, v_mag, z_bracket)
        z_hat = rr.z_hat
        report.theta_range = rr.theta_range_fit
        # range resolution from the local sensitivity of the width formula
        h = 1e-3 * z_hat
        dth = (constants.theta_range(z_hat + h, v_mag)
               - constants.theta_range(z_hat - h, v_mag)) / (2 * h)
        rel_fit_err = abs(rr.residual) / max(rr.theta_range_fit, 1e-300) + 1e-4
        report.res_z = abs(rel_fit_err * rr.theta_range_fit / dth) if dth else None
        report.diagnostics["range_mode"] = "inverted"
    report.z_hat = z_hat

    doa = image_doa(imager, z_assumed=z_hat)
    report.k_peak = doa.k_peak.tolist()
    report.theta_doa = doa.theta_doa_fit
    params_at = coherence_params(imager.stats, imager.wn, imager.source,
                                 imager.flow, imager.array.kappa, z_hat)
    bias = params_at.peak_bias
    k_o = imager.wn.k_o
    x_o_hat = z_hat * doa.k_peak / (k_o * bias)
    report.x_o_hat = x_o_hat.tolist()
    report.res_x = float(z_hat * doa.theta_doa_fit / bias)
    report.diagnostics["peak_bias"] = bias
    z_star = params_at.critical_range
    if z_star / 3.0 <= z_hat <= 3.0 * z_star:
        report.diagnostics["near_critical_range"] = True
        report.diagnostics["x_o_candidates"] = {
            "ballistic_bias_1": (z_hat * doa.k_peak / k_o).tolist(),
            "scattered_bias_3_2": (z_hat * doa.k_peak / (1.5 * k_o)).tolist(),
            "exact_bias": x_o_hat.tolist(),
        }

    if with_velocity:
        try:
            vr = estimate_velocity(imager, t_grid=t_grid)
            report.v_hat = vr.v_hat.tolist()
            report.s_z_used = vr.slope_bias
            report.res_v = vr.res_v
        except (NumericalError, NoDetectionError, NonIdentifiableError) as exc:
            report.diagnostics["velocity_error"] = str(exc)
    return report
