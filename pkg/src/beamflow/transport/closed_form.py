"""Semi-analytic solution of the narrow-cone transport equation.

In the Fourier variables (t, y, q) dual to (omega, k, x) the transport
equation becomes a first-order ODE along the characteristic
y = y0 + (q / k_o) z, with the exact solution

    W_breve(t, y, q, z) = W_breve0(t, y - q z / k_o)
        * exp{ (sigma_c^2 ell k_o^2 / 4) *
               int_0^z [ R(t/T, (y - (q/k_o)(z - z') - v_o t)/ell) - R(0,0) ] dz' }

where R is the range-marginal covariance.  The solver works in the sheared
variable y~ = y - q z / k_o so the grids stay compact, applies the shear as
an exact phase exp(-i (k . q) z / k_o) in the mixed (k, q) domain, and maps
back to (omega, k, x) with FFTs.  The point-source delta(x) is regularized
as an isotropic Gaussian whose standard deviation equals the x grid step;
the Monte Carlo solver samples the same regularization so the two solvers
share one initial condition.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import warnings

import numpy as np
from scipy import special

from ..errors import NumericalError
from ..medium import marginal_covariance, taylor_coeffs
from .field import WignerField
from .kernels import total_cross_section_paraxial

__all__ = ["TransportGrids", "design_grids", "propagate_closed_form",
           "fourier_grid_transform", "initial_wigner", "initial_mass"]


def _centered_grid(n, step):
    return (np.arange(n) - n // 2) * step


def fourier_grid_transform(values, axis, src_step, n, sign, measure):
    """DFT approximation of int ds f(s) exp(sign * i u s) on centered grids.

    ``src_step`` is the source-grid spacing; the destination grid is the
    conjugate centered grid with spacing 2 pi / (n * src_step).  ``measure``
    multiplies the result (use src_step for a plain integral, src_step/(2 pi)
    for a 1/(2 pi) convention).  Both grids are index-centered at n//2.
    """
    values = np.moveaxis(values, axis, -1)
    m = n // 2
    idx = np.arange(n)
    # f at s_j = (j - m) h;  sum_j f_j exp(sign i u_l s_j) with u_l = (l - m) du
    pre = np.exp(sign * 2j * math.pi * (-m) * (idx - m) / n)
    fft_in = values * pre
    if sign > 0:
        out = np.fft.ifft(fft_in, axis=-1) * n
    else:
        out = np.fft.fft(fft_in, axis=-1)
    post = np.exp(sign * 2j * math.pi * idx * (-m) / n)
    out = out * post
    out = out * measure
    return np.moveaxis(out, -1, axis)


@dataclass
class TransportGrids:
    """Conjugate grid pair for the transport solver (d = 1 or 2).

    ``sigma_reg`` is the standard deviation of the Gaussian regularizing the
    point source; it defaults to a small multiple of the x step so that its
    spectrum has decayed below the negativity budget at the q-Nyquist edge.
    Both solvers read it from here, which keeps them comparable bin by bin.
    """

    omega: np.ndarray
    k_axes: list
    x_axes: list
    t: np.ndarray
    y_axes: list
    q_axes: list
    sigma_reg: float = None

    def __post_init__(self):
        if self.sigma_reg is None:
            self.sigma_reg = 2.2 * self.x_step

    @property
    def d(self):
        return len(self.k_axes)

    @property
    def x_step(self):
        return float(self.x_axes[0][1] - self.x_axes[0][0])


def design_grids(stats, wn, source, flow, z, n_t=None, n_y=None, n_q=None,
                 reg_oversample=2.2, max_points=4e7):
    """Choose conjugate grids from the physical scales of the scenario.

    Sizes can be overridden; spans follow the spectral broadening accrued
    over the expected number of scattering events and are wide enough to
    keep truncation ringing below the 1e-9-of-peak negativity budget.  The
    delta(x) regularization is ``reg_oversample`` grid steps wide so its
    spectrum has decayed at the Nyquist edge of the conjugate axis.
    """
    from scipy.fft import next_fast_len

    d = flow.d
    sigma = total_cross_section_paraxial(stats, wn)
    n_jumps = sigma * z
    T, ell = stats.T_corr, stats.ell
    T_s, ell_s = source.T_s, source.ell_s
    # final spreads of the phase-space density
    sig_w = math.sqrt(0.5 / T_s ** 2 + max(n_jumps, 1e-12)
                      * (1.0 / T ** 2 + float(np.dot(flow.v_perp, flow.v_perp))
                         / ell ** 2))
    sig_k = math.sqrt(0.5 / ell_s ** 2 + max(n_jumps, 1e-12) / ell ** 2)
    # decoherence scales at the target range, if the medium fluctuates
    try:
        tc = taylor_coeffs(stats, wn.k_o)
        t_dec = T / math.sqrt(tc.alpha * z) if tc.alpha * z > 0 else math.inf
        d_dec = ell / math.sqrt(tc.vartheta * z) if tc.vartheta * z > 0 else math.inf
    except Exception:
        t_dec = d_dec = math.inf
    # t axis: the Fourier-domain density decays like the source correlation
    # envelope exp(-t^2 / 4 T_s^2); reach ~1e-11 of it at the box edge.
    t_half = 10.0 * T_s
    dt_req = min(T / 4.0, t_dec / 2.2, 0.5 / sig_w, t_half / 8.0)
    if n_t is None:
        n_t = next_fast_len(int(math.ceil(2 * t_half / dt_req)))
    dt = 2 * t_half / n_t
    # y axis: source envelope decay plus the correlation-scale structure of
    # the scattering exponent; conjugate span must cover the k spread.
    y_half = 10.0 * ell_s + 6.0 * ell
    dy_req = min(ell / 4.0, d_dec / 2.2, math.pi / (5.5 * sig_k), y_half / 8.0)
    if n_y is None:
        n_y = next_fast_len(int(math.ceil(2 * y_half / dy_req)))
    dy = 2 * y_half / n_y
    # q axis: conjugate of x; the regularized point source must resolve and
    # its spectrum must die before the q-Nyquist edge.
    sig_x0 = math.sqrt((z * sig_k / wn.k_o) ** 2 / 3.0
                       + (z * 0.5 / ell_s / wn.k_o) ** 2)
    sigma_reg = sig_x0 / 4.0
    sig_x = math.sqrt(sig_x0 ** 2 + sigma_reg ** 2)
    x_half = 6.5 * sig_x
    if n_q is None:
        dx = sigma_reg / reg_oversample
        n_q = next_fast_len(int(math.ceil(2 * x_half / dx)))
    dx = 2 * x_half / n_q
    sigma_reg = reg_oversample * dx

    total = n_t * n_y ** d * n_q ** d
    if total > max_points:
        raise NumericalError(
            f"designed transport grid has {total:.2e} points (> {max_points:.0e}); "
            "pass explicit n_t/n_y/n_q or reduce the scenario size",
            {"n_t": n_t, "n_y": n_y, "n_q": n_q})

    t = _centered_grid(n_t, dt)
    omega = _centered_grid(n_t, 2.0 * math.pi / (n_t * dt))
    y = _centered_grid(n_y, dy)
    k = _centered_grid(n_y, 2.0 * math.pi / (n_y * dy))
    q = _centered_grid(n_q, 2.0 * math.pi / (n_q * dx))
    x = _centered_grid(n_q, dx)
    return TransportGrids(omega=omega, k_axes=[k] * d, x_axes=[x] * d,
                          t=t, y_axes=[y] * d, q_axes=[q] * d,
                          sigma_reg=sigma_reg)


def initial_wigner(source, wn, omega, k_mesh):
    """Initial phase-space density W0(omega, k) of the regularized point source."""
    Ts, ells = source.T_s, source.ell_s
    d = len(k_mesh)
    K = np.stack([ells * km for km in k_mesh], axis=-1)
    ssq = source.spectrum_sq(Ts * omega, K)
    return source.amplitude ** 2 * Ts ** 2 * ells ** (2 * d) / (4.0 * wn.k_o) * ssq


def initial_mass(source, wn, d):
    """Total mass int W0 domega dk (x integrates to one)."""
    Ts, ells = source.T_s, source.ell_s
    pref = source.amplitude ** 2 * Ts ** 2 * ells ** (2 * d) / (4.0 * wn.k_o) \
        * (2.0 * math.pi) ** d / math.sqrt(math.pi)
    # int exp(-Ts^2 w^2) dw * prod int exp(-ells^2 k^2) dk
    return pref * math.sqrt(math.pi) / Ts * (math.sqrt(math.pi) / ells) ** d


def _wbreve0(source, wn, t, y_mesh):
    """Fourier-domain initial condition W_breve0(t, y)."""
    Ts, ells = source.T_s, source.ell_s
    d = len(y_mesh)
    y2 = sum(np.square(ym) for ym in y_mesh)
    pref = source.amplitude ** 2 * Ts * ells ** d / (4.0 * wn.k_o) \
        * math.pi ** (d / 2.0) / (2.0 * math.pi)
    return pref * np.exp(-np.square(t) / (4.0 * Ts ** 2) - y2 / (4.0 * ells ** 2))


def _gamma_exponent(stats, tau_mesh, b_mesh, s_mesh, z):
    """Exponent int_0^z [R(tau, (b + s z')/ell) - R(0,0)] dz' * sigma^2 ell k_o^2/4.

    ``b`` = y - v_o t and ``s`` = q / k_o are d-vectors per grid point; all
    inputs may be broadcast-sparse views.  For the Gaussian model the z'
    integral has the erf closed form; other models fall back to a refined
    Simpson rule with a convergence check.
    """
    model = stats.model
    ell = stats.ell
    if hasattr(model, "marginal_taylor") and stats.cov_model.startswith("gaussian"):
        r00 = math.sqrt(2.0 * math.pi)
        tau_fac = np.exp(-0.5 * np.square(tau_mesh)) if model.time_dependent else 1.0
        b2 = sum(np.square(b) for b in b_mesh)
        s2 = sum(np.square(s) for s in s_mesh)
        bs = sum(b * s for b, s in zip(b_mesh, s_mesh))
        smag = np.sqrt(s2)
        small = smag * z < 1e-6 * ell
        smag_safe = np.where(small, 1.0, smag)
        b_par = bs / smag_safe
        arg0 = b_par * (1.0 / (math.sqrt(2.0) * ell))
        arg1 = arg0 + smag_safe * (z / (math.sqrt(2.0) * ell))
        line = special.erf(arg1)
        line -= special.erf(arg0)
        line *= (ell * math.sqrt(math.pi / 2.0)) / smag_safe
        b_perp2 = np.maximum(b2 - np.square(b_par), 0.0)
        del arg0, arg1, b_par
        b_perp2 *= -0.5 / ell ** 2
        integral = np.exp(b_perp2)
        integral *= line
        del line, b_perp2
        if np.any(small):
            # degenerate direction: the integrand is constant along z'
            mid2 = b2 + bs * z + np.square(z) * s2 / 4.0  # |b + s z/2|^2
            integral = np.where(small, z * np.exp(-0.5 * mid2 / ell ** 2), integral)
        integral = integral * tau_fac  # broadcasts when the flow is still
        integral -= z
        integral *= r00 * stats.sigma_c ** 2 * ell / 4.0
        return integral
    return _gamma_generic(stats, tau_mesh, b_mesh, s_mesh, z)


def _gamma_generic(stats, tau_mesh, b_mesh, s_mesh, z, n=64):
    ell = stats.ell
    r00 = float(marginal_covariance(stats, 0.0, np.zeros(len(b_mesh))))

    def simpson(npts):
        zp = np.linspace(0.0, z, npts)
        acc = 0.0
        wts = np.full(npts, 2.0)
        wts[1::2] = 4.0
        wts[0] = wts[-1] = 1.0
        wts *= (z / (npts - 1)) / 3.0
        for zz, w in zip(zp, wts):
            r = np.stack([(b + s * zz) / ell for b, s in zip(b_mesh, s_mesh)], axis=-1)
            acc = acc + w * marginal_covariance(stats, tau_mesh, r)
        return acc

    coarse = simpson(n + 1)
    fine = simpson(2 * n + 1)
    err = np.max(np.abs(fine - coarse)) / max(np.max(np.abs(fine)), 1e-300)
    if err > 1e-6:
        raise NumericalError("range integral of the covariance did not converge",
                             {"relative_change": float(err)})
    return stats.sigma_c ** 2 * ell * 1.0 / 4.0 * (fine - r00 * z)


def propagate_closed_form(stats, wn, source, flow, z, grids=None,
                          aliasing_tol=1e-3, meta=None):
    """Propagate the source energy density to range z; returns a WignerField.

    Raises :class:`NumericalError` when the output grid leaks more than
    ``aliasing_tol`` of the mass to its boundary; emits resolution warnings
    when the grid cannot resolve the decoherence scales.
    """
    if source.T_s is None:
        raise NumericalError("the transport solver requires a finite source "
                             "duration T_s; use the time-harmonic closed forms "
                             "for a strictly monochromatic source")
    d = flow.d
    if grids is None:
        grids = design_grids(stats, wn, source, flow, z)
    t, y_axes, q_axes = grids.t, grids.y_axes, grids.q_axes
    sigma_reg = grids.sigma_reg

    _check_resolution(stats, wn, z, grids)

    nd = 1 + 2 * d

    def _view(arr, axis):
        shape = [1] * nd
        shape[axis] = len(arr)
        return np.asarray(arr).reshape(shape)

    t_b = _view(t, 0)
    y_b = [_view(y_axes[j], 1 + j) for j in range(d)]
    q_b = [_view(q_axes[j], 1 + d + j) for j in range(d)]

    q2 = sum(np.square(qm) for qm in q_b)
    wb = _wbreve0(source, wn, t_b, y_b) * np.exp(-0.5 * sigma_reg ** 2 * q2)
    if z > 0:
        tau = t_b / stats.T_corr
        b_mesh = [y_b[j] - flow.v_perp[j] * t_b for j in range(d)]
        s_mesh = [q_b[j] / wn.k_o for j in range(d)]
        gamma = _gamma_exponent(stats, tau, b_mesh, s_mesh, z) * wn.k_o ** 2
        np.exp(gamma, out=gamma)
        wb = wb * gamma
    else:
        wb = np.broadcast_to(wb, (len(t),) + tuple(len(a) for a in y_axes)
                             + tuple(len(a) for a in q_axes)).copy()

    # y -> k (forward, measure dy)
    for j in range(d):
        axis = 1 + j
        step = float(y_axes[j][1] - y_axes[j][0])
        wb = fourier_grid_transform(wb, axis, step, len(y_axes[j]), -1, step)
    # exact shear phase exp(-i (k . q) z / k_o)
    k_axes = grids.k_axes
    for j in range(d):
        k_shape = [1] * wb.ndim
        k_shape[1 + j] = len(k_axes[j])
        q_shape = [1] * wb.ndim
        q_shape[1 + d + j] = len(q_axes[j])
        wb = wb * np.exp(-1j * z / wn.k_o
                         * k_axes[j].reshape(k_shape) * q_axes[j].reshape(q_shape))
    # t -> omega (sign +, measure dt)
    dt = float(t[1] - t[0])
    wb = fourier_grid_transform(wb, 0, dt, len(t), +1, dt)
    # q -> x (sign +, measure dq / 2 pi)
    for j in range(d):
        axis = 1 + d + j
        step = float(q_axes[j][1] - q_axes[j][0])
        wb = fourier_grid_transform(wb, axis, step, len(q_axes[j]), +1,
                                    step / (2.0 * math.pi))

    values = np.real(wb)
    field = WignerField(
        omega=grids.omega, k_axes=list(grids.k_axes), x_axes=list(grids.x_axes),
        z=float(z), values=values,
        meta={
            "solver": "closed_form_characteristics",
            "medium_hash": stats.content_hash(),
            "source": {"ell_s": source.ell_s, "T_s": source.T_s,
                       "sigma_s": source.amplitude},
            "sigma_reg": sigma_reg,
            **(meta or {}),
        },
    )
    frac = field.boundary_mass_fraction()
    if frac > aliasing_tol:
        raise NumericalError(
            f"grid aliasing: boundary mass fraction {frac:.2e} exceeds {aliasing_tol:.0e}",
            {"boundary_fraction": frac})
    return field


def _check_resolution(stats, wn, z, grids):
    if z <= 0:
        return
    try:
        tc = taylor_coeffs(stats, wn.k_o)
    except Exception:
        return
    dt = float(grids.t[1] - grids.t[0])
    dy = float(grids.y_axes[0][1] - grids.y_axes[0][0])
    if tc.alpha > 0:
        t_dec = stats.T_corr / math.sqrt(tc.alpha * z)
        if dt > 0.5 * min(stats.T_corr, t_dec):
            warnings.warn(
                f"t grid step {dt:.3e} s does not resolve the decoherence time "
                f"{t_dec:.3e} s; refine n_t", stacklevel=2)
    if tc.vartheta > 0:
        d_dec = stats.ell / math.sqrt(tc.vartheta * z)
        if dy > 0.5 * min(stats.ell, d_dec):
            warnings.warn(
                f"y grid step {dy:.3e} m does not resolve the decoherence length "
                f"{d_dec:.3e} m; refine n_y", stacklevel=2)
