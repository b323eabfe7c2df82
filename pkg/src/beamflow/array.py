"""Array-side estimation: apodized Wigner transform and speckle synthesis.

The receiver array is modeled by a Gaussian apodization of standard
deviation kappa / k_o around its center x_o.  The estimated Wigner
transform admits two equivalent representations:

* a Gaussian smoothing of the true transform in the wavevector argument
  (``smoothing``), and
* a tapered Fourier transform of the coherence function over the space-time
  lags (``fourier``).

Both are implemented; the ``analytic`` evaluation computes the Fourier form
exactly for the closed-form coherence function and is what the imaging
pipelines tabulate.  Agreement of the three routes is part of the test
suite.

Raw pressure traces are outside the scope of this package.  Their
statistics enter only through the estimated Wigner transform, so a speckle
synthesizer stands in for the measurement chain: the wave received during
the acquisition window decomposes into roughly T_s / T uncorrelated
snapshots, each contributing an independent circular complex Gaussian
amplitude with variance set by the mean Wigner transform.  Averaging the
snapshot intensities reproduces the mean with relative fluctuations
sqrt(T / T_s), which is the statistical-stability budget of the imaging
functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .coherence import (_gauss_hermite_whitened, coherence_params,
                        wigner_time_harmonic)
from .errors import ConfigurationError
from .transport.field import _read_container, _write_container

__all__ = ["ArraySpec", "SpeckleEnsemble", "estimate_wigner",
           "estimate_wigner_gridded", "synthesize_speckle"]


@dataclass(frozen=True)
class ArraySpec:
    """Receiver array center and dimensionless aperture kappa.

    The apodization is exp(-|x - x_o|^2 / (2 (kappa/k_o)^2)), so the
    physical array radius is kappa / k_o.
    """

    x_o: np.ndarray
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "x_o", np.atleast_1d(np.asarray(self.x_o, dtype=float)))
        if self.kappa <= 0:
            raise ConfigurationError("aperture parameter kappa must be positive")

    @property
    def d(self):
        return self.x_o.size

    def radius(self, k_o):
        return self.kappa / k_o

    def apodization(self, x, k_o):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(np.square(x - self.x_o), axis=-1)
        return np.exp(-r2 / (2.0 * (self.kappa / k_o) ** 2))


def estimate_wigner(stats, wn, source, flow, array, omega, k, x, z,
                    method="analytic", gh_order=48, params=None):
    """Apodized estimate W_est(omega, k, x, z) of the Wigner transform.

    Methods:

    ``analytic``   exact Gaussian evaluation of the tapered Fourier form
                   using the closed coherence coefficients (default);
    ``fourier``    Gauss-Hermite quadrature of the tapered Fourier form;
    ``smoothing``  Gauss-Hermite smoothing of the closed-form Wigner
                   transform over the wavevector argument.

    Points far outside the array footprint are heavily suppressed; a
    warning is emitted beyond three array radii.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.atleast_1d(np.asarray(k, dtype=float))
    dist = float(np.linalg.norm(x - array.x_o))
    if dist > 3.0 * array.radius(wn.k_o):
        warnings.warn("evaluation point lies outside the array footprint; the "
                      "estimate is apodization-suppressed there", stacklevel=2)
    if method == "smoothing":
        return _estimate_smoothing(stats, wn, source, flow, array, omega, k, x, z,
                                   gh_order)
    if method in ("analytic", "fourier"):
        if params is None:
            params = coherence_params(stats, wn, source, flow, array.kappa, z)
        return _estimate_fourier(params, flow, array, wn.k_o, omega, k, x,
                                 exact=(method == "analytic"), gh_order=gh_order)
    raise ConfigurationError(f"unknown method {method!r}")


def _estimate_smoothing(stats, wn, source, flow, array, omega, k, x, z, gh_order):
    """Wavevector smoothing route: Gaussian average of W(omega, k + K, x, z)."""
    d = flow.d
    k_o, kappa = wn.k_o, array.kappa
    taper = math.exp(-k_o ** 2 * float((x - array.x_o) @ (x - array.x_o)) / kappa ** 2)
    nodes, weights = np.polynomial.hermite.hermgauss(gh_order)
    # K_j = (k_o / kappa) * node_j per axis; weight function exp(-kappa^2|K|^2/k_o^2)
    scale = k_o / kappa
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    wgts = np.ones_like(grids[0])
    for j in range(d):
        shape = [1] * d
        shape[j] = gh_order
        wgts = wgts * weights.reshape(shape)
    total = 0.0
    for idx in np.ndindex(grids[0].shape):
        K = np.array([g[idx] for g in grids]) * scale
        total += float(wgts[idx]) * wigner_time_harmonic(
            stats, wn, source, flow, omega, k + K, x, z,
            method="closed", warn_regime=False)
    pref = (kappa ** 2 / (math.pi * k_o ** 2)) ** (d / 2.0) * scale ** d
    return taper * pref * total


def _estimate_fourier(p, flow, array, k_o, omega, k, x, exact, gh_order):
    """Tapered Fourier route: int C(dt,dx,x,z) e^{i w dt - i k.dx - k_o^2|dx|^2/4 kappa^2}."""
    d = flow.d
    kappa = array.kappa
    taper = math.exp(-k_o ** 2 * float((x - array.x_o) @ (x - array.x_o)) / kappa ** 2)
    # quadratic form over u = (dt, dx)
    n = 1 + d
    M = np.zeros((n, n))
    v2 = float(flow.v_perp @ flow.v_perp)
    inv_t2 = 1.0 / p.decoherence_time ** 2 if np.isfinite(p.decoherence_time) else 0.0
    M[0, 0] = inv_t2 + v2 / p.speckle_len_2 ** 2
    for j in range(d):
        M[1 + j, 1 + j] = (1.0 / p.speckle_len_1 ** 2
                           + p.drift_factor ** 2 / p.speckle_len_2 ** 2
                           + k_o ** 2 / (2.0 * kappa ** 2))
        M[0, 1 + j] = M[1 + j, 0] = -p.drift_factor * flow.v_perp[j] / p.speckle_len_2 ** 2
    # linear imaginary part: phase of C plus the Fourier phase
    v = np.concatenate([[omega - p.phase_dt * float(x @ flow.v_perp)],
                        -k + p.phase_dx * x])
    amp = p.amplitude * math.exp(-float(x @ x) / (2.0 * p.beam_radius ** 2))
    if exact:
        sol = np.linalg.solve(M, v)
        det = np.linalg.det(M)
        val = (2.0 * math.pi) ** (n / 2.0) / math.sqrt(det) \
            * math.exp(-0.5 * float(v @ sol))
    else:
        val = _gauss_hermite_whitened(M, v, gh_order).real
    return taper * amp * val


def estimate_wigner_gridded(values, omega_axis, k_axes, array, k_o, x=None):
    """Discrete wavevector-smoothing estimate from a tabulated W(omega, k).

    ``values`` has shape (n_omega, *n_k); the Gaussian smoothing kernel of
    the aperture is applied along every k axis by quadrature on the grid.
    Used for speckle realizations and other measured fields.  ``x`` defaults
    to the array center (no apodization suppression).  Raises when the grid
    cannot sample or contain the smoothing kernel.
    """
    from .errors import NumericalError

    kappa = array.kappa
    out = np.asarray(values, dtype=float)
    d = len(k_axes)
    width = k_o / (math.sqrt(2.0) * kappa)  # std of the smoothing kernel
    for j, axis in enumerate(k_axes):
        axis = np.asarray(axis, dtype=float)
        dk = axis[1] - axis[0]
        if dk > 1.5 * width:
            raise NumericalError(
                f"k grid step {dk:.3e} undersamples the aperture smoothing "
                f"kernel (std {width:.3e}); refine the grid or shrink kappa")
        diff = axis[:, None] - axis[None, :]
        kern = np.exp(-kappa ** 2 * diff ** 2 / k_o ** 2) * dk \
            * (kappa ** 2 / (math.pi * k_o ** 2)) ** 0.5
        out = np.moveaxis(np.tensordot(kern, np.moveaxis(out, 1 + j, 0), axes=(1, 0)),
                          0, 1 + j)
    if x is not None:
        taper = math.exp(-k_o ** 2 * float((np.atleast_1d(x) - array.x_o)
                                           @ (np.atleast_1d(x) - array.x_o)) / kappa ** 2)
        out = out * taper
    return out


@dataclass
class SpeckleEnsemble:
    """Synthetic incoherent-measurement ensemble on an (omega, k) grid.

    ``amplitudes`` has shape (n_realizations, n_snapshots, n_omega, *n_k)
    and holds the complex snapshot amplitudes; the empirical Wigner estimate
    of a realization averages the snapshot intensities.
    """

    amplitudes: np.ndarray
    omega_axis: np.ndarray
    k_axes: list
    seed: int
    t_ratio: float
    meta: dict = field(default_factory=dict)

    @property
    def n_realizations(self):
        return self.amplitudes.shape[0]

    @property
    def n_snapshots(self):
        return self.amplitudes.shape[1]

    def empirical_wigner(self, r=None):
        """Snapshot-averaged intensity of one realization (or all, stacked)."""
        a2 = np.abs(self.amplitudes) ** 2
        mean = a2.mean(axis=1)
        return mean if r is None else mean[r]

    def ensemble_mean(self):
        return self.empirical_wigner().mean(axis=0)

    def save(self, path):
        header = {
            "kind": "speckle_ensemble",
            "axes": {"omega": self.omega_axis.tolist(),
                     "k": [np.asarray(a).tolist() for a in self.k_axes]},
            "shape": list(self.amplitudes.shape) + [2],
            "seed": self.seed,
            "t_ratio": self.t_ratio,
            "meta": self.meta,
            "layout": "trailing axis is (re, im); leading axes are "
                      "(realization, snapshot)",
        }
        packed = np.stack([self.amplitudes.real, self.amplitudes.imag], axis=-1)
        _write_container(path, header, packed)

    @classmethod
    def load(cls, path):
        header, arrays = _read_container(path)
        if header.get("kind") != "speckle_ensemble":
            raise ConfigurationError(f"{path}: not a speckle_ensemble container")
        packed = arrays[0].reshape(header["shape"])
        amps = packed[..., 0] + 1j * packed[..., 1]
        return cls(amplitudes=amps,
                   omega_axis=np.array(header["axes"]["omega"]),
                   k_axes=[np.array(a) for a in header["axes"]["k"]],
                   seed=header["seed"], t_ratio=header["t_ratio"],
                   meta=header.get("meta", {}))


def synthesize_speckle(wigner_values, omega_axis, k_axes, t_ratio, seed,
                       n_realizations=100):
    """Draw measurement realizations consistent with a mean Wigner transform.

    Each realization consists of floor(t_ratio) independent snapshots whose
    complex amplitudes are circular Gaussians with variance equal to the
    prescribed Wigner values, so the snapshot-averaged intensity has mean W
    and pointwise relative standard deviation 1 / sqrt(floor(t_ratio)).

    The grid spacing should match the coherence cell of the field (one
    independent amplitude per cell); the ensemble is bit-reproducible for a
    fixed seed.
    """
    if t_ratio < 1:
        raise ConfigurationError("t_ratio = T_s / T_corr must be >= 1")
    m = int(t_ratio)
    w = np.asarray(wigner_values, dtype=float)
    if np.any(w < 0):
        w = np.clip(w, 0.0, None)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    shape = (n_realizations, m) + w.shape
    scale = np.sqrt(w / 2.0)
    amps = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return SpeckleEnsemble(amplitudes=amps, omega_axis=np.asarray(omega_axis),
                           k_axes=[np.asarray(a) for a in k_axes],
                           seed=seed, t_ratio=float(t_ratio))
