"""Gridded phase-space energy density and its on-disk container.

A :class:`WignerField` holds W(omega, k, x) at a fixed range z on tensor
grids, with axis metadata.  The container format is a small binary file:

    bytes 0..3   magic ``WIGF``
    bytes 4..7   format version (little-endian uint32)
    bytes 8..15  header length in bytes (little-endian uint64)
    header       UTF-8 JSON: axes, z, shape, metadata, payload layout
    payload      little-endian float64, C order

Ensembles reuse the same container with one extra leading realization axis
(and, for complex amplitudes, a trailing re/im axis of size 2, declared in
the header).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np

from ..errors import ConfigurationError

_MAGIC = b"WIGF"
_VERSION = 1


@dataclass
class WignerField:
    """Energy density W(omega, k, x) at fixed range z.

    ``values`` has shape (n_omega, *n_k, *n_x) where k and x each contribute
    d axes.  ``stderr`` optionally carries per-bin standard errors (Monte
    Carlo histograms).
    """

    omega: np.ndarray
    k_axes: list
    x_axes: list
    z: float
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    stderr: np.ndarray = None

    @property
    def d(self):
        return len(self.k_axes)

    def axis_steps(self):
        def step(a):
            return float(a[1] - a[0]) if len(a) > 1 else 1.0
        return ([step(self.omega)], [step(a) for a in self.k_axes],
                [step(a) for a in self.x_axes])

    def cell_volume(self):
        (dw,), dks, dxs = self.axis_steps()
        return dw * float(np.prod(dks)) * float(np.prod(dxs))

    def total_mass(self):
        return float(self.values.sum() * self.cell_volume())

    def coarsen(self, factors):
        """Block-average the density onto a coarser grid (mass preserving).

        ``factors`` lists one integer per axis of ``values``; trailing cells
        that do not fill a block are dropped.  Standard errors combine in
        quadrature.
        """
        v = self.values
        e = self.stderr
        axes = [np.asarray(self.omega)] + [np.asarray(a) for a in self.k_axes] \
            + [np.asarray(a) for a in self.x_axes]
        new_axes = []
        for ax, (n, f) in enumerate(zip(v.shape, factors)):
            keep = (n // f) * f
            sl = [slice(None)] * v.ndim
            sl[ax] = slice(0, keep)
            v = v[tuple(sl)]
            if e is not None:
                e = e[tuple(sl)]
            new_axes.append(axes[ax][:keep].reshape(-1, f).mean(axis=1))
        shape = []
        for n, f in zip(v.shape, factors):
            shape.extend([n // f, f])
        v = v.reshape(shape)
        sum_axes = tuple(range(1, len(shape), 2))
        v = v.mean(axis=sum_axes)
        if e is not None:
            e = np.sqrt(np.square(e.reshape(shape)).sum(axis=sum_axes)) \
                / np.prod(factors)
        nk = len(self.k_axes)
        return WignerField(
            omega=new_axes[0], k_axes=new_axes[1:1 + nk], x_axes=new_axes[1 + nk:],
            z=self.z, values=v, meta=dict(self.meta), stderr=e)

    def boundary_mass_fraction(self):
        """Fraction of |values| mass on the outermost cells of every axis."""
        v = np.abs(self.values)
        total = v.sum()
        if total == 0:
            return 0.0
        inner = v
        for axis in range(v.ndim):
            sl = [slice(None)] * v.ndim
            sl[axis] = slice(1, -1)
            inner = inner[tuple(sl)]
        return float((total - inner.sum()) / total)

    # -- serialization -----------------------------------------------------

    def save(self, path):
        header = {
            "kind": "wigner_field",
            "z": self.z,
            "axes": {
                "omega": np.asarray(self.omega, dtype=float).tolist(),
                "k": [np.asarray(a, dtype=float).tolist() for a in self.k_axes],
                "x": [np.asarray(a, dtype=float).tolist() for a in self.x_axes],
            },
            "shape": list(self.values.shape),
            "meta": self.meta,
            "has_stderr": self.stderr is not None,
        }
        _write_container(path, header, self.values,
                         self.stderr if self.stderr is not None else None)

    @classmethod
    def load(cls, path):
        header, arrays = _read_container(path)
        if header.get("kind") != "wigner_field":
            raise ConfigurationError(f"{path}: not a wigner_field container")
        values = arrays[0].reshape(header["shape"])
        stderr = arrays[1].reshape(header["shape"]) if header["has_stderr"] else None
        return cls(
            omega=np.array(header["axes"]["omega"]),
            k_axes=[np.array(a) for a in header["axes"]["k"]],
            x_axes=[np.array(a) for a in header["axes"]["x"]],
            z=header["z"],
            values=values,
            meta=header.get("meta", {}),
            stderr=stderr,
        )

    def to_csv(self, path, kind="k_slice", index=None):
        """Write a d=1 slice or marginal as CSV with named axis columns.

        ``kind`` is one of ``k_slice`` (W vs omega,x at fixed k), ``omega_slice``
        (W vs k,x at fixed omega) or ``marginal_x`` (W integrated over omega,k).
        """
        if self.d != 1:
            raise ConfigurationError("CSV export is defined for d=1 fields")
        k = self.k_axes[0]
        x = self.x_axes[0]
        if kind == "marginal_x":
            (dw,), (dk,), _ = self.axis_steps()
            mass = self.values.sum(axis=(0, 1)) * dw * dk
            rows = np.column_stack([x, mass])
            np.savetxt(path, rows, delimiter=",",
                       header="x [m],W integrated over omega and k [J-density units]",
                       comments="")
            return
        if kind == "k_slice":
            idx = len(k) // 2 if index is None else index
            sl = self.values[:, idx, :]
            first = self.omega
            name = f"omega [rad/s] (k={k[idx]:.6g} 1/m)"
        elif kind == "omega_slice":
            idx = len(self.omega) // 2 if index is None else index
            sl = self.values[idx, :, :]
            first = k
            name = f"k [1/m] (omega={self.omega[idx]:.6g} rad/s)"
        else:
            raise ConfigurationError(f"unknown CSV slice kind {kind!r}")
        with open(path, "w") as fh:
            fh.write(name + "," + ",".join(f"x={xv:.8g}" for xv in x) + "\n")
            for a, row in zip(first, sl):
                fh.write(f"{a:.10g}," + ",".join(f"{v:.10g}" for v in row) + "\n")


def _write_container(path, header, *arrays):
    header = dict(header)
    header["payloads"] = [list(a.shape) for a in arrays if a is not None]
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint32(_VERSION).tobytes())
        fh.write(np.uint64(len(blob)).tobytes())
        fh.write(blob)
        for a in arrays:
            if a is not None:
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_container(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ConfigurationError(f"{path}: bad magic, not a beamflow container")
        version = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        if version != _VERSION:
            raise ConfigurationError(f"{path}: unsupported container version {version}")
        hlen = int(np.frombuffer(fh.read(8), dtype="<u8")[0])
        header = json.loads(fh.read(hlen).decode())
        arrays = []
        for shape in header.get("payloads", []):
            n = int(np.prod(shape))
            arrays.append(np.frombuffer(fh.read(8 * n), dtype="<f8").copy())
    return header, arrays
