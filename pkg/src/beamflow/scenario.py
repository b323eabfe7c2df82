"""Scenario files: geometry, medium, source, array, flow and solver options.

A scenario is a single YAML tree with SI units throughout; dimensionless
quantities carry explicit names (``sigma_c``, ``kappa``...).  Loading
validates every field and reports the offending key path.  The regime
diagnostics summarize where the scenario sits relative to the asymptotic
assumptions of the theory and emit warnings near their edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
import hashlib
import importlib.resources
import json
import math
import warnings

import numpy as np
import yaml

from .array import ArraySpec
from .errors import ConfigurationError
from .medium import MediumStats
from .transport.kernels import (FlowVelocity, SourceSpec, Wavenumbers,
                                strong_scattering_ratio)

__all__ = ["Scenario", "RegimeDiagnostics", "load_scenario", "scenario_from_dict",
           "default_scenario_path", "default_scenario"]


@dataclass
class RegimeDiagnostics:
    """Dimensionless parameters of the scaling regime at the scenario range."""

    epsilon: float      # wavelength / range
    gamma: float        # wavelength / correlation length
    gamma_s: float      # wavelength / source radius
    eta: float          # correlation time / travel time
    eta_s: float        # pulse duration / travel time (inf for harmonic)
    travel_time: float
    strong_scattering: float   # Sigma_par * L (>> 1 means incoherent)
    range_over_mfp: float      # z / S_par
    stability: float           # T / T_s (0 for harmonic)
    mach: float

    def to_dict(self):
        return {k: (None if v is None else float(v))
                for k, v in self.__dict__.items()}

    def warnings_(self):
        msgs = []
        if self.gamma >= 0.3:
            msgs.append(f"gamma = lambda/ell = {self.gamma:.3g} >= 0.3: the "
                        "narrow-cone expansion is marginal")
        if self.stability >= 0.3:
            msgs.append(f"T/T_s = {self.stability:.3g} >= 0.3: imaging functions "
                        "may not be statistically stable")
        if self.mach > 0.1:
            msgs.append(f"|v|/c_o = {self.mach:.3g} > 0.1: slow-flow asymptotics "
                        "are strained")
        return msgs


@dataclass
class Scenario:
    """Complete description of one propagation-and-imaging experiment."""

    d: int
    medium: MediumStats
    source: SourceSpec
    flow: FlowVelocity
    array: ArraySpec
    k_o: float
    z: float
    grids: dict = dc_field(default_factory=dict)
    solver: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigurationError("d: only cross-range dimensions 1 and 2 are supported")
        if self.k_o <= 0:
            raise ConfigurationError("k0: carrier wavenumber must be positive")
        if self.z <= 0:
            raise ConfigurationError("z: range must be positive")
        if self.flow.d != self.d or self.array.d != self.d:
            raise ConfigurationError("flow.v_perp and array.x_o must have d components")

    @property
    def wavenumbers(self):
        return Wavenumbers(k_o=self.k_o, c_o=self.medium.c_o)

    @property
    def seed(self):
        return int(self.solver.get("seed", 0))

    def diagnostics(self, warn=True):
        lam = 2.0 * math.pi / self.k_o
        travel = self.z / self.medium.c_o
        # a harmonic source with an acquisition window behaves like a long
        # pulse for stability purposes; with no window it is perfectly stable
        eta_s = (self.source.T_s / travel) if self.source.T_s else math.inf
        stability = (self.medium.T_corr / self.source.T_s
                     if self.source.T_s else 0.0)
        ratio = strong_scattering_ratio(self.medium, self.wavenumbers, self.z)
        diag = RegimeDiagnostics(
            epsilon=lam / self.z,
            gamma=lam / self.medium.ell,
            gamma_s=lam / self.source.ell_s,
            eta=self.medium.T_corr / travel,
            eta_s=eta_s,
            travel_time=travel,
            strong_scattering=2.0 * ratio,
            range_over_mfp=ratio,
            stability=stability,
            mach=self.flow.speed / self.medium.c_o,
        )
        if warn:
            for msg in diag.warnings_():
                warnings.warn(msg, stacklevel=2)
        return diag

    def canonical_dict(self):
        return {
            "d": self.d,
            "k0": self.k_o,
            "z": self.z,
            "medium": {
                "c0": self.medium.c_o, "rho0": self.medium.rho_o,
                "sigma_c": self.medium.sigma_c, "sigma_rho": self.medium.sigma_rho,
                "ell": self.medium.ell, "T_corr": self.medium.T_corr,
                "cov_model": self.medium.cov_model,
                "rho_cross": self.medium.rho_cross, "sigma_v": self.medium.sigma_v,
            },
            "source": {
                "ell_s": self.source.ell_s, "T_s": self.source.T_s,
                "sigma": self.source.sigma, "sigma_s": self.source.sigma_s,
            },
            "flow": {"v_perp": self.flow.v_perp.tolist(), "v_z": self.flow.v_z},
            "array": {"x_o": self.array.x_o.tolist(), "kappa": self.array.kappa},
            "grids": self.grids,
            "solver": self.solver,
        }

    def config_hash(self):
        blob = json.dumps(self.canonical_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


_SENTINEL = object()


def _need(tree, path, key, types, default=_SENTINEL):
    node = tree
    for part in path:
        node = node[part]
    if key not in node:
        if default is not _SENTINEL:
            return default
        raise ConfigurationError(f"{'.'.join(path + (key,))}: missing required field")
    val = node[key]
    if types is not None and not isinstance(val, types):
        raise ConfigurationError(
            f"{'.'.join(path + (key,))}: expected {types}, got {type(val).__name__}")
    return val


def scenario_from_dict(tree):
    """Build and validate a Scenario from a parsed configuration tree."""
    if not isinstance(tree, dict):
        raise ConfigurationError("scenario root must be a mapping")
    num = (int, float)
    try:
        d = int(_need(tree, (), "d", int))
        k_o = float(_need(tree, (), "k0", num))
        z = float(_need(tree, (), "z", num))
        med = _need(tree, (), "medium", dict)
        medium = MediumStats(
            c_o=float(_need(tree, ("medium",), "c0", num)),
            rho_o=float(_need(tree, ("medium",), "rho0", num, 1.2)),
            sigma_c=float(_need(tree, ("medium",), "sigma_c", num)),
            sigma_rho=float(_need(tree, ("medium",), "sigma_rho", num, 0.0)),
            ell=float(_need(tree, ("medium",), "ell", num)),
            T_corr=float(_need(tree, ("medium",), "T_corr", num)),
            cov_model=_need(tree, ("medium",), "cov_model", str, "gaussian"),
            rho_cross=float(_need(tree, ("medium",), "rho_cross", num, 0.0)),
            sigma_v=float(_need(tree, ("medium",), "sigma_v", num, 0.0)),
        )
        src = _need(tree, (), "source", dict)
        T_s = src.get("T_s")
        source = SourceSpec(
            ell_s=float(_need(tree, ("source",), "ell_s", num)),
            T_s=None if T_s is None else float(T_s),
            sigma=(None if src.get("sigma") is None else float(src["sigma"])),
            sigma_s=(None if src.get("sigma_s") is None else float(src["sigma_s"])),
            harmonic=src.get("harmonic"),
        )
        fl = _need(tree, (), "flow", dict, {"v_perp": [0.0] * d, "v_z": 0.0})
        v_perp = np.asarray(fl.get("v_perp", [0.0] * d), dtype=float)
        flow = FlowVelocity(v_perp=v_perp, v_z=float(fl.get("v_z", 0.0)))
        arr = _need(tree, (), "array", dict)
        array = ArraySpec(
            x_o=np.asarray(_need(tree, ("array",), "x_o", (list, int, float)),
                           dtype=float),
            kappa=float(_need(tree, ("array",), "kappa", num)),
        )
        scenario = Scenario(
            d=d, medium=medium, source=source, flow=flow, array=array,
            k_o=k_o, z=z,
            grids=dict(tree.get("grids", {})),
            solver=dict(tree.get("solver", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid scenario: {exc}") from exc
    if medium.sigma_v:
        warnings.warn(
            "sigma_v is accepted but unused: velocity-fluctuation statistics do "
            "not enter the implemented formulas (negligible in this regime)",
            stacklevel=2)
    scenario.flow.warn_if_fast(medium.c_o)
    return scenario


def load_scenario(path):
    """Parse and validate a YAML scenario file."""
    try:
        with open(path) as fh:
            tree = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigurationError(f"{path}: YAML parse error{loc}: {exc}") from exc
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return scenario_from_dict(tree)


def default_scenario_path():
    return importlib.resources.files("beamflow").joinpath("data/default_scenario.yaml")


def default_scenario():
    return load_scenario(default_scenario_path())
