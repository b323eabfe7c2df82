"""Transport of the phase-space energy density in the random medium."""

from .field import WignerField
from .kernels import (
    FlowVelocity,
    SourceSpec,
    Wavenumbers,
    dcs_full,
    dcs_paraxial,
    decay_rate,
    kernel_integral,
    mean_amplitude_decay,
    phase_rate,
    rte_kernel_identity_check,
    scattering_mean_free_path,
    scattering_mean_free_path_paraxial,
    strong_scattering_ratio,
    total_cross_section_paraxial,
)
from .closed_form import (
    TransportGrids,
    design_grids,
    fourier_grid_transform,
    initial_mass,
    initial_wigner,
    propagate_closed_form,
)
from .monte_carlo import MonteCarloResult, propagate_monte_carlo

__all__ = [
    "WignerField", "FlowVelocity", "SourceSpec", "Wavenumbers",
    "dcs_full", "dcs_paraxial", "decay_rate", "kernel_integral",
    "mean_amplitude_decay", "phase_rate", "rte_kernel_identity_check",
    "scattering_mean_free_path", "scattering_mean_free_path_paraxial",
    "strong_scattering_ratio", "total_cross_section_paraxial",
    "TransportGrids", "design_grids", "fourier_grid_transform",
    "initial_mass", "initial_wigner", "propagate_closed_form",
    "MonteCarloResult", "propagate_monte_carlo",
]
