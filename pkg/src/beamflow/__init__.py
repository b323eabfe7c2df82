"""Transport and coherence of acoustic beams in moving random media.

The package implements a narrow-cone transport theory for the phase-space
energy density of sound waves in a weakly fluctuating, slowly moving
medium, the space-time coherence of the transmitted field, and the imaging
estimators built on it: arrival direction, source range, and cross-range
flow velocity.  Every nontrivial formula ships with an independent
numerical route (quadrature, Monte Carlo, or finite differences) and the
``beamflow verify`` subcommand runs the cross-check battery end to end.
"""

from .array import ArraySpec, SpeckleEnsemble, estimate_wigner, synthesize_speckle
from .coherence import (CoherenceParams, coherence_function, coherence_params,
                        wigner_time_harmonic)
from .errors import (BeamflowError, ConfigurationError, DomainError,
                     ModelValidityError, NoDetectionError, NonIdentifiableError,
                     NumericalError, RangeBracketError)
from .imaging import (ClosedFormImager, EstimateReport, GriddedImager,
                      RangeConstants, doa_aperture_saturation, estimate_velocity,
                      image_doa, image_range, localize_source)
from .medium import (MediumStats, TaylorCoeffs, covariance_eval,
                     marginal_covariance, psd_eval, register_cov_model,
                     taylor_coeffs)
from .scenario import Scenario, default_scenario, load_scenario, scenario_from_dict
from .transport import (FlowVelocity, SourceSpec, Wavenumbers, WignerField,
                        dcs_full, dcs_paraxial, decay_rate, kernel_integral,
                        mean_amplitude_decay, propagate_closed_form,
                        propagate_monte_carlo, rte_kernel_identity_check,
                        scattering_mean_free_path,
                        scattering_mean_free_path_paraxial,
                        total_cross_section_paraxial)

__version__ = "0.1.0"
