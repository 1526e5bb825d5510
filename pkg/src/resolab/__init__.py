"""resolab: resonance positions/widths for weakly perturbed planar magnetic
spin Hamiltonians, predicted from closed-form asymptotics and cross-checked
by direct lattice simulation."""

__version__ = "0.1.0"

from .errors import AssumptionError, ConfigError, DomainError
from .fields import (FieldSpec, FluxParams, PotentialSpec, RadialProfile,
                     check_decay, flux, flux_params, rational_field,
                     rational_potential)
from .gauge import GaugeData, superpotential, vector_potential, weighted_norm
from .zeromodes import (AngularState, ModeSum, PerturbationData, VirtualStates,
                        ZeroModeBasis, build_virtual_states, build_zero_modes,
                        perturbation_data, project_potential, radial_moment,
                        state_overlap, state_quadratic_form)
from .resonance import (ModelConstants, PredictionContext, RegimeTag,
                        ResonancePrediction, anomalous_moment_predict,
                        degenerate_profiles, determine_regime, eta_sigma,
                        eta_sigma_tilde, f_profile, g_profile,
                        integer_profiles, predict, predict_from_context,
                        prepare, solve_position, zeta_omega)
from .lattice import (Grid, LatticeOperator, SchurBlocks, assemble,
                      dump_operator, enclosed_flux, extract_F, restrict,
                      schur_inverse)
from .radial import (ChannelOperator, RadialGrid, SectorOperator,
                     assemble_channels, assemble_sector, radial_grid,
                     restrict_radial, sector_potential, state_channels)
from .dynamics import (FitResult, SpectralDensity, SurvivalSeries,
                       decay_rate, density_csv, evolve, fit_lorentzian,
                       scaling_regression, spectral_density, survival_csv,
                       survival_from_eigenpairs, width_from_resolvent)
from .cli import RunConfig, RunReport, parse_config, run

__all__ = [
    "AssumptionError", "ConfigError", "DomainError",
    "FieldSpec", "FluxParams", "PotentialSpec", "RadialProfile",
    "check_decay", "flux", "flux_params", "rational_field", "rational_potential",
    "GaugeData", "superpotential", "vector_potential", "weighted_norm",
    "AngularState", "ModeSum", "PerturbationData", "VirtualStates",
    "ZeroModeBasis", "build_virtual_states", "build_zero_modes",
    "perturbation_data", "project_potential", "radial_moment",
    "state_overlap", "state_quadratic_form",
    "ModelConstants", "PredictionContext", "RegimeTag", "ResonancePrediction",
    "anomalous_moment_predict", "degenerate_profiles", "determine_regime",
    "eta_sigma", "eta_sigma_tilde", "f_profile", "g_profile",
    "integer_profiles", "predict", "predict_from_context", "prepare",
    "solve_position", "zeta_omega",
    "Grid", "LatticeOperator", "SchurBlocks", "assemble", "dump_operator",
    "enclosed_flux", "extract_F", "restrict", "schur_inverse",
    "ChannelOperator", "RadialGrid", "SectorOperator", "assemble_channels",
    "assemble_sector", "radial_grid", "restrict_radial", "sector_potential",
    "state_channels",
    "FitResult", "SpectralDensity", "SurvivalSeries", "decay_rate",
    "density_csv", "evolve", "fit_lorentzian", "scaling_regression",
    "spectral_density", "survival_csv", "survival_from_eigenpairs",
    "width_from_resolvent",
    "RunConfig", "RunReport", "parse_config", "run",
]
