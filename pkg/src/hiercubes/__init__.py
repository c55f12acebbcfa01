"""Exact thermodynamics of hierarchical mixtures of non-overlapping dyadic cubes."""

__version__ = "0.1.0"

from .core import (ActivityModel, ConstantEnergyModel, EnergyModel, LatticeParams, TableModel,
                   activity, block_volume, log_activity, stability_report, theta_norm)
from .density import (DensityProfile, densities, equation_of_state, finite_volume_densities,
                      invert_densities)
from .entropy import (bernoulli_entropy, chemical_potentials, entropy, exact_multicanonical_logcount,
                      free_energy, hat_entropy, legendre_objective, phi_series)
from .errors import *  # noqa: F401,F403
from .phase import (PhaseReport, absence_certificate, c_d, classify, classify_constant_energy,
                    first_order_report, fixed_points, lambda_d, mu_c_scan, sum_uj_certificate,
                    v_iteration, zeta_solver)
from .pressure import (EffectiveActivities, PressureResult, bernoulli_pressure, effective_activities,
                       log_partition_function, pressure)
from .sampler import Configuration, empirical_densities, fractal_export, sample_configuration, sample_stats
