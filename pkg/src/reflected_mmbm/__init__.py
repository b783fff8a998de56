"""Stationary distributions of two-sided reflected Markov-modulated Brownian
motion and of the finite-buffer fluid queues that approximate it."""

from .errors import *  # noqa: F401,F403
from .fluid import (FiniteBufferSolution, alt_solution_nullspace, censored_nu, density_at,
                    finite_buffer_solution, first_passage_set, solve_Gb)
from .kernels import (SolventPair, expm_integral, matrix_exponential, solve_riccati_min_nonneg,
                      solvent_pair, stationary_vector)
from .limit import (MmbmSolution, cross_check, limit_matrices, nu0, stationary_density,
                    time_reversed_density)
from .model import (FluidModel, MmbmModel, build_fluid_approximation, load_model,
                    stationary_phase_distribution, validate_model)
from .simulation import SimConfig, ks_distance, simulate_fluid, simulate_mmbm
from .validation import discretization_oracle, expansion_check, lambda_sweep

__version__ = "0.1.0"
