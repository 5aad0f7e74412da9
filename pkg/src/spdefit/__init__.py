"""spdefit: spectral simulation and trajectory-fitting estimation for
linear diagonalizable parabolic SPDEs.

The toolkit simulates the first N Fourier modes of the solution (decoupled
Ornstein-Uhlenbeck processes, exact transitions), computes the closed-form
least-squares estimator of the drift coefficient from their path functionals,
and verifies its consistency and asymptotic normality by Monte Carlo against
closed-form moment oracles.
"""

from ._version import __version__
from .model import (SpdeModel, ConditionReport, AssumptionReport,
                    SingularNoiseError, fractional_heat_model,
                    lower_order_model, mu, lam, noise_factor, noise_scale,
                    check_assumptions, check_divergence, model_from_config,
                    model_to_config, DIVERGES, CONVERGES, UNDETERMINED)
from .simulate import (ModePath, ModeFunctionals, RefinementCheck, ou_step,
                       step_policy, simulate_mode, functionals, refine_check)
from .estimator import (TfeResult, ResidualTerm, DegenerateDenominatorError,
                        tfe, objective, residual_term, bias_scale_exact,
                        bias_scale_expansion, bias_scale_leading)
from .oracle import (MomentPrediction, MomentTable, gaussian_even_moment,
                     exact_E_xi_u2, exact_E_Z, exact_Var_Z, exact_E_A,
                     exact_Var_A, leading_moments, exact_moments, moment_ode,
                     oracle_check_rows)
from .seeding import derive_seed, mode_stream
from .stats import KSResult, NormalitySummary, ks_distance, normality_summary
from .experiment import (ExperimentConfig, ReplicationRecord,
                         ExperimentResult, run_experiment, run_replication,
                         default_checkpoints)

__all__ = [name for name in dir() if not name.startswith("_")]
