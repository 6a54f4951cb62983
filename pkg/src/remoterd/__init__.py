"""Finite-blocklength analysis of indirect quadratic lossy source coding.

The observation X is compressed so that a hidden source S = phi(X) + W can
be reconstructed under squared error; the surrogate distortion
(phi(x) - z)^2 + Var[W] turns the indirect problem into a direct one.  The
package computes the rate-distortion function and its joint variant with a
second observation-reconstruction constraint, tilted information densities
and dispersions, normal-approximation certificates, two-term codebook-size
expansions, one-shot achievability bounds, and random-code simulations.
"""

from .errors import (BudgetExceeded, ConfigError, Degenerate, DegenerateNoise,
                     DomainError, Infeasible, LengthMismatch, MissingDxTable,
                     MomentViolation, NotConverged, OutOfRange, RemoteRdError,
                     SupportOverflow, UnsupportedModel, ZeroMarginal)
from .model import (Alphabet, ModelMoments, NoiseSpec, SourceModel,
                    block_distortion, d_min_max, load_model, model_from_dict,
                    surrogate_distortion, validate_model)
from .rd import (ConditionalKernel, RDCurve, RDSolution, ba_fixed_multiplier,
                 ba_joint, degenerate_joint_completion, generalized_rd,
                 rd_curve, solve_for_distortion, solve_joint_for_distortions)
from .tilted import (DispersionReport, TiltedContext, dispersion,
                     info_density, lambda_capital, tilted_all_direct,
                     tilted_direct, tilted_direct_joint, tilted_indirect,
                     tilted_indirect_joint)
from .gaussian import (BEStats, C0_DEFAULT, SecondOrderParams, be_stats,
                       delta_s, excess_prob_gaussian, q_func, q_inv,
                       second_order_log_m, second_order_terms, theta_tilde,
                       zeta)
from .bounds import (BoundEstimate, DistortionDistribution, RelaxedBreakdown,
                     distortion_distribution, g_exponent_check, g_prob,
                     oneshot_bound, oneshot_joint_bound,
                     oneshot_relaxed_bound, oneshot_relaxed_breakdown,
                     pi_exact, pi_mc)
from .simulate import (Codebook, SimResult, StreamedCodebook, encode,
                       ensemble_excess_exact, estimate_excess,
                       estimate_excess_ensemble, estimate_excess_joint,
                       sample_codebook, streamed_codebook)

__version__ = "0.1.0"
