"""Directed polymers in a spatially long-range-correlated environment.

Library + CLI for the discrete polymer partition function under intermediate
disorder, its chaos expansion, the matching fractional-noise Wiener calculus,
and a reproducible Monte Carlo harness that turns the scaling limits into
desk-scale pass/fail checks.
"""

from .env_field import (CovarianceModel, EnvParams, EnvironmentField,
                        calibrate_delta, covariance_model, exact_gamma,
                        gamma_table, lambda_coefficient,
                        limit_spectral_density, psi_coeff, sample_environment,
                        spectral_density)
from .fractional_chaos import (ChaosMoment, FracFieldSampler, RectFn,
                               TensorKernel, chaos_second_moment, contract,
                               hermite, inner_H, kernel_K,
                               multiple_integral_sample, sample_field,
                               theta_k, verify_product_formula)
from .harness import (ExperimentConfig, TestReport, clt_check, env_check,
                      identity_suite, partition_limit_check, run_replicas,
                      tightness_check, ustat_limit_check,
                      variance_asymptotics)
from .partition import (PartitionParams, PartitionSurface, TiltedField,
                        chaos_term, chaos_terms, dp_exp_partition,
                        dp_modified_partition, tilt_environment,
                        two_walk_second_moment)
from .ustat import (UStatSpec, WalkDensity, f_bar, ustat_eval,
                    ustat_exact_variance, ustat_scaled)
from .walk_kernel import (nearest_parity_int, p_scaled, pbar_k, walk_p,
                          walk_pk)

__version__ = "0.1.0"
