"""Simulation and verification lab for SDEs driven by additive Gaussian Volterra noise."""

__version__ = "0.1.0"

from .besov import (BesovReport, DensityEstimate, besov_exponent,
                    besov_exponent_from_samples, besov_lag_profile,
                    besov_seminorm, compare_to_theorem, estimate_density,
                    make_besov_report)
from .kernels import (ConditionFit, KernelSpec, covariance,
                      covariance_quadrature, eval_kernel, fit_condition_cc1,
                      fit_condition_cc2, increment_variance, tail_variance,
                      window_variance_quadrature, write_kernel_table)
from .paths import (PathEnsemble, TimeGrid, covariance_matrix,
                    empirical_covariance, exact_sample,
                    kernel_discretized_sample, mc_increment_fit,
                    tail_components)
from .sde import (DriftSpec, PathDriftSpec, SolutionEnsemble, VProcessSpec,
                  auxiliary_process, constant_drift, euler_solve,
                  holder_power_drift, lacunary_cosine_drift,
                  lacunary_cosine_path_drift, path_dependent_solve,
                  time_modulated_drift, v_process_spec, xy_gap_moment,
                  zero_drift)
from .smoothing import (SlopeFit, SmoothingReport, TestFunctionSpec,
                        TheoremExponents, cosine_test_function,
                        diff_gaussian_l1, estimate_ae, estimate_ae_independent,
                        estimate_pe, finite_difference,
                        gaussian_window_density, holder_bump_test_function,
                        scaling_regression, smoothing_bound_ratio,
                        theorem_exponents)

__all__ = [name for name in dir() if not name.startswith("_")]
