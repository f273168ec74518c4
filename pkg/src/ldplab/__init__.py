"""Numerical laboratory for spatial averages of 1D stochastic heat and wave
equations: simulation, cumulant generating function estimation, rate
functions, and statistical verification of the supporting bounds."""

__version__ = "0.1.0"

from .grid import ConfigurationError, GridConfig, required_pad, stability_check
from .kernels import (CovarianceKernel, GreensFunction, KernelError, WHITE,
                      GAUSS, STRETCHED15, SELFCONV, kernel_by_name, kernel_l1,
                      greens_eval, greens_mass, greens_selfconv,
                      indicator_smoothed, window_cross_moment)
from .noise import (ColoredSampler, EmbeddingError, NoiseSlice,
                    StatisticsError, StreamKey, build_colored_sampler,
                    sample_colored_slice, sample_white_slice)
from .solver import (EquationSpec, FieldState, NumericalError, SigmaSpec,
                     advance_paths, initial_state, mean_function,
                     sigma_by_name, sigma_const, sigma_cosdamp, sigma_tanh,
                     simulate_path, step_heat, step_wave)
from .functionals import (AverageSample, TimePoints, multi_time_vector,
                          spatial_average, window_difference)
from .montecarlo import (CgfEstimate, EnsembleConfig, ExpMomentAccumulator,
                         GFunctionalEstimate, MergeError, estimate_cgf,
                         estimate_gfunctional, exponential_tightness_check,
                         log_mean_exp, merge, run_ensemble,
                         run_window_samples)
from .ldp import (CgfTable, ConcaveTestFunction, ConstructionError,
                  GaussianReference, RateFunctionGrid, biconjugate,
                  build_cgf_table, convexify, convexity_defect, duality_gap,
                  extrapolate_cgf, extrapolate_point, gaussian_reference,
                  legendre_transform, make_test_function, pointwise_min,
                  shifted)
from .diagnostics import (DiagnosticsReport, DomainError, QvBound,
                          compute_schied_constant, covariance_decay_probe,
                          covariance_oracle, gfunctional_ladder,
                          holder_tail_check,
                          increment_scaling_check, qv_bound,
                          qv_bound_difference, shift_invariance_test,
                          subadditivity_check, tail_bound_check)
