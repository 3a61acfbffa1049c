"""Locating a circular hole in a plate from ultrasonic waveforms.

Forward models, waveform misfits, an unscented-Kalman-filter local
optimiser, its simulated-annealing hybrid, particle swarm optimisation,
Gaussian-process surrogates and an experiment harness.
"""
from .errors import (AnomalyFwiError, ConfigError, DegenerateInputError, DegenerateInputWarning,
                     ExtrapolationWarning, IllConditionedWarning, InvalidArgumentError,
                     NumericalFailure, OutOfRangeError, StabilityError, StaleModelError)
from .forward import (AnomalyParams, CallCounter, ForwardConfig, Geometry, Medium, MisfitEvaluator,
                      analytic_forward, default_geometry, evaluate_misfit, fd2d_forward, forward,
                      stability_check)
from .pso import PsoConfig, PsoResult, pso_optimize
from .signals import (SeismogramSet, TimeSeries, WaveletSpec, align_amplitude,
                      estimate_source_signature, misfit_receiver, misfit_total, processed_misfits,
                      resample_linear, ricker, ricker_wavelet, window_truncate)
from .uhsa import (SaConfig, acceptance_probability, cool, derive_R_smin, propose_uniform,
                   temperature_for_acceptance, uhsa_optimize)
from .ukf import GaussianState, UkfConfig, sigma_points, ukf_run, ukf_step, ukf_update

__version__ = "0.1.0"
