"""Domain-decomposition splitting schemes for stochastic heat equations on the unit square."""

from .grid import Grid2D, ScalarField, WeightedDiffusionOperator, apply, assemble_weighted_diffusion, build_grid, sample_function
from .noise import (KLSpectrum, NoisePath, aggregate_to_coarse, build_spectrum, increment_field, sample_path,
                    truncation_tail)
from .partition import PartitionOfUnity, build_strip_partition, split_weight_apply
from .stepper import ProblemSpec, SolverError, StepperConfig, integrate, lie_step, solve_spd
from .timegrid import TimeGrid
from .experiments import (ErrorTable, FitResult, experiment1_spec, experiment2_spec, fit_order, moment_study,
                          strong_error_studies, strong_error_study)

__version__ = "0.1.0"
