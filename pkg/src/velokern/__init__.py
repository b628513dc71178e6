"""Structured kernel multi-step predictors for velocity forms of nonlinear
input-output systems."""

from .exceptions import (
    ConfigError, DataError, InvalidInputError, NumericalError,
    PreconditionError, SimulationDivergedError, SizeOverflowError,
    UnsupportedLagError, VelokernError,
)
from .signals import (
    DataMatrices, DeltaTrajectory, Dims, SchedulingSequence, Trajectory,
    build_data_matrices, build_scheduling, diff_signal, hankel,
    read_trajectory_csv, reconstruct_primal, sum_signal, write_trajectory_csv,
)
from .velocity import NLSystem, example_system, ftc_coefficients, simulate_primal
from .structure import BasisSet, ThetaParams, build_psi_product, build_theta
from .kernels import RBF, Linear, OnePlus, Product, Sum, effective_gram, parse_kernel
from .regression import (
    FittedPredictor, UnstructuredPredictor, fit, implicit_representation,
    iterative_w_predict, load_model, predict, predict_columns, save_model,
    unstructured_fit,
)
from .lpv import lpv_hankel_representation
from .hyperopt import GridSpec, grid_search
from .estimators import (
    StructuredKernelRegressor, UnstructuredKernelRegressor, make_windows,
)

__version__ = "0.1.0"
