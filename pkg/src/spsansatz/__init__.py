"""Variational ground states and random-state statistics for superpositions of product states."""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConfigError,
    ConvergenceError,
    DimensionError,
    NullStateError,
    NumericalDegeneracyError,
    SpsError,
)
from .gradients import GradientVector, energy_and_gradient, grad_energy, grad_expectation_x, grad_norm
from .hamiltonian import (
    CouplingGraph,
    LongRangeSpec,
    RandomGraphSpec,
    build_chain_1d,
    build_cubic_3d,
    build_long_range,
    build_random_graph,
    energy,
    energy_per_site,
)
from .observables import (
    Bipartition,
    expect_sigma_x,
    expect_sigma_z,
    expect_zz,
    ferro_correlator,
    renyi2_entropy,
)
from .optimizer import AdamWConfig, RunRecord, TrainSchedule, run_ground_state_search
from .state import ParameterDomain, SpsState, compute_overlap_matrix, norm, sample_random_sps
