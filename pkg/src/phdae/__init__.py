"""Identification of linear port-Hamiltonian differential-algebraic models
from noisy input-output data, with a structure-preserving parametrization,
an implicit backward-Euler/Newton solver, and adjoint gradients through
the solver."""

from .errors import (
    DegenerateSignal,
    DimensionMismatch,
    InsufficientData,
    InvalidParameter,
    NoConvergence,
    ParseError,
    PhDaeError,
    SingularAlgebraicBlock,
    SingularJacobian,
    SingularMatrix,
    SolverFailure,
)
from .gradients import (
    Gradient,
    finite_difference_gradient,
    subsection_gradient,
)
from .model import (
    PhDaeModel,
    PhDaeParams,
    StructuralMask,
    assemble,
    initialize_params,
    load_model,
    save_model,
    unflatten,
)
from .signals import Dataset, MultisineSpec, add_noise, multisine, read_csv, write_csv
from .solver import (
    SolverConfig,
    Trajectory,
    consistent_initialize,
    newton_step,
    residual,
    residual_jacobian,
    simulate,
)
from .training import (
    LinearEncoder,
    Subsection,
    TrainConfig,
    TrainState,
    adam_step,
    evaluate_nrms,
    sample_batch,
    subsection_loss,
    train,
)

__version__ = "0.1.0"
