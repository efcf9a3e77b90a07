"""Data-driven predictive control in LQ (gamma) coordinates, with variance-matched regularization."""
from .kernels import BACKEND
from .lti import DataSet, SystemModel, benchmark_system, default_system, generate_dataset, simulate
from .hankel import build_bundle, lq_decompose, factors_from_data
from .controllers import BoxConstraints, ControlWeights, StepProblem
from .tuning import TuneConfig, tune_beta, oracle_sweep
from .closed_loop import ClosedLoopConfig, run_closed_loop, performance_indices, reference_signal

__version__ = "0.1.0"
