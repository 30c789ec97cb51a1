"""Approximate message passing with nearest-neighbor sparsity pattern learning."""

from .amp import AmpState, SolveResult, Status, factor_update, init_state, iterate_once, solve, variable_update
from .bench import (
    BlockSparseSpec,
    ClusterImageSpec,
    TrialRecord,
    generate_block_sparse,
    generate_cluster_image,
    make_problem,
    nmse_db,
    pattern_match,
    run_sweep,
)
from .denoiser import PosteriorMoments, posterior, posterior_batch
from .estimator import AMPNNSPLRegressor
from .learning import (
    NeighborTopology,
    build_topology,
    init_hyperparams,
    update_lambda,
    update_noise,
    update_slab,
)
from .model import (
    LAMBDA_EPS,
    VAR_FLOOR,
    Hyperparams,
    MeasurementModel,
    SolverConfig,
    TopologyKind,
    generate_matrix,
    make_rng,
    measure,
)

__version__ = "0.1.0"
