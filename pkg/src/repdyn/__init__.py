"""Representation-learning dynamics on finite Markov reward processes.

Exact linear-algebra tools for studying how self-predictive, reconstruction
and TD objectives shape a linear encoder under gradient flow.
"""
from .dynamics import (
    LOSSES,
    FlowConfig,
    Representation,
    Trajectory,
    flow_step,
    init_representation,
    jacobian_at,
    loss_and_grads,
    representation_from_encoder,
    settle,
    simulate,
    two_timescale_F,
    two_timescale_Psi,
    two_timescale_Vhat,
)
from .errors import *  # noqa: F401,F403
from .generators import (
    ChainRecipe,
    RewardRecipe,
    find_positive_chain,
    make_chain_with_spectrum,
    make_low_rank_reward,
    make_observation,
    make_positive_chain,
)
from .mdp import (
    FactoredSpec,
    MarkovProcess,
    ObservationMap,
    kron_compose,
    validate_process,
    value_exact,
    value_iterative,
)
from .spectral import (
    SpectralSummary,
    Subspace,
    decompose,
    is_invariant_subspace,
    subspace_distance,
    top_k_subspace,
)
from .verifier import CheckReport, run_suite

__version__ = "0.1.0"
