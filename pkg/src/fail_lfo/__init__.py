"""Forward adversarial imitation learning from observations on finite MDPs."""
from .discriminators import (FiniteClass, LipschitzClass, PiecewiseConstantClass, RkhsClass,
                             best_response, empirical_ipm, lipschitz_witness)
from .environments import (DemoSet, generate_demos, make_abstraction_mdp, make_lipschitz_chain,
                           make_tree_mdp, verify_bisimulation)
from .fail import (TrainReport, fail_star_train, fail_train, ifail_train, model_based_construct,
                   tree_identify_expert)
from .game import FiniteList, GameTranscript, TabularSoftmax, minmax_solve, pg_minmax_solve, utility
from .kernels import available_backends, get_backend
from .lp import LinearProgram, Status, build_lipschitz_lp, solve
from .mdp import (Mdp, MeteredEnv, PolicySequence, Transitions, exact_state_distribution,
                  exact_value, expert_value_functions, performance_difference, rollout)

__version__ = "0.1.0"

__all__ = [
    "FiniteClass", "LipschitzClass", "PiecewiseConstantClass", "RkhsClass", "best_response",
    "empirical_ipm", "lipschitz_witness", "DemoSet", "generate_demos", "make_abstraction_mdp",
    "make_lipschitz_chain", "make_tree_mdp", "verify_bisimulation", "TrainReport", "fail_star_train",
    "fail_train", "ifail_train", "model_based_construct", "tree_identify_expert", "FiniteList",
    "GameTranscript", "TabularSoftmax", "minmax_solve", "pg_minmax_solve", "utility",
    "available_backends", "get_backend", "LinearProgram", "Status", "build_lipschitz_lp", "solve",
    "Mdp", "MeteredEnv", "PolicySequence", "Transitions", "exact_state_distribution", "exact_value",
    "expert_value_functions", "performance_difference", "rollout",
]
