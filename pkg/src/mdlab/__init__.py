"""Prior-free online mechanism design: robust stage-game solvers, calibrated forecasting, mechanisms, learners and a replay engine."""
from .engine import Transcript, agent_regret, principal_regret, regret_report, run, regret_bound
from .game import Game, Prior, alpha, beta, cost_of_robustness, robust_policy
from .info import InfoStructure, cost_of_info_robustness, info_robust_policy, worst_case_alpha, best_case_beta
from .learners import LearnerSpec
from .mechanisms import MechanismSpec

__version__ = "0.1.0"
