from deskrl.algo.buffers import ReplayBuffer, RolloutBuffer
from deskrl.algo.common import EpsilonSchedule
from deskrl.algo.gae import compute_gae
from deskrl.algo.grpo import episode_segments, grpo_advantage
from deskrl.algo.normalizer import PerTaskNormalizer
from deskrl.algo.ppo import OnPolicyTrainer
from deskrl.algo.pqn import (
    PQNTrainer,
    bang_off_bang_decode,
    bang_off_bang_encode,
    epsilon_greedy,
    pqn_factorized_value,
    pqn_targets,
)
from deskrl.algo.sac import DisentangledAlpha, SACTrainer

__all__ = [
    "DisentangledAlpha",
    "EpsilonSchedule",
    "OnPolicyTrainer",
    "PQNTrainer",
    "PerTaskNormalizer",
    "ReplayBuffer",
    "RolloutBuffer",
    "SACTrainer",
    "bang_off_bang_decode",
    "bang_off_bang_encode",
    "compute_gae",
    "episode_segments",
    "epsilon_greedy",
    "grpo_advantage",
    "pqn_factorized_value",
    "pqn_targets",
]
