from deskrl.nets.config import ArchConfig
from deskrl.nets.factory import ActorNet, CriticNet, gaussian_entropy, gaussian_log_prob, sample_actions
from deskrl.nets.qnet import FactorizedQNet

__all__ = [
    "ActorNet",
    "ArchConfig",
    "CriticNet",
    "FactorizedQNet",
    "gaussian_entropy",
    "gaussian_log_prob",
    "sample_actions",
]
