"""Shared trainer plumbing: arch building, numpy-side Gaussian math, schedules."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from deskrl.nets.config import ArchConfig
from deskrl.tasks.spec import ACT_DIM, RAW_OBS_WIDTH

if TYPE_CHECKING:  # avoids a circular import through the harness package
    from deskrl.harness.config import ExperimentConfig


def make_arch(cfg: "ExperimentConfig", num_tasks: int) -> ArchConfig:
    return ArchConfig(
        kind=cfg.architecture,
        num_tasks=num_tasks,
        raw_width=RAW_OBS_WIDTH,
        act_dim=ACT_DIM,
        hidden=tuple(cfg.hidden_units),
        activation=cfg.activation,
        multi_head=cfg.multi_head,
        softmod_experts=cfg.softmod_num_experts,
        softmod_layers=cfg.softmod_num_layer,
        softmod_d=cfg.hidden_units[-1] if cfg.hidden_units else 64,
        state_encoder_hidden=tuple(cfg.state_encoder_units),
        softmod_route_raw=cfg.softmod_route_raw,
        task_encoder_hidden=tuple(cfg.task_encoder_units),
        task_encoder_bias=cfg.task_encoder_bias,
        paco_k=cfg.paco_k,
        paco_d=cfg.paco_d,
        paco_layers=cfg.paco_num_layers,
        moore_experts=cfg.moore_num_experts,
        moore_layers=cfg.moore_num_layers,
        moore_d=cfg.moore_d,
        moore_agg=tuple(cfg.moore_agg_activation),
        care_encoders=cfg.encoder_num_experts,
        care_encoder_layers=cfg.encoder_num_layers,
        care_d=cfg.encoder_d,
        care_temperature=cfg.encoder_temperature,
        attention_hidden=tuple(cfg.attention_units),
        context_hidden=tuple(cfg.context_encoder_units),
        context_bias=cfg.context_encoder_bias,
    )


def gaussian_logpdf(actions: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Diagonal Gaussian log-density, summed over action dims (numpy side)."""
    std = np.exp(log_std)
    z = (actions - mean) / std
    return (-0.5 * z * z - log_std - 0.5 * np.log(2.0 * np.pi)).sum(axis=-1)


def standardize(x: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    return (x - x.mean()) / (x.std() + eps)


class EpsilonSchedule:
    """Linear decay from start_e to end_e over exploration_fraction * total steps."""

    def __init__(self, start_e: float, end_e: float, exploration_fraction: float,
                 total_steps: int, decay: bool = True):
        self.start_e = start_e
        self.end_e = end_e
        self.decay_steps = max(exploration_fraction * total_steps, 1.0)
        self.decay = decay

    def value(self, step: int) -> float:
        if not self.decay:
            return self.start_e
        frac = min(step / self.decay_steps, 1.0)
        return self.start_e + (self.end_e - self.start_e) * frac
