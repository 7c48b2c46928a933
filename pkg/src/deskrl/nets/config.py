"""Architecture selection and sizing, fed from the experiment config."""

from __future__ import annotations

from dataclasses import dataclass, field

from deskrl.errors import ConfigError

KINDS = ("vanilla", "multihead", "softmod", "paco", "moore", "care")


@dataclass
class ArchConfig:
    kind: str = "vanilla"
    num_tasks: int = 10
    raw_width: int = 16
    act_dim: int = 2
    hidden: tuple = (64, 64)  # network.mlp.units
    activation: str = "elu"
    multi_head: bool = False  # MH prefix: one output head per task

    # soft-modularization
    softmod_experts: int = 2  # soft_network.num_experts
    softmod_layers: int = 2  # soft_network.num_layer
    softmod_d: int = 64
    state_encoder_hidden: tuple = (64,)  # state_encoder.units
    softmod_route_raw: bool = False  # route from raw obs instead of embedded state

    # shared task-encoder knobs (paco / moore / softmod)
    task_encoder_hidden: tuple = ()  # task_encoder.units
    task_encoder_bias: bool = False

    # paco
    paco_k: int = 5  # paco.K compositional vectors
    paco_d: int = 32  # paco.D hidden width of the composed net
    paco_layers: int = 2  # paco.num_layers

    # moore
    moore_experts: int = 4  # moore.num_experts
    moore_layers: int = 1  # moore.num_layers
    moore_d: int = 64  # moore.D
    moore_agg: tuple = ("linear", "tanh")  # moore.agg_activation (before, after)

    # care
    care_encoders: int = 4  # encoder.num_experts
    care_encoder_layers: int = 2  # encoder.num_layers
    care_d: int = 50  # encoder.D
    care_temperature: float = 1.0  # encoder.temperature
    attention_hidden: tuple = (50,)  # attention.units
    context_hidden: tuple = (50, 50)  # context_encoder.units
    context_bias: bool = True  # context_encoder.bias

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown architecture kind: {self.kind}")
        if self.kind == "multihead":
            # "multihead" is the vanilla trunk with per-task output heads
            self.multi_head = True
        if self.kind == "paco" and self.multi_head:
            raise ConfigError("paco composes full per-task networks; MH heads do not apply")
        if self.care_temperature <= 0.0:
            raise ConfigError("attention temperature must be positive")

    @property
    def obs_width(self) -> int:
        return self.raw_width + self.num_tasks
