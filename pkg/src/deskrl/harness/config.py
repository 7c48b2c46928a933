"""Experiment configuration: flat key=value files using the benchmark's knob names.

The file format is one ``key = value`` pair per line (``#`` comments allowed).
Keys follow the hyperparameter tables verbatim (``e_clip``, ``q_lambda``,
``binsPerDim``, ``network.mlp.units``, ...); values are parsed as bools, ints,
floats, ``[a,b,c]`` lists, or strings. Unknown keys are rejected. Scheme knobs
that would collide with the discount factor (FAMO's ``gamma``) live under a
``famo.`` prefix; likewise ``cagrad.c``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields

from deskrl.errors import ConfigError

ALGORITHMS = ("ppo", "grpo", "sac", "pqn")
ARCHITECTURES = ("vanilla", "multihead", "softmod", "paco", "moore", "care")
SCHEMES = ("none", "pcgrad", "cagrad", "famo")
SUITES = ("DeskMT10", "DeskMT10-rand", "DeskPK5-easy", "DeskPK5-hard", "DeskPK5-hard-cl")


@dataclass
class ExperimentConfig:
    # run identity
    suite: str = "DeskMT10-rand"
    algorithm: str = "ppo"
    architecture: str = "vanilla"
    scheme: str = "none"
    seed: int = 0

    # scale
    num_envs: int = 256
    max_epochs: int = 100
    episode_length: int = 0  # 0 = suite default (episodeLength)
    workers: int = 1

    # shared on-policy knobs
    horizon: int = 32
    minibatch_size: int = 4096
    mini_epochs: int = 5
    gamma: float = 0.99
    e_clip: float = 0.2
    entropy_coef: float = 0.005
    learning_rate: float = 5e-4
    lr_schedule: str = "fixed"  # fixed | adaptive
    kl_threshold: float = 0.008
    tau: float = 0.95  # advantage estimation lambda
    normalize_value: bool = True
    normalize_input: bool = True
    separate_networks: bool = True  # network.separate
    hidden_units: tuple = (64, 64)  # network.mlp.units
    activation: str = "elu"  # network.mlp.activation
    max_grad_norm: float = 10.0

    # architecture-specific (desk-scaled defaults)
    care_units: tuple = (64, 64)  # care.units (post-encoder trunk, unused when attention stack set)
    encoder_num_experts: int = 4  # encoder.num_experts
    encoder_num_layers: int = 2  # encoder.num_layers
    encoder_d: int = 50  # encoder.D
    encoder_temperature: float = 1.0  # encoder.temperature
    attention_units: tuple = (50,)  # attention.units
    context_encoder_units: tuple = (50, 50)  # context_encoder.units
    context_encoder_bias: bool = True  # context_encoder.bias
    moore_num_experts: int = 4  # moore.num_experts
    moore_num_layers: int = 1  # moore.num_layers
    moore_d: int = 64  # moore.D
    moore_agg_activation: tuple = ("linear", "tanh")  # moore.agg_activation
    task_encoder_units: tuple = ()  # task_encoder.units
    task_encoder_bias: bool = False  # task_encoder.bias
    task_encoder_init: str = "orthogonal"  # task_encoder.compositional_initializer
    task_encoder_activation: str = "softmax"  # task_encoder.activation
    paco_k: int = 5  # paco.K
    paco_d: int = 32  # paco.D
    paco_num_layers: int = 2  # paco.num_layers
    softmod_num_experts: int = 2  # soft_network.num_experts
    softmod_num_layer: int = 2  # soft_network.num_layer
    softmod_route_raw: bool = False  # soft_network.route_raw
    state_encoder_units: tuple = (64,)  # state_encoder.units
    multi_head: bool = False  # multi_head ("MH" prefix)

    # scheme knobs
    project_actor_gradient: bool = False
    project_critic_gradient: bool = True
    cagrad_c: float = 0.4  # cagrad.c
    famo_gamma: float = 1e-3  # famo.gamma
    famo_w_lr: float = 1e-3  # famo.w_lr
    famo_epsilon: float = 1e-2  # famo.epsilon
    famo_norm_w_grad: bool = True  # famo.norm_w_grad

    # PQN
    q_lambda: float = 0.5
    num_minibatches: int = 4
    bins_per_dim: int = 3  # binsPerDim
    action_scale: float = 1.0  # actionScale
    start_e: float = 1.0
    end_e: float = 0.005
    decay_epsilon: bool = True
    exploration_fraction: float = 0.2
    critic_lr: float = 3e-4
    anneal_lr: bool = True
    q_residual_network: bool = True  # q.residual_network
    q_num_blocks: int = 2  # q.num_blocks
    q_d: int = 128  # q.D
    q_norm_first_layer: bool = False  # q.norm_first_layer

    # SAC
    gradient_steps_per_itr: int = 16
    learnable_temperature: bool = True
    use_disentangled_alpha: bool = True
    init_alpha: float = 1.0
    alpha_lr: float = 5e-3
    critic_tau: float = 0.01
    batch_size: int = 2048
    nstep: int = 4
    grad_norm: float = 0.5
    replay_buffer_size: int = 200_000
    target_entropy_coef: float = 1.0

    # diagnostics / outputs
    log_cosine: bool = False
    log_episodes: bool = True

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ConfigError(f"unknown suite: {self.suite}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm: {self.algorithm}")
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture: {self.architecture}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme: {self.scheme}")
        if self.lr_schedule not in ("fixed", "adaptive"):
            raise ConfigError(f"unknown lr_schedule: {self.lr_schedule}")
        if self.num_envs < 1 or self.max_epochs < 0:
            raise ConfigError("num_envs must be >= 1 and max_epochs >= 0")
        if self.algorithm == "grpo" and self.scheme != "none" and self.project_critic_gradient \
                and not self.project_actor_gradient:
            raise ConfigError("grpo has no critic; route the scheme to the actor")

    @property
    def num_tasks(self) -> int:
        return 10 if self.suite.startswith("DeskMT10") else 5


# config-file key (verbatim from the tables) -> dataclass field
KEY_MAP = {
    "suite": "suite",
    "algorithm": "algorithm",
    "architecture": "architecture",
    "scheme": "scheme",
    "seed": "seed",
    "num_envs": "num_envs",
    "max_epochs": "max_epochs",
    "episodeLength": "episode_length",
    "workers": "workers",
    "horizon": "horizon",
    "minibatch_size": "minibatch_size",
    "mini_epochs": "mini_epochs",
    "gamma": "gamma",
    "e_clip": "e_clip",
    "entropy_coef": "entropy_coef",
    "learning_rate": "learning_rate",
    "lr_schedule": "lr_schedule",
    "kl_threshold": "kl_threshold",
    "tau": "tau",
    "normalize_value": "normalize_value",
    "normalize_input": "normalize_input",
    "network.separate": "separate_networks",
    "network.mlp.units": "hidden_units",
    "network.mlp.activation": "activation",
    "max_grad_norm": "max_grad_norm",
    "care.units": "care_units",
    "encoder.num_experts": "encoder_num_experts",
    "encoder.num_layers": "encoder_num_layers",
    "encoder.D": "encoder_d",
    "encoder.temperature": "encoder_temperature",
    "attention.units": "attention_units",
    "context_encoder.units": "context_encoder_units",
    "context_encoder.bias": "context_encoder_bias",
    "moore.num_experts": "moore_num_experts",
    "moore.num_layers": "moore_num_layers",
    "moore.D": "moore_d",
    "moore.agg_activation": "moore_agg_activation",
    "task_encoder.units": "task_encoder_units",
    "task_encoder.bias": "task_encoder_bias",
    "task_encoder.compositional_initializer": "task_encoder_init",
    "task_encoder.activation": "task_encoder_activation",
    "paco.K": "paco_k",
    "paco.D": "paco_d",
    "paco.num_layers": "paco_num_layers",
    "soft_network.num_experts": "softmod_num_experts",
    "soft_network.num_layer": "softmod_num_layer",
    "soft_network.route_raw": "softmod_route_raw",
    "state_encoder.units": "state_encoder_units",
    "multi_head": "multi_head",
    "project_actor_gradient": "project_actor_gradient",
    "project_critic_gradient": "project_critic_gradient",
    "cagrad.c": "cagrad_c",
    "famo.gamma": "famo_gamma",
    "famo.w_lr": "famo_w_lr",
    "famo.epsilon": "famo_epsilon",
    "famo.norm_w_grad": "famo_norm_w_grad",
    "q_lambda": "q_lambda",
    "num_minibatches": "num_minibatches",
    "binsPerDim": "bins_per_dim",
    "actionScale": "action_scale",
    "start_e": "start_e",
    "end_e": "end_e",
    "decay_epsilon": "decay_epsilon",
    "exploration_fraction": "exploration_fraction",
    "critic_lr": "critic_lr",
    "anneal_lr": "anneal_lr",
    "q.residual_network": "q_residual_network",
    "q.num_blocks": "q_num_blocks",
    "q.D": "q_d",
    "q.norm_first_layer": "q_norm_first_layer",
    "gradient_steps_per_itr": "gradient_steps_per_itr",
    "learnable_temperature": "learnable_temperature",
    "use_disentangled_alpha": "use_disentangled_alpha",
    "init_alpha": "init_alpha",
    "alpha_lr": "alpha_lr",
    "critic_tau": "critic_tau",
    "batch_size": "batch_size",
    "nstep": "nstep",
    "grad_norm": "grad_norm",
    "replay_buffer_size": "replay_buffer_size",
    "target_entropy_coef": "target_entropy_coef",
    "log_cosine": "log_cosine",
    "log_episodes": "log_episodes",
}

_FIELD_TO_KEY = {v: k for k, v in KEY_MAP.items()}


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith("[") and raw.endswith("]"):
        inner = raw[1:-1].strip()
        if not inner:
            return ()
        return tuple(_parse_value(part) for part in inner.split(","))
    low = raw.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str, overrides: dict | None = None) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in KEY_MAP:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        values[key] = _parse_value(raw)
    if overrides:
        for key, val in overrides.items():
            if key not in KEY_MAP:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = val
    kwargs = {KEY_MAP[k]: v for k, v in values.items()}
    # normalize tuple-typed fields that may arrive as scalars
    for name in ("hidden_units", "attention_units", "context_encoder_units",
                 "task_encoder_units", "state_encoder_units", "care_units",
                 "moore_agg_activation"):
        if name in kwargs and not isinstance(kwargs[name], tuple):
            kwargs[name] = (kwargs[name],)
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, overrides)


def resolved_dict(cfg: ExperimentConfig) -> dict:
    """Full resolved config as file-style keys (echoed into every run record)."""
    out = {}
    for f in fields(cfg):
        key = _FIELD_TO_KEY[f.name]
        val = getattr(cfg, f.name)
        if isinstance(val, tuple):
            val = list(val)
        out[key] = val
    return out


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(resolved_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
