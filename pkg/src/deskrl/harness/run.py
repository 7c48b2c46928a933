"""Training-run orchestration: wiring config -> world -> trainer -> records."""

from __future__ import annotations

import dataclasses
import json
import os
import time

import numpy as np

from deskrl.algo.ppo import OnPolicyTrainer
from deskrl.algo.pqn import PQNTrainer
from deskrl.algo.sac import SACTrainer
from deskrl.errors import TrainingFault
from deskrl.harness.config import ExperimentConfig, config_hash, resolved_dict
from deskrl.harness.records import RunRecord, epoch_record, write_run_jsonl, write_timing_csv
from deskrl.tasks import MetricsFrame, allocate, build_suite, even_blocks

TRAINERS = {
    "ppo": OnPolicyTrainer,
    "grpo": OnPolicyTrainer,
    "sac": SACTrainer,
    "pqn": PQNTrainer,
}


def build_world_and_trainer(cfg: ExperimentConfig):
    specs, mode, level_policy = build_suite(cfg.suite)
    if cfg.episode_length > 0:
        specs = [dataclasses.replace(s, episode_length=cfg.episode_length) for s in specs]
    seed_seq = np.random.SeedSequence(cfg.seed)
    world_seed, trainer_seed = seed_seq.spawn(2)
    world = allocate(
        specs, even_blocks(specs, cfg.num_envs), seed=int(world_seed.generate_state(1)[0]),
        mode=mode, level_policy=level_policy, workers=cfg.workers,
    )
    trainer = TRAINERS[cfg.algorithm](cfg, world, trainer_seed)
    return world, trainer


def run(cfg: ExperimentConfig, out_dir: str | None = None,
        stop_sr: float | None = None, progress_cb=None) -> RunRecord:
    """Train for max_epochs, logging one record per epoch.

    ``stop_sr`` ends the run early once the mean SR over the last 5 epochs
    reaches the floor (the recorded final metric uses the same averaging).
    A non-finite loss aborts with a fault record and re-raises.
    """
    world, trainer = build_world_and_trainer(cfg)
    record = RunRecord(config=resolved_dict(cfg), config_hash=config_hash(cfg))
    events_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        if cfg.log_episodes:
            events_fh = open(os.path.join(out_dir, "events.jsonl"), "w", encoding="utf-8")
    try:
        sr_window = []
        for epoch in range(cfg.max_epochs):
            t0 = time.perf_counter()
            out = trainer.train_epoch()
            record.wall_clock.append(time.perf_counter() - t0)
            frame = MetricsFrame.from_events(world.num_tasks, out["events"])
            overall = frame.overall()
            per_task = {
                "sr": [round(x, 10) for x in frame.sr],
                "reward": [round(x, 10) for x in frame.reward],
                "progress": [round(x, 10) for x in frame.progress],
                "episodes": frame.episodes.tolist(),
            }
            record.epochs.append(
                epoch_record(epoch, out["env_steps"], overall, per_task,
                             out["losses"], out["utd"], out["cosine"], out["faults"])
            )
            if events_fh is not None:
                for ev in out["events"]:
                    events_fh.write(json.dumps(ev, sort_keys=True) + "\n")
            if progress_cb is not None:
                progress_cb(epoch, overall)
            sr_window.append(overall["sr"])
            if stop_sr is not None and len(sr_window) >= 5 and np.mean(sr_window[-5:]) >= stop_sr:
                break
    except TrainingFault as fault:
        if out_dir is not None:
            with open(os.path.join(out_dir, "fault.json"), "w", encoding="utf-8") as fh:
                json.dump({"error": str(fault), "step": fault.step}, fh)
        raise
    finally:
        if events_fh is not None:
            events_fh.close()
        if out_dir is not None:
            write_run_jsonl(os.path.join(out_dir, "run.jsonl"), record)
            write_timing_csv(os.path.join(out_dir, "timing.csv"), record)
    return record
