"""Run records and their JSON-lines serialization.

``run.jsonl`` holds one config line followed by one line per epoch; every
field in it is deterministic for a fixed (seed, config) so byte-identical
replays are checkable. Wall-clock timings are machine-dependent and live in
a separate ``timing.csv`` next to it.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from deskrl.errors import ContractViolation


@dataclass
class RunRecord:
    config: dict
    config_hash: str
    epochs: list = field(default_factory=list)  # per-epoch metric dicts
    wall_clock: list = field(default_factory=list)  # seconds per epoch

    @property
    def num_epochs(self) -> int:
        return len(self.epochs)

    def epoch_series(self, key: str):
        return [ep[key] for ep in self.epochs]


def epoch_record(epoch: int, env_steps: int, frame_overall: dict, per_task: dict,
                 losses: dict, utd: float, cosine: dict | None, faults: int) -> dict:
    return {
        "type": "epoch",
        "epoch": epoch,
        "env_steps": env_steps,
        "sr": frame_overall["sr"],
        "reward": frame_overall["reward"],
        "progress": frame_overall["progress"],
        "episodes": frame_overall["episodes"],
        "per_task": per_task,
        "losses": losses,
        "utd": utd,
        "cosine": cosine,
        "faults": faults,
    }


def write_run_jsonl(path: str, record: RunRecord) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"type": "config", "hash": record.config_hash,
                             "config": record.config}, sort_keys=True) + "\n")
        for ep in record.epochs:
            fh.write(json.dumps(ep, sort_keys=True) + "\n")


def write_timing_csv(path: str, record: RunRecord) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,wall_clock_s\n")
        for i, w in enumerate(record.wall_clock):
            fh.write(f"{i},{w:.6f}\n")


def read_run_jsonl(path: str) -> RunRecord:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("type") != "config":
        raise ContractViolation(f"{path}: first line must be the config record")
    record = RunRecord(config=lines[0]["config"], config_hash=lines[0]["hash"])
    record.epochs = [l for l in lines[1:] if l.get("type") == "epoch"]
    timing = os.path.join(os.path.dirname(path), "timing.csv")
    if os.path.exists(timing):
        with open(timing) as fh:
            next(fh, None)
            record.wall_clock = [float(line.split(",")[1]) for line in fh if line.strip()]
    return record


def method_label(config: dict) -> str:
    return f"{config['algorithm']}-{config['architecture']}-{config['scheme']}"
