"""Episode success/progress metrics and their per-task aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from deskrl.errors import ContractViolation


def success_metric(distances, epsilon: float) -> bool:
    """True iff the goal was within epsilon at ANY point during the episode."""
    distances = np.asarray(distances, dtype=np.float64)
    if distances.size == 0:
        raise ContractViolation("success metric on an empty trajectory")
    return bool(distances.min() < epsilon)


def progress_metric(waypoint_index: int, total_waypoints: int) -> float:
    """Fraction of waypoints crossed when the episode ended."""
    if total_waypoints < 1:
        raise ContractViolation("total_waypoints must be >= 1")
    if not (0 <= waypoint_index <= total_waypoints):
        raise ContractViolation(
            f"waypoint index {waypoint_index} outside [0, {total_waypoints}]"
        )
    return waypoint_index / total_waypoints


@dataclass
class MetricsFrame:
    """Per-task success rate, mean episodic reward, and mean progress."""

    num_tasks: int
    sr: np.ndarray = field(init=False)
    reward: np.ndarray = field(init=False)
    progress: np.ndarray = field(init=False)
    episodes: np.ndarray = field(init=False)

    def __post_init__(self):
        self.sr = np.zeros(self.num_tasks)
        self.reward = np.zeros(self.num_tasks)
        self.progress = np.zeros(self.num_tasks)
        self.episodes = np.zeros(self.num_tasks, dtype=np.int64)

    @classmethod
    def from_events(cls, num_tasks: int, events) -> "MetricsFrame":
        """Aggregate completed-episode events in arrival order."""
        frame = cls(num_tasks)
        sums = np.zeros((num_tasks, 3))
        for ev in events:
            k = ev["task_id"]
            sums[k, 0] += float(ev["success"])
            sums[k, 1] += ev["return"]
            sums[k, 2] += ev["progress"]
            frame.episodes[k] += 1
        seen = frame.episodes > 0
        frame.sr[seen] = sums[seen, 0] / frame.episodes[seen]
        frame.reward[seen] = sums[seen, 1] / frame.episodes[seen]
        frame.progress[seen] = sums[seen, 2] / frame.episodes[seen]
        if np.any(frame.sr < 0) or np.any(frame.sr > 1) or np.any(frame.progress > 1 + 1e-12):
            raise ContractViolation("aggregated SR/P left [0, 1]")
        return frame

    def overall(self, counted_only: bool = True):
        """Mean SR/R/P across tasks (tasks with no finished episodes excluded)."""
        mask = self.episodes > 0 if counted_only else np.ones(self.num_tasks, bool)
        if not mask.any():
            return {"sr": 0.0, "reward": 0.0, "progress": 0.0, "episodes": 0}
        return {
            "sr": float(self.sr[mask].mean()),
            "reward": float(self.reward[mask].mean()),
            "progress": float(self.progress[mask].mean()),
            "episodes": int(self.episodes.sum()),
        }
