from deskrl.tasks.curriculum import CurriculumState, curriculum_update
from deskrl.tasks.metrics import MetricsFrame, progress_metric, success_metric
from deskrl.tasks.spec import ACT_DIM, RAW_OBS_WIDTH, TaskSpec, difficulty_to_params
from deskrl.tasks.suites import SUITES, build_suite, desk_mt10_specs, desk_pk5_specs, even_blocks
from deskrl.tasks.world import VecWorld, allocate

__all__ = [
    "ACT_DIM",
    "CurriculumState",
    "MetricsFrame",
    "RAW_OBS_WIDTH",
    "SUITES",
    "TaskSpec",
    "VecWorld",
    "allocate",
    "build_suite",
    "curriculum_update",
    "desk_mt10_specs",
    "desk_pk5_specs",
    "difficulty_to_params",
    "even_blocks",
    "progress_metric",
    "success_metric",
]
