from deskrl.schemes.cagrad import cagrad, cagrad_dual_objective, cagrad_dual_solve, project_simplex
from deskrl.schemes.conflict import TaskGradientSet, cosine_stats
from deskrl.schemes.famo import FamoState, famo_update, famo_weights
from deskrl.schemes.pcgrad import pcgrad
from deskrl.schemes.routing import SchemeRouting, combined_gradient, per_task_mean_losses, task_gradient_set

__all__ = [
    "FamoState",
    "SchemeRouting",
    "TaskGradientSet",
    "cagrad",
    "cagrad_dual_objective",
    "cagrad_dual_solve",
    "combined_gradient",
    "cosine_stats",
    "famo_update",
    "famo_weights",
    "pcgrad",
    "per_task_mean_losses",
    "project_simplex",
    "task_gradient_set",
]
