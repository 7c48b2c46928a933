"""Wiring between training losses and the gradient-manipulation schemes.

PCGrad/CAGrad consume a matrix of per-task gradients (K backward passes over
a shared tape); FAMO consumes scalar per-task losses and differentiates a
single weighted sum. Routing flags decide which of the actor/critic networks
a scheme applies to; the unrouted network trains on the plain batch-mean
loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from deskrl.autodiff import engine
from deskrl.autodiff.engine import Tape, Tensor
from deskrl.autodiff.nn import Params
from deskrl.errors import ConfigError
from deskrl.schemes.cagrad import cagrad
from deskrl.schemes.conflict import TaskGradientSet
from deskrl.schemes.famo import FamoState, famo_weights
from deskrl.schemes.pcgrad import pcgrad

SCHEMES = ("none", "pcgrad", "cagrad", "famo")


@dataclass
class SchemeRouting:
    project_actor: bool = False
    project_critic: bool = True

    def validate(self, scheme: str) -> None:
        if scheme != "none" and not (self.project_actor or self.project_critic):
            raise ConfigError("scheme enabled but routed to neither actor nor critic")


def per_task_mean_losses(loss_vec: Tensor, task_ids: np.ndarray):
    """Masked mean of a per-sample loss vector for every task present.

    Returns (present task ids, list of scalar loss tensors), sharing the
    forward tape so each can be differentiated without re-running the net.
    """
    present = np.unique(task_ids)
    losses = []
    for k in present:
        mask = (task_ids == k).astype(np.float64)
        l_k = engine.div(engine.sum_(engine.mul(loss_vec, Tensor(mask))), Tensor(mask.sum()))
        losses.append(l_k)
    return present, losses


def task_gradient_set(tape: Tape, params: Params, present, losses) -> TaskGradientSet:
    """K backward passes over the shared tape, rows reduced in task order."""
    rows = np.empty((len(losses), params.size), dtype=np.float64)
    for i, loss in enumerate(losses):
        engine.backward(tape, loss)
        rows[i] = params.grad_flat()
    return TaskGradientSet(rows, present)


def combined_gradient(scheme: str, tape: Tape, params: Params, loss_vec: Tensor,
                      task_ids: np.ndarray, rng: np.random.Generator,
                      famo_state: FamoState | None = None, cagrad_c: float = 0.4):
    """Final flat gradient for one routed network on one minibatch.

    Returns ``(grad, famo_report)``; ``famo_report`` is ``(present_ids,
    prev_losses)`` when the FAMO weighting was applied (the caller owes a
    post-step loss measurement), else None.
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme: {scheme}")
    mean_loss = engine.mean(loss_vec)
    if scheme == "none":
        engine.backward(tape, mean_loss)
        return params.grad_flat(), None

    present, losses = per_task_mean_losses(loss_vec, task_ids)
    if len(present) < 2:
        # a single task degenerates to the vanilla update
        engine.backward(tape, mean_loss)
        return params.grad_flat(), None

    if scheme == "famo":
        w = famo_weights(famo_state)[present]
        weighted = losses[0] * Tensor(w[0])
        for i in range(1, len(losses)):
            weighted = engine.add(weighted, losses[i] * Tensor(w[i]))
        prev = np.array([l.item() for l in losses])
        engine.backward(tape, weighted)
        return params.grad_flat(), (present, prev)

    grads = task_gradient_set(tape, params, present, losses)
    if scheme == "pcgrad":
        return pcgrad(grads, rng), None
    return cagrad(grads, cagrad_c), None
