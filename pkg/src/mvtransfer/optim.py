"""Adam optimizer over flat dictionaries of named parameter arrays.

Shared by the normalizing-flow trainer and the neural network trainer.
State is explicit and serializable: first/second moment estimates per
parameter plus the step counter, so training runs are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """Per-parameter moment estimates and the shared step count."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def init_adam_state(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        step=0,
    )


def adam_update(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One Adam step with bias correction, applied to ``params`` in place.

    ``grads`` may omit parameters that received no gradient this step
    (their moments still decay on later steps only when updated; omitted
    keys are simply skipped, matching sparse-update semantics).
    """
    if state.step == 0 and not state.m:
        state = init_adam_state(params)
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for key, grad in grads.items():
        p = params[key]
        if grad.shape != p.shape:
            raise ValueError(f"gradient shape {grad.shape} != parameter shape {p.shape} for {key!r}")
        m = state.m[key]
        v = state.v[key]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        p -= learning_rate * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state
