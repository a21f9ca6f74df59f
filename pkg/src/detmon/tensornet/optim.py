"""Adam with bias correction, keyed by parameter name."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per named parameter."""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update over all named parameters, in place.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) with the standard
    bias-corrected moment estimates. Deterministic; parameter order is the
    sorted key order.
    """
    state.step += 1
    t = state.step
    for name in sorted(params):
        grad = grads[name]
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient for parameter '{name}'")
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m = state.m[name]
        v = state.v[name]
        m *= BETA1
        m += (1 - BETA1) * grad
        v *= BETA2
        v += (1 - BETA2) * grad * grad
        m_hat = m / (1 - BETA1**t)
        v_hat = v / (1 - BETA2**t)
        params[name] -= (lr * m_hat / (np.sqrt(v_hat) + EPSILON)).astype(
            params[name].dtype, copy=False
        )
    return params, state
