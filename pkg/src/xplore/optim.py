"""Adam with bias correction, operating in place on parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class NonFiniteGradError(RuntimeError):
    """A gradient contained NaN or inf; the training harness decides what to do."""


@dataclass
class AdamHyper:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params])


def adam_update(params, grads, state: AdamState, hyper: AdamHyper):
    """One bias-corrected Adam step; mutates params and state, returns both.

    `grads` may be tensors or raw arrays, aligned with `params`.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError(f"adam_update: {len(params)} params, {len(grads)} grads, "
                         f"state of {len(state.m)}")
    gs = [g.data if isinstance(g, Tensor) else np.asarray(g) for g in grads]
    for i, (p, g) in enumerate(zip(params, gs)):
        if g.shape != p.data.shape:
            raise ValueError(f"adam_update: grad {i} shape {g.shape} != param {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradError(f"adam_update: non-finite gradient for parameter {i}")
    state.t += 1
    bc1 = 1.0 - hyper.beta1 ** state.t
    bc2 = 1.0 - hyper.beta2 ** state.t
    for p, g, m, v in zip(params, gs, state.m, state.v):
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * np.square(g)
        p.data -= hyper.lr * (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)
    return params, state
