"""Adam optimizer with bias correction.

The update is fused into a single in-place loop (numba) per parameter
tensor; a vectorized numpy fallback computes the identical formula.
State (first/second moments, step count) lives in :class:`AdamState` and
is keyed by parameter name so it can follow a network through
checkpointing if ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ShapeError


@dataclass
class AdamState:
    """Hyper-parameters and per-parameter moment buffers."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def slot(self, name: str, param: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m = self.m.get(name)
        if m is None or m.shape != param.shape or m.dtype != param.dtype:
            m = np.zeros_like(param)
            self.m[name] = m
            self.v[name] = np.zeros_like(param)
        return m, self.v[name]


def adam_step(params: list[tuple[str, np.ndarray]],
              grads: list[tuple[str, np.ndarray]],
              state: AdamState) -> AdamState:
    """Apply one Adam step in place to every (name, array) parameter.

    ``grads`` must pair one-to-one with ``params`` (same names, same
    shapes).  Increments ``state.t`` once for the whole step.
    """
    if len(params) != len(grads):
        raise ShapeError("params and grads must pair one-to-one")
    state.t += 1
    for (pname, p), (gname, g) in zip(params, grads):
        if pname != gname or p.shape != g.shape:
            raise ShapeError(
                f"param/grad mismatch: {pname}{p.shape} vs {gname}{g.shape}")
        m, v = state.slot(pname, p)
        pf = p.reshape(-1)
        gf = np.ascontiguousarray(g.reshape(-1))
        if _kernels.HAVE_NUMBA:
            _kernels.adam_update(pf, gf, m.reshape(-1), v.reshape(-1),
                                 state.t, state.lr, state.beta1, state.beta2,
                                 state.eps)
        else:
            _kernels.adam_update_numpy(pf, gf, m.reshape(-1), v.reshape(-1),
                                       state.t, state.lr, state.beta1,
                                       state.beta2, state.eps)
    return state
