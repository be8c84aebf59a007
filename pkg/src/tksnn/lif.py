"""Discrete-time Leaky Integrate-and-Fire dynamics.

Update rule per step (hard multiplicative reset):

    v' = (1 - 1/tau_m) * (v * (1 - s_prev) + v_rest * s_prev) + (1/tau_m) * I

followed by a threshold spike at v_th. With v_rest = 0 this is the plain
product form; nonzero v_rest replaces the carried potential after a spike.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DTYPE, SurrogateSpec, Tensor
from .errors import DimensionError, ParameterError


@dataclass(frozen=True)
class LifConfig:
    tau_m: float = 2.0
    v_th: float = 0.5
    v_rest: float = 0.0
    detach_reset: bool = False

    def __post_init__(self):
        if self.tau_m <= 1.0:
            raise ParameterError(f"tau_m must exceed 1 (leak in (0,1)), got {self.tau_m}")
        if self.v_rest >= self.v_th:
            raise ParameterError(
                f"v_rest ({self.v_rest}) must be below v_th ({self.v_th})"
            )


@dataclass
class LifState:
    """Membrane potentials and previous-step spikes for one layer."""

    v: Tensor
    s_prev: Tensor


def reset_state(batch: int, neurons: int, cfg: LifConfig) -> LifState:
    """Fresh state: v = v_rest everywhere, no prior spikes."""
    if batch <= 0 or neurons <= 0:
        raise ParameterError(f"state sizes must be positive, got ({batch}, {neurons})")
    return reset_state_shape((batch, neurons), cfg)


def reset_state_shape(shape, cfg: LifConfig) -> LifState:
    if any(int(n) <= 0 for n in shape):
        raise ParameterError(f"state sizes must be positive, got {tuple(shape)}")
    v = Tensor(np.full(shape, cfg.v_rest, dtype=DTYPE))
    s = Tensor(np.zeros(shape, dtype=DTYPE))
    return LifState(v=v, s_prev=s)


def lif_step(
    state: LifState,
    input_current: Tensor,
    cfg: LifConfig,
    surrogate: SurrogateSpec,
) -> tuple[LifState, Tensor]:
    """One membrane update + threshold; differentiable through the surrogate."""
    if input_current.shape != state.v.shape:
        raise DimensionError(
            f"input current shape {input_current.shape} != state shape {state.v.shape}"
        )
    s_prev = state.s_prev
    if cfg.detach_reset:
        # reset factor treated as a constant in backward; forward values unchanged
        s_prev = s_prev.detach()
    keep = ad.sub(Tensor(np.ones_like(s_prev.data)), s_prev)
    carry = ad.mul(state.v, keep)
    if cfg.v_rest != 0.0:
        carry = ad.add(carry, ad.scale(s_prev, cfg.v_rest))
    leak = 1.0 - 1.0 / cfg.tau_m
    v_new = ad.add(ad.scale(carry, leak), ad.scale(input_current, 1.0 / cfg.tau_m))
    spikes = ad.spike(v_new, cfg.v_th, surrogate)
    return LifState(v=v_new, s_prev=spikes), spikes
