"""Adaptive optimizers with sparse-group-lasso regularization.

The group path maintains, per parameter block, a dual accumulator z and the
scaled stabilized root R_t of the second moment (sqrt(V_t)/alpha plus the
schedule's stabilizer). One step is

    z <- z + m_t - (R_t - R_{t-1}) * x_t
    x <- group_shrink(soft_threshold(z, lambda1), R_t, ...)

so R_t doubles as the prox's cumulative diagonal. With all penalties zero
the dual telescopes to z_t = m_t - R_t * x_t and the update collapses to the
plain adaptive step x <- x - m_t / R_t; the vanilla references below compute
that step through an independent algebraic route (uncorrected moments with a
step-size schedule instead of corrected moments with a constant step), and
the trajectory equality is pinned by tests at 1e-9.

Supported moment schedules:

    sgd        m_t = g_t                      R_t = sqrt(t)/lr
    momentum   m_t = gamma*m + g_t            R_t = 1/lr
    adagrad    m_t = g_t                      R_t = sqrt(sum g^2 + eps)/lr
    adam       m_t = mhat_t/(1-b1^t)          R_t = (sqrt(vhat_t/(1-b2^t)) + eps_t)/lr
    amsgrad    as adam with vhat_t = max(vhat_{t-1}, b2*vhat_{t-1}+(1-b2)g^2)

where mhat/vhat are the usual exponential moving averages, eps folds into
the first adagrad accumulation, and eps_t = eps/sqrt(1-b2^t) is recomputed
from the original eps each step. The amsgrad running max and its bias
correction reuse the adam lines with the max-accumulated second moment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocks import ParamBlock
from .prox import group_shrink, soft_threshold

SCHEDULE_KINDS = ("sgd", "momentum", "adagrad", "adam", "amsgrad")


class PoisonedStateError(RuntimeError):
    """A non-finite gradient or dual was seen; the state is permanently invalid."""


@dataclass
class MomentSchedule:
    """First/second moment recipe plus stabilizer for one optimizer family."""

    kind: str = "adam"
    gamma: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        for name in ("gamma", "beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {v}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass
class RegConfig:
    """Sparse-group-lasso penalties and which blocks they apply to.

    apply_to=None applies the penalties to every grouped block; otherwise
    only blocks whose name is listed are regularized and all other blocks
    take the lambda = 0 path.
    """

    lambda1: float = 0.0
    lambda21: float = 0.0
    lambda2: float = 0.0
    variant: str = "practical"
    apply_to: frozenset | None = None

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda21 < 0 or self.lambda2 < 0:
            raise ValueError("penalties must be >= 0")
        if self.variant not in ("practical", "exact"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.apply_to is not None:
            self.apply_to = frozenset(self.apply_to)

    def applies_to(self, block_name: str) -> bool:
        return self.apply_to is None or block_name in self.apply_to


NO_REG = RegConfig()


@dataclass
class OptimizerState:
    """Per-block optimizer state for both the group and vanilla paths."""

    dim: int
    t: int = 0
    poisoned: bool = False
    z: np.ndarray = field(init=False)
    m_hat: np.ndarray = field(init=False)
    v_hat: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)
    prev_scaled_root: np.ndarray = field(init=False)
    last_m: np.ndarray = field(init=False)

    def __post_init__(self):
        self.z = np.zeros(self.dim)
        self.m_hat = np.zeros(self.dim)
        self.v_hat = np.zeros(self.dim)
        self.v = np.zeros(self.dim)
        self.prev_scaled_root = np.zeros(self.dim)
        self.last_m = np.zeros(self.dim)


def _check_step(state: OptimizerState, block: ParamBlock, grad: np.ndarray, lr: float):
    if state.poisoned:
        raise PoisonedStateError("optimizer state is poisoned")
    if lr <= 0:
        raise ValueError("lr must be > 0")
    if grad.shape != block.values.shape or state.dim != grad.size:
        raise ValueError("gradient/block/state dimension mismatch")
    if not np.all(np.isfinite(grad)):
        state.poisoned = True
        raise PoisonedStateError(f"non-finite gradient for block {block.name!r}")


def _advance_moments(state, grad, schedule, lr):
    """Advance accumulators and return (m_t, R_t) for step t = state.t + 1."""
    t = state.t + 1
    kind = schedule.kind
    if kind == "sgd":
        m = grad
        state.v = np.ones_like(grad)
        scaled_root = np.full_like(grad, np.sqrt(float(t)) / lr)
    elif kind == "momentum":
        state.m_hat = schedule.gamma * state.m_hat + grad
        m = state.m_hat
        state.v = np.ones_like(grad)
        scaled_root = np.full_like(grad, 1.0 / lr)
    elif kind == "adagrad":
        inc = grad * grad
        if t == 1:
            inc = inc + schedule.epsilon
        state.v_hat = state.v_hat + inc
        m = grad
        state.v = state.v_hat
        scaled_root = np.sqrt(state.v) / lr
    else:  # adam, amsgrad
        b1, b2 = schedule.beta1, schedule.beta2
        state.m_hat = b1 * state.m_hat + (1.0 - b1) * grad
        raw = b2 * state.v_hat + (1.0 - b2) * grad * grad
        if kind == "amsgrad":
            raw = np.maximum(state.v_hat, raw)
        state.v_hat = raw
        bc1 = 1.0 - b1**t
        bc2 = 1.0 - b2**t
        m = state.m_hat / bc1
        state.v = state.v_hat / bc2
        eps_t = schedule.epsilon / np.sqrt(bc2)
        scaled_root = (np.sqrt(state.v) + eps_t) / lr
    return m, scaled_root


def step_group(
    state: OptimizerState,
    block: ParamBlock,
    grad: np.ndarray,
    schedule: MomentSchedule,
    lr: float,
    reg: RegConfig = NO_REG,
) -> tuple[OptimizerState, ParamBlock]:
    """One regularized dual-averaging step; mutates state and block in place.

    Blocks the reg config does not target take the lambda = 0 path, which is
    the plain adaptive update. Ungrouped blocks are treated as group size 1.
    """
    grad = np.asarray(grad, dtype=np.float64)
    _check_step(state, block, grad, lr)
    if reg.applies_to(block.name):
        lam1, lam21, lam2, variant = reg.lambda1, reg.lambda21, reg.lambda2, reg.variant
    else:
        lam1, lam21, lam2, variant = 0.0, 0.0, 0.0, reg.variant
    group_size = block.group_size if block.grouped else 1

    m, scaled_root = _advance_moments(state, grad, schedule, lr)
    state.z = state.z + m - (scaled_root - state.prev_scaled_root) * block.values
    if not np.all(np.isfinite(state.z)):
        state.poisoned = True
        raise PoisonedStateError(f"non-finite dual for block {block.name!r}")
    state.prev_scaled_root = scaled_root
    state.last_m = m
    state.t += 1

    s = soft_threshold(state.z, lam1)
    block.values = group_shrink(s, scaled_root, group_size, lam21, lam2, variant)
    return state, block


def vanilla_step(
    state: OptimizerState,
    block: ParamBlock,
    grad: np.ndarray,
    schedule: MomentSchedule,
    lr: float,
) -> tuple[OptimizerState, ParamBlock]:
    """Reference unregularized update x <- x - alpha_t * m_t / denom_t.

    Written in the conventional direct form (uncorrected moments, bias
    corrections folded into the step size for adam/amsgrad) so it shares no
    algebra with the dual path of step_group.
    """
    grad = np.asarray(grad, dtype=np.float64)
    _check_step(state, block, grad, lr)
    t = state.t + 1
    kind = schedule.kind
    if kind == "sgd":
        delta = (lr / np.sqrt(float(t))) * grad
    elif kind == "momentum":
        state.m_hat = schedule.gamma * state.m_hat + grad
        delta = lr * state.m_hat
    elif kind == "adagrad":
        inc = grad * grad
        if t == 1:
            inc = inc + schedule.epsilon
        state.v_hat = state.v_hat + inc
        delta = lr * grad / np.sqrt(state.v_hat)
    else:  # adam, amsgrad
        b1, b2 = schedule.beta1, schedule.beta2
        state.m_hat = b1 * state.m_hat + (1.0 - b1) * grad
        raw = b2 * state.v_hat + (1.0 - b2) * grad * grad
        if kind == "amsgrad":
            raw = np.maximum(state.v_hat, raw)
        state.v_hat = raw
        alpha_t = lr * np.sqrt(1.0 - b2**t) / (1.0 - b1**t)
        delta = alpha_t * state.m_hat / (np.sqrt(state.v_hat) + schedule.epsilon)
    state.last_m = state.m_hat if kind != "sgd" and kind != "adagrad" else grad
    state.t = t
    block.values = block.values - delta
    if not np.all(np.isfinite(block.values)):
        state.poisoned = True
        raise PoisonedStateError(f"non-finite parameters for block {block.name!r}")
    return state, block


@dataclass
class FtrlState:
    """Per-coordinate accumulators for the follow-the-regularized-leader path."""

    dim: int
    t: int = 0
    poisoned: bool = False
    z: np.ndarray = field(init=False)
    n: np.ndarray = field(init=False)

    def __post_init__(self):
        self.z = np.zeros(self.dim)
        self.n = np.zeros(self.dim)


def ftrl_step(
    state: FtrlState,
    block: ParamBlock,
    grad: np.ndarray,
    lr: float,
    lambda1: float = 0.0,
) -> tuple[FtrlState, ParamBlock]:
    """Proximal FTRL coordinate update with an l1 dead zone.

    Per coordinate: sigma_t = (sqrt(n + g^2) - sqrt(n)) / lr, z += g - sigma*x,
    n += g^2, then x = 0 where |z| <= lambda1 and (sign(z)*lambda1 - z)*lr/sqrt(n)
    elsewhere. With lambda1 = 0 this is the adagrad trajectory.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if state.poisoned:
        raise PoisonedStateError("optimizer state is poisoned")
    if lr <= 0:
        raise ValueError("lr must be > 0")
    if grad.shape != block.values.shape:
        raise ValueError("gradient/block dimension mismatch")
    if not np.all(np.isfinite(grad)):
        state.poisoned = True
        raise PoisonedStateError(f"non-finite gradient for block {block.name!r}")

    n_next = state.n + grad * grad
    sigma = (np.sqrt(n_next) - np.sqrt(state.n)) / lr
    state.z = state.z + grad - sigma * block.values
    state.n = n_next
    state.t += 1
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(
            np.abs(state.z) <= lambda1,
            0.0,
            (np.sign(state.z) * lambda1 - state.z) * lr / np.sqrt(state.n),
        )
    # coordinates never touched by any gradient stay at the dead-zone zero
    block.values = np.where(state.n > 0.0, x, 0.0)
    return state, block


class GroupOptimizer:
    """Driver holding one OptimizerState per block name."""

    def __init__(self, schedule: MomentSchedule, lr: float, reg: RegConfig = NO_REG):
        self.schedule = schedule
        self.lr = lr
        self.reg = reg
        self.states: dict[str, OptimizerState] = {}

    def step(self, block: ParamBlock, grad: np.ndarray) -> None:
        st = self.states.get(block.name)
        if st is None:
            st = self.states[block.name] = OptimizerState(block.values.size)
        step_group(st, block, grad, self.schedule, self.lr, self.reg)


class VanillaOptimizer:
    """Driver for the unregularized reference updates."""

    def __init__(self, schedule: MomentSchedule, lr: float):
        self.schedule = schedule
        self.lr = lr
        self.states: dict[str, OptimizerState] = {}

    def step(self, block: ParamBlock, grad: np.ndarray) -> None:
        st = self.states.get(block.name)
        if st is None:
            st = self.states[block.name] = OptimizerState(block.values.size)
        vanilla_step(st, block, grad, self.schedule, self.lr)


class FtrlOptimizer:
    """Driver for the proximal FTRL reference."""

    def __init__(self, lr: float, lambda1: float = 0.0):
        self.lr = lr
        self.lambda1 = lambda1
        self.states: dict[str, FtrlState] = {}

    def step(self, block: ParamBlock, grad: np.ndarray) -> None:
        st = self.states.get(block.name)
        if st is None:
            st = self.states[block.name] = FtrlState(block.values.size)
        ftrl_step(st, block, grad, self.lr, self.lambda1)


def make_optimizer(name: str, lr: float, reg: RegConfig = NO_REG,
                   schedule_args: dict | None = None):
    """Build a driver from a family-prefixed name.

    "adam", "sgd", ... are the vanilla references; "group-adam" etc. take
    the regularized path; "ftrl" is the proximal FTRL reference (its l1
    strength comes from reg.lambda1).
    """
    args = schedule_args or {}
    if name == "ftrl":
        return FtrlOptimizer(lr, reg.lambda1)
    if name.startswith("group-"):
        return GroupOptimizer(MomentSchedule(kind=name[len("group-"):], **args), lr, reg)
    return VanillaOptimizer(MomentSchedule(kind=name, **args), lr)
