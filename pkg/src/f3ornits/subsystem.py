"""Subsystem wrapper: declared capabilities and macro-step integration.

Each subsystem owns an ODE  x' = f(t, x, u(t)),  y = g(t, x, u(t))  and is
advanced one macro step at a time with a fixed-step classical Runge-Kutta 4
micro-integration.  Inputs arrive as genuine polynomials in time and are
evaluated continuously at every micro stage, never sampled-and-held, so the
micro error stays far below the coupling error.  There is no rollback: a
completed macro step is final.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isfinite
from typing import Callable, Sequence

from .errors import ConfigError, ContractViolation, DivergenceError
from .poly import Polynomial

#: highest polynomial order the method itself proposes (inputs and outputs)
MAX_ORDER = 2

#: degree that C1 smoothing may raise an input plan to
SMOOTHING_DEGREE = 3

#: micro-step rule: min(macro_step / MICRO_DIVISOR, MICRO_CAP) seconds
MICRO_DIVISOR = 50.0
MICRO_CAP = 1e-3


@dataclass(frozen=True)
class Capabilities:
    """What a simulator can accept from the master.

    max_input_degree is the highest polynomial degree the subsystem can
    integrate on its inputs; smoothing additionally needs cubics.  A
    subsystem that cannot vary its communication step declares the step it
    imposes instead.
    """

    max_input_degree: int = SMOOTHING_DEGREE
    variable_step: bool = True
    imposed_step: float | None = None

    def __post_init__(self):
        if self.max_input_degree < 0:
            raise ConfigError("max_input_degree must be >= 0")
        if self.imposed_step is not None:
            if self.imposed_step <= 0:
                raise ConfigError("imposed_step must be positive")
            if self.variable_step:
                raise ConfigError(
                    "a subsystem with an imposed step cannot also vary its step"
                )

    @property
    def smoothing_capable(self) -> bool:
        return self.max_input_degree >= SMOOTHING_DEGREE


def effective_max_degree(caps: Capabilities) -> int:
    """Order ceiling for un-smoothed input plans: min(method cap, capability)."""
    return min(MAX_ORDER, caps.max_input_degree)


def input_degree_limit(caps: Capabilities) -> int:
    """Hard degree bound on anything handed to the subsystem.

    Smoothing-capable subsystems may receive cubics (the smoothing blend);
    everyone else is limited to their un-smoothed ceiling.
    """
    if caps.smoothing_capable:
        return SMOOTHING_DEGREE
    return effective_max_degree(caps)


@dataclass(frozen=True)
class SubsystemSpec:
    """Dynamics f, output map g, initial state, and coupling arities."""

    label: str
    n_states: int
    n_in: int
    n_out: int
    f: Callable[[float, list[float], list[float]], list[float]]
    g: Callable[[float, list[float], list[float]], list[float]]
    x_init: tuple[float, ...]

    def __post_init__(self):
        if len(self.x_init) != self.n_states:
            raise ConfigError(
                f"{self.label}: x_init has {len(self.x_init)} entries, "
                f"expected {self.n_states}"
            )


@dataclass(frozen=True)
class MacroStepResult:
    t_reached: float
    outputs: tuple[float, ...]


def micro_step_size(macro_step: float) -> float:
    return min(macro_step / MICRO_DIVISOR, MICRO_CAP)


def step_to(
    spec: SubsystemSpec,
    caps: Capabilities,
    state: Sequence[float],
    inputs: Sequence[Polynomial],
    t_start: float,
    t_target: float,
    micro_step: float | None = None,
) -> tuple[list[float], MacroStepResult]:
    """Advance one subsystem from t_start to t_target, no rollback.

    Returns the new state and the outputs evaluated exactly at t_target.
    `micro_step` overrides the default step rule (used by convergence tests).
    """
    if t_target <= t_start:
        raise ValueError(
            f"{spec.label}: macro step must advance time "
            f"({t_start!r} -> {t_target!r})"
        )
    if len(inputs) != spec.n_in:
        raise ContractViolation(
            f"{spec.label}: got {len(inputs)} input polynomials, "
            f"expected {spec.n_in}"
        )
    limit = input_degree_limit(caps)
    for i, p in enumerate(inputs):
        if p.degree > limit:
            raise ContractViolation(
                f"{spec.label}: input {i} has degree {p.degree}, "
                f"capability allows {limit}"
            )

    h = micro_step if micro_step is not None else micro_step_size(t_target - t_start)
    if h <= 0:
        raise ValueError("micro step must be positive")

    f = spec.f
    x = list(state)
    n = spec.n_states
    # unpack polynomial data once; evaluation below is inlined Horner
    pdata = [(p.t_ref, p.coeffs) for p in inputs]
    u = [0.0] * spec.n_in

    def eval_inputs(t: float) -> list[float]:
        # NOTE: the same buffer is reused across stages; f must not retain it
        for i, (tr, cs) in enumerate(pdata):
            tau = t - tr
            acc = 0.0
            for c in reversed(cs):
                acc = acc * tau + c
            u[i] = acc
        return u

    t = t_start
    guard = h * 1e-9
    while t_target - t > guard:
        hs = t_target - t
        if hs > h:
            hs = h
        half = 0.5 * hs
        u0 = eval_inputs(t)
        k1 = f(t, x, u0)
        xs = [x[i] + half * k1[i] for i in range(n)]
        um = eval_inputs(t + half)
        k2 = f(t + half, xs, um)
        xs = [x[i] + half * k2[i] for i in range(n)]
        k3 = f(t + half, xs, um)
        xs = [x[i] + hs * k3[i] for i in range(n)]
        u1 = eval_inputs(t + hs)
        k4 = f(t + hs, xs, u1)
        sixth = hs / 6.0
        x = [
            x[i] + sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])
            for i in range(n)
        ]
        t += hs

    if not all(isfinite(v) for v in x):
        raise DivergenceError(spec.label, t_start)

    y = spec.g(t_target, x, eval_inputs(t_target))
    if len(y) != spec.n_out:
        raise ContractViolation(
            f"{spec.label}: g returned {len(y)} outputs, expected {spec.n_out}"
        )
    if not all(isfinite(v) for v in y):
        raise DivergenceError(spec.label, t_start)
    return x, MacroStepResult(t_target, tuple(y))


def evaluate_outputs(
    spec: SubsystemSpec,
    state: Sequence[float],
    inputs_at_t: Sequence[float],
    t: float,
) -> tuple[float, ...]:
    """Output map at a given time without stepping (used at initialization)."""
    y = spec.g(t, list(state), list(inputs_at_t))
    if len(y) != spec.n_out:
        raise ContractViolation(
            f"{spec.label}: g returned {len(y)} outputs, expected {spec.n_out}"
        )
    return tuple(y)
