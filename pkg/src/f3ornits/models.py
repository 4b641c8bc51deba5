"""Benchmark problems: a switched two-mass oscillator and a controlled car.

Both come as a coupled `CosimProblem` plus the matching monolithic ODE, so
any co-simulation run can be scored against a tightly integrated reference
of the very same equations.

two_mass
    Two unit masses on dampers and springs, coupled through a spring-damper
    pair whose force is the only exchanged quantity.  The right-hand ground
    spring stiffens by an order of magnitude at t_switch, so a run has a
    slow smooth phase and a faster phase — good terrain for step control
    and order selection to show a measurable difference.

car
    A vehicle (force in, position out) driven by a controller that has to
    *differentiate* its position input through a fast first-order filter to
    estimate speed.  Held constant inputs make that estimate collapse to
    zero between exchanges, which is exactly what breaks the fixed-step
    baseline; polynomial inputs keep the estimate usable.  A band-limited
    random road force (deterministic in the seed, redrawn every dwell
    interval) keeps the controller working after the speed target engages.
"""

from __future__ import annotations

import dataclasses
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Sequence

from .coupling import CouplingGraph
from .errors import ConfigError
from .master import CosimProblem
from .subsystem import Capabilities, SubsystemSpec

_M64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def dwell_noise(seed: int, amplitude: float, dwell: float) -> Callable[[float], float]:
    """Piecewise-constant noise in [-amplitude, amplitude], redrawn each dwell.

    The value depends only on (seed, floor(t / dwell)), never on evaluation
    order or count, so every integrator — micro stages included — sees the
    same signal.
    """

    def w(t: float) -> float:
        idx = int(t // dwell)
        h = _splitmix64(((seed & _M64) * 0x100000001B3 + idx) & _M64)
        return amplitude * (2.0 * (h / 2.0**64) - 1.0)

    return w


def piecewise_linear(
    points: Sequence[tuple[float, float]]
) -> Callable[[float], float]:
    """Linear interpolant through (t, value) breakpoints, clamped outside."""
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    if sorted(xs) != xs or len(set(xs)) != len(xs):
        raise ConfigError("breakpoints must have strictly increasing times")

    def fn(t: float) -> float:
        if t <= xs[0]:
            return ys[0]
        if t >= xs[-1]:
            return ys[-1]
        i = bisect_right(xs, t) - 1
        frac = (t - xs[i]) / (xs[i + 1] - xs[i])
        return ys[i] + frac * (ys[i + 1] - ys[i])

    return fn


@dataclass(frozen=True)
class BenchmarkModel:
    """A coupled problem and its monolithic twin, sharing all parameters."""

    name: str
    problem: CosimProblem
    params: object
    monolith_rhs: Callable[[float, list[float]], list[float]]
    monolith_x0: tuple[float, ...]
    # (subsystem label, output index) -> value reconstructed from the
    # monolithic state; this is what references and scoring use
    output_map: dict[tuple[str, int], Callable[[float, Sequence[float]], float]]


# ------------------------------------------------------------------ two-mass

@dataclass(frozen=True)
class TwoMassParams:
    m1: float = 1.0
    m2: float = 1.0
    k1: float = 1.0
    k2: float = 1.0
    k3: float = 1.0
    k3_after: float = 10.0
    d1: float = 0.1
    d2: float = 0.1
    d3: float = 0.1
    t_switch: float = 100.0
    t_end: float = 200.0
    x1_0: float = 0.1
    x2_0: float = 0.0
    v1_0: float = 0.0
    v2_0: float = 0.0


def build_two_mass(
    params: TwoMassParams | None = None,
    dt0: float | Sequence[float] = 0.01,
    capabilities: Sequence[Capabilities] | None = None,
) -> BenchmarkModel:
    p = params if params is not None else TwoMassParams()

    def f_left(t, x, u):
        x1, v1 = x
        return [v1, (-p.k1 * x1 - p.d1 * v1 - u[0]) / p.m1]

    def g_left(t, x, u):
        return [x[0], x[1]]

    def coupling_force(x1, v1, x2, v2):
        return p.k2 * (x1 - x2) + p.d2 * (v1 - v2)

    def f_right(t, x, u):
        x2, v2 = x
        k3t = p.k3_after if t >= p.t_switch else p.k3
        fc = coupling_force(u[0], u[1], x2, v2)
        return [v2, (-k3t * x2 - p.d3 * v2 + fc) / p.m2]

    def g_right(t, x, u):
        return [coupling_force(u[0], u[1], x[0], x[1])]

    specs = (
        SubsystemSpec("mass_left", 2, 1, 2, f_left, g_left, (p.x1_0, p.v1_0)),
        SubsystemSpec("mass_right", 2, 2, 1, f_right, g_right, (p.x2_0, p.v2_0)),
    )
    graph = CouplingGraph(
        n_in=(1, 2),
        n_out=(2, 1),
        links={(0, 0): (1, 0), (1, 0): (0, 0), (1, 1): (0, 1)},
    )
    problem = CosimProblem(
        subsystems=specs,
        capabilities=_caps_tuple(capabilities, 2),
        graph=graph,
        t_init=0.0,
        t_end=p.t_end,
        dt0=_dt0_tuple(dt0, 2),
    )

    def rhs(t, s):
        x1, v1, x2, v2 = s
        fc = coupling_force(x1, v1, x2, v2)
        k3t = p.k3_after if t >= p.t_switch else p.k3
        return [
            v1,
            (-p.k1 * x1 - p.d1 * v1 - fc) / p.m1,
            v2,
            (-k3t * x2 - p.d3 * v2 + fc) / p.m2,
        ]

    output_map = {
        ("mass_left", 0): lambda t, s: s[0],
        ("mass_left", 1): lambda t, s: s[1],
        ("mass_right", 0): lambda t, s: coupling_force(s[0], s[1], s[2], s[3]),
    }
    return BenchmarkModel(
        name="two_mass",
        problem=problem,
        params=p,
        monolith_rhs=rhs,
        monolith_x0=(p.x1_0, p.v1_0, p.x2_0, p.v2_0),
        output_map=output_map,
    )


# ----------------------------------------------------------------------- car

@dataclass(frozen=True)
class CarParams:
    mass: float = 1000.0
    v_target: float = 16.0
    t_control_on: float = 10.0
    kp: float = 2000.0
    tau_diff: float = 1e-3
    perturb_amp: float = 200.0
    perturb_dwell: float = 0.1
    t_end: float = 30.0
    seed: int = 20240

    #: open-loop force profile driven until the speed controller engages
    preset_force: tuple[tuple[float, float], ...] = (
        (0.0, 0.0),
        (1.0, 4000.0),
        (3.0, 4000.0),
        (5.0, 0.0),
        (10.0, 0.0),
    )


def build_car(
    params: CarParams | None = None,
    dt0: float | Sequence[float] = 0.05,
    capabilities: Sequence[Capabilities] | None = None,
) -> BenchmarkModel:
    p = params if params is not None else CarParams()
    preset = piecewise_linear(p.preset_force)
    road = dwell_noise(p.seed, p.perturb_amp, p.perturb_dwell)

    def f_vehicle(t, x, u):
        return [x[1], (u[0] + road(t)) / p.mass]

    def g_vehicle(t, x, u):
        return [x[0]]

    def force(t, v_est):
        if t < p.t_control_on:
            return preset(t)
        return p.kp * (p.v_target - v_est)

    def f_controller(t, x, u):
        # x[0] follows the position input with time constant tau_diff; the
        # tracking residual over tau_diff is the speed estimate
        return [(u[0] - x[0]) / p.tau_diff]

    def g_controller(t, x, u):
        v_est = (u[0] - x[0]) / p.tau_diff
        return [force(t, v_est)]

    specs = (
        SubsystemSpec("vehicle", 2, 1, 1, f_vehicle, g_vehicle, (0.0, 0.0)),
        SubsystemSpec("controller", 1, 1, 1, f_controller, g_controller, (0.0,)),
    )
    graph = CouplingGraph(
        n_in=(1, 1),
        n_out=(1, 1),
        links={(0, 0): (1, 0), (1, 0): (0, 0)},
    )
    problem = CosimProblem(
        subsystems=specs,
        capabilities=_caps_tuple(capabilities, 2),
        graph=graph,
        t_init=0.0,
        t_end=p.t_end,
        dt0=_dt0_tuple(dt0, 2),
    )

    def rhs(t, s):
        x, v, xc = s
        v_est = (x - xc) / p.tau_diff
        return [v, (force(t, v_est) + road(t)) / p.mass, v_est]

    output_map = {
        ("vehicle", 0): lambda t, s: s[0],
        ("controller", 0): lambda t, s: force(t, (s[0] - s[2]) / p.tau_diff),
    }
    return BenchmarkModel(
        name="car",
        problem=problem,
        params=p,
        monolith_rhs=rhs,
        monolith_x0=(0.0, 0.0, 0.0),
        output_map=output_map,
    )


# ------------------------------------------------------------------ registry

MODEL_BUILDERS: dict[str, tuple[type, Callable[..., BenchmarkModel]]] = {
    "two_mass": (TwoMassParams, build_two_mass),
    "car": (CarParams, build_car),
}


def available_models() -> tuple[str, ...]:
    return tuple(sorted(MODEL_BUILDERS))


def build_model(
    name: str,
    overrides: dict[str, float] | None = None,
    dt0: float | Sequence[float] | None = None,
    capabilities: Sequence[Capabilities] | None = None,
) -> BenchmarkModel:
    """Build a registered model, overriding individual parameters by name."""
    if name not in MODEL_BUILDERS:
        raise ConfigError(
            f"unknown model {name!r}; available: {', '.join(available_models())}"
        )
    params_cls, builder = MODEL_BUILDERS[name]
    params = params_cls()
    if overrides:
        valid = {f.name: f for f in dataclasses.fields(params_cls)}
        unknown = sorted(set(overrides) - set(valid))
        if unknown:
            raise ConfigError(
                f"unknown parameter(s) for {name}: {', '.join(unknown)}"
            )
        coerced = {}
        for key, value in overrides.items():
            if valid[key].type in ("int", int):
                coerced[key] = int(round(float(value)))
            else:
                coerced[key] = float(value)
        params = dataclasses.replace(params, **coerced)
    kwargs = {}
    if dt0 is not None:
        kwargs["dt0"] = dt0
    if capabilities is not None:
        kwargs["capabilities"] = capabilities
    return builder(params, **kwargs)


def _dt0_tuple(dt0: float | Sequence[float], n: int) -> tuple[float, ...]:
    if isinstance(dt0, (int, float)):
        return (float(dt0),) * n
    t = tuple(float(v) for v in dt0)
    if len(t) != n:
        raise ConfigError(f"expected {n} dt0 values, got {len(t)}")
    return t


def _caps_tuple(
    caps: Sequence[Capabilities] | None, n: int
) -> tuple[Capabilities, ...]:
    if caps is None:
        return tuple(Capabilities() for _ in range(n))
    t = tuple(caps)
    if len(t) != n:
        raise ConfigError(f"expected {n} capability entries, got {len(t)}")
    return t


# ----------------------------------------------------------------- reference

@dataclass(frozen=True)
class ReferenceSolution:
    """Monolithic solution sampled on a regular grid."""

    t: tuple[float, ...]
    series: dict[tuple[str, int], tuple[float, ...]]
    micro_step: float
    scheme: str


_REFERENCE_CACHE: dict[tuple, ReferenceSolution] = {}


def monolithic_reference(
    model: BenchmarkModel,
    micro_step: float = 1e-4,
    record_dt: float = 1e-2,
    scheme: str = "rk4",
) -> ReferenceSolution:
    """Integrate the monolithic twin tightly; results are cached per session.

    record_dt must be an integer multiple of micro_step; the horizon must be
    an integer multiple of record_dt (both hold for every registered model
    at the defaults).  scheme is "rk4" or "rk2" — the latter exists to
    cross-check recorded values with an unrelated discretization.
    """
    key = (model.name, model.params, micro_step, record_dt, scheme)
    hit = _REFERENCE_CACHE.get(key)
    if hit is not None:
        return hit

    t0 = model.problem.t_init
    t_end = model.problem.t_end
    n_steps = round((t_end - t0) / micro_step)
    if abs(t0 + n_steps * micro_step - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ConfigError("horizon is not a multiple of the reference step")
    stride = round(record_dt / micro_step)
    if stride < 1 or abs(stride * micro_step - record_dt) > 1e-12:
        raise ConfigError("record_dt must be a multiple of micro_step")
    if scheme not in ("rk4", "rk2"):
        raise ConfigError(f"unknown reference scheme {scheme!r}")

    rhs = model.monolith_rhs
    x = list(model.monolith_x0)
    nx = len(x)
    keys = sorted(model.output_map)
    getters = [model.output_map[k] for k in keys]

    ts = [t0]
    cols: list[list[float]] = [[fn(t0, x)] for fn in getters]

    rk4 = scheme == "rk4"
    for i in range(n_steps):
        t = t0 + i * micro_step
        h = micro_step
        if rk4:
            half = 0.5 * h
            k1 = rhs(t, x)
            k2 = rhs(t + half, [x[j] + half * k1[j] for j in range(nx)])
            k3 = rhs(t + half, [x[j] + half * k2[j] for j in range(nx)])
            k4 = rhs(t + h, [x[j] + h * k3[j] for j in range(nx)])
            sixth = h / 6.0
            x = [
                x[j] + sixth * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j])
                for j in range(nx)
            ]
        else:
            half = 0.5 * h
            k1 = rhs(t, x)
            k2 = rhs(t + half, [x[j] + half * k1[j] for j in range(nx)])
            x = [x[j] + h * k2[j] for j in range(nx)]
        if (i + 1) % stride == 0 or i + 1 == n_steps:
            t_rec = t0 + (i + 1) * micro_step
            ts.append(t_rec)
            for col, fn in zip(cols, getters):
                col.append(fn(t_rec, x))

    ref = ReferenceSolution(
        t=tuple(ts),
        series={k: tuple(c) for k, c in zip(keys, cols)},
        micro_step=micro_step,
        scheme=scheme,
    )
    _REFERENCE_CACHE[key] = ref
    return ref
