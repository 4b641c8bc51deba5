import math

import pytest

from f3ornits.errors import ConfigError, ContractViolation, DivergenceError
from f3ornits.poly import Polynomial
from f3ornits.subsystem import (
    Capabilities,
    SubsystemSpec,
    effective_max_degree,
    input_degree_limit,
    micro_step_size,
    step_to,
)


def const_input(v):
    return Polynomial(0.0, (v,))


def make_decay(rate=1.0):
    # x' = -rate * x, y = x
    return SubsystemSpec(
        label="decay",
        n_states=1,
        n_in=0,
        n_out=1,
        f=lambda t, x, u: [-rate * x[0]],
        g=lambda t, x, u: [x[0]],
        x_init=(1.0,),
    )


def make_integrator():
    # x' = u, y = x : integrates its input exactly (RK4 is exact on cubics)
    return SubsystemSpec(
        label="integ",
        n_states=1,
        n_in=1,
        n_out=1,
        f=lambda t, x, u: [u[0]],
        g=lambda t, x, u: [x[0]],
        x_init=(0.0,),
    )


# -------------------------------------------------------------- capabilities

def test_capability_validation():
    with pytest.raises(ConfigError):
        Capabilities(max_input_degree=-1)
    with pytest.raises(ConfigError):
        Capabilities(imposed_step=0.0, variable_step=False)
    with pytest.raises(ConfigError):
        Capabilities(imposed_step=0.5, variable_step=True)
    Capabilities(imposed_step=0.5, variable_step=False)


@pytest.mark.parametrize(
    "m_k,plain,hard",
    [(0, 0, 0), (1, 1, 1), (2, 2, 2), (3, 2, 3), (7, 2, 3)],
)
def test_degree_ceilings(m_k, plain, hard):
    caps = Capabilities(max_input_degree=m_k)
    assert effective_max_degree(caps) == plain
    assert input_degree_limit(caps) == hard
    assert caps.smoothing_capable == (m_k >= 3)


def test_micro_step_rule():
    assert micro_step_size(0.01) == pytest.approx(0.0002)
    assert micro_step_size(0.05) == pytest.approx(0.001)
    assert micro_step_size(1.0) == 0.001


# ------------------------------------------------------------------- step_to

def test_zero_dynamics_keeps_state():
    spec = SubsystemSpec(
        "still", 2, 0, 1,
        f=lambda t, x, u: [0.0, 0.0],
        g=lambda t, x, u: [x[0] + x[1]],
        x_init=(2.0, 3.0),
    )
    x, res = step_to(spec, Capabilities(), spec.x_init, [], 0.0, 0.7)
    assert x == [2.0, 3.0]
    assert res.t_reached == 0.7
    assert res.outputs == (5.0,)


def test_integrates_cubic_input_exactly():
    # RK4 integrates polynomials of degree <= 3 with zero truncation error
    spec = make_integrator()
    p = Polynomial(0.0, (1.0, -2.0, 3.0, 0.5))
    x, res = step_to(spec, Capabilities(), spec.x_init, [p], 0.0, 0.8)
    exact = 0.8 - 0.8 ** 2 + 0.8 ** 3 + 0.5 * 0.8 ** 4 / 4.0
    assert res.outputs[0] == pytest.approx(exact, rel=1e-12)


def test_decay_accuracy():
    spec = make_decay(2.0)
    x, res = step_to(spec, Capabilities(), spec.x_init, [], 0.0, 1.0)
    assert res.outputs[0] == pytest.approx(math.exp(-2.0), rel=1e-9)


def test_lands_exactly_on_target():
    spec = make_decay()
    # a target that is not an integer multiple of the micro step
    _, res = step_to(spec, Capabilities(), spec.x_init, [], 0.0, 0.0123456789)
    assert res.t_reached == 0.0123456789


def test_determinism_bitwise():
    spec = make_integrator()
    p = Polynomial(0.3, (0.1, 2.0, -1.0))
    a = step_to(spec, Capabilities(), spec.x_init, [p], 0.25, 1.73)
    b = step_to(spec, Capabilities(), spec.x_init, [p], 0.25, 1.73)
    assert a[0] == b[0]
    assert a[1] == b[1]


def test_micro_macro_separation():
    # halving the micro step moves a macro step's outputs by < 1e-7 relative
    spec = make_decay(3.0)
    _, coarse = step_to(spec, Capabilities(), spec.x_init, [], 0.0, 0.5)
    _, fine = step_to(
        spec, Capabilities(), spec.x_init, [], 0.0, 0.5, micro_step=0.0005
    )
    rel = abs(coarse.outputs[0] - fine.outputs[0]) / abs(fine.outputs[0])
    assert rel < 1e-7


def test_no_rollback():
    spec = make_decay()
    with pytest.raises(ValueError):
        step_to(spec, Capabilities(), spec.x_init, [], 1.0, 1.0)
    with pytest.raises(ValueError):
        step_to(spec, Capabilities(), spec.x_init, [], 1.0, 0.5)


def test_input_arity_checked():
    spec = make_integrator()
    with pytest.raises(ContractViolation):
        step_to(spec, Capabilities(), spec.x_init, [], 0.0, 1.0)


def test_degree_over_capability_rejected():
    spec = make_integrator()
    cubic = Polynomial(0.0, (0.0, 0.0, 0.0, 1.0))
    line = Polynomial(0.0, (0.0, 1.0))
    caps1 = Capabilities(max_input_degree=1)
    with pytest.raises(ContractViolation):
        step_to(spec, caps1, spec.x_init, [cubic], 0.0, 1.0)
    step_to(spec, caps1, spec.x_init, [line], 0.0, 1.0)
    # smoothing-capable subsystems accept cubics
    step_to(spec, Capabilities(max_input_degree=3), spec.x_init, [cubic], 0.0, 1.0)


def test_divergence_detected_with_context():
    spec = SubsystemSpec(
        "blow", 1, 0, 1,
        f=lambda t, x, u: [1e160 * x[0]],
        g=lambda t, x, u: [x[0]],
        x_init=(1.0,),
    )
    with pytest.raises(DivergenceError) as exc:
        step_to(spec, Capabilities(), spec.x_init, [], 2.0, 2.5)
    assert exc.value.label == "blow"
    assert exc.value.t_last_good == 2.0


def test_output_arity_checked():
    spec = SubsystemSpec(
        "bad_g", 1, 0, 2,
        f=lambda t, x, u: [0.0],
        g=lambda t, x, u: [x[0]],
        x_init=(0.0,),
    )
    with pytest.raises(ContractViolation):
        step_to(spec, Capabilities(), spec.x_init, [], 0.0, 1.0)


def test_x_init_arity_checked():
    with pytest.raises(ConfigError):
        SubsystemSpec(
            "short", 2, 0, 0,
            f=lambda t, x, u: [0.0, 0.0],
            g=lambda t, x, u: [],
            x_init=(0.0,),
        )
