import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import Polynomial

import kinbench as kb
from kinbench.errors import (
    NoViolationAtPoint,
    OrderTooLow,
    PreconditionViolated,
    ShapeError,
)
from kinbench.expressions import CompiledExpression as CE
from kinbench.generator import DomainSpec, GeneratorSpec
from kinbench.pawula import (
    TruncatedOperator,
    apply_operator,
    cube_test,
    maximum_principle_check,
    pawula_counterexample,
    scan_certificate,
    second_order_sign_check,
)


# ---------------------------------------------------------------------------
# discrete maximum principle
# ---------------------------------------------------------------------------

def test_max_principle_symmetric_chain():
    assert maximum_principle_check(np.array([[-1.0, 1.0], [1.0, -1.0]])).passed


def test_max_principle_asymmetric_chain():
    assert maximum_principle_check(np.array([[-1.0, 1.0], [2.0, -2.0]])).passed


def test_max_principle_central_differencing_fails():
    # 3-node central scheme for pure drift b=1: negative west coefficient
    dx = 1.0
    Q = np.zeros((3, 3))
    Q[1, 0] = -1.0 / (2 * dx)
    Q[1, 2] = 1.0 / (2 * dx)
    rep = maximum_principle_check(Q)
    assert not rep.passed
    assert rep.worst_entry[2] == pytest.approx(-0.5)


def test_max_principle_shape_error():
    with pytest.raises(ShapeError):
        maximum_principle_check(np.zeros((2, 3)))


def test_max_principle_holds_for_assembled_chains(a2a201):
    assert maximum_principle_check(a2a201.Q).passed


# ---------------------------------------------------------------------------
# counterexample construction
# ---------------------------------------------------------------------------

def test_certificate_matches_hand_computation():
    op = TruncatedOperator(3, {2: 1.0, 3: 1.0})
    cert = pawula_counterexample(op, 0.0, epsilon=0.1, amplitude=0.1)
    assert cert.value == pytest.approx(0.4, rel=1e-12)
    assert cert.validity_radius == pytest.approx(1.0, rel=1e-12)
    xs = np.linspace(-1.0, 1.0, 41)
    assert np.all(cert.g(xs) <= 1e-15)


def test_certificate_default_amplitude_even_order():
    op = TruncatedOperator(4, {4: -1.0})
    cert = pawula_counterexample(op, 0.0)
    assert cert.amplitude < 0
    assert cert.value == pytest.approx(24 * abs(cert.amplitude), rel=1e-12)
    assert math.isinf(cert.validity_radius)  # -|a| u^2 (u^2 - eps/|a|)... <= 0 everywhere


def test_certificate_reevaluates_through_apply_path():
    op = TruncatedOperator(3, {2: lambda x: 1 + x**2, 3: lambda x: np.cos(x)})
    cert = pawula_counterexample(op, 0.5)
    val = apply_operator(op, cert.polynomial(), 0.5)
    assert val == pytest.approx(cert.value, rel=1e-9)


def test_certificate_local_maximum():
    op = TruncatedOperator(5, {2: 2.0, 5: 1.0})
    cert = pawula_counterexample(op, 1.0)
    d = min(cert.validity_radius, 1.0) / 7
    assert cert.g(np.array([1.0]))[0] == 0.0
    assert cert.g(np.array([1.0 - d]))[0] < 0
    assert cert.g(np.array([1.0 + d]))[0] < 0


def test_order_too_low():
    with pytest.raises(OrderTooLow):
        pawula_counterexample(TruncatedOperator(2, {2: 1.0}), 0.0)


def test_no_violation_where_leading_term_vanishes():
    op = TruncatedOperator(3, {2: 1.0, 3: lambda x: x})
    with pytest.raises(NoViolationAtPoint):
        pawula_counterexample(op, 0.0)
    cert = scan_certificate(op, np.linspace(-1, 1, 5))
    assert cert is not None  # first nonzero point wins


def test_bad_amplitude_rejected():
    op = TruncatedOperator(3, {3: 1.0})
    with pytest.raises(PreconditionViolated):
        pawula_counterexample(op, 0.0, amplitude=-1.0)


def test_zeroth_order_term_rejected():
    with pytest.raises(PreconditionViolated):
        TruncatedOperator(2, {0: 1.0, 2: 1.0})


def test_nd_mixed_certificate():
    # third-order mixed term in two dimensions
    op = TruncatedOperator(3, {(2, 1): 1.0, (2, 0): 1.0, (0, 2): 1.0},
                           dimension=2)
    cert = pawula_counterexample(op, np.array([0.0, 0.0]))
    assert cert.value > 0
    assert cert.multi_index == ((0, 2), (1, 1))
    assert 0 < cert.validity_radius < np.inf
    # witness is nonpositive on sampled directions within the radius
    rng = np.random.default_rng(0)
    dirs = rng.standard_normal((200, 2))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    pts = 0.9 * cert.validity_radius * dirs
    assert np.all(cert.g(pts) <= 1e-12)


# ---------------------------------------------------------------------------
# second-order sign check and the cube characterization
# ---------------------------------------------------------------------------

def test_sign_check_catalog_examples():
    xs = np.linspace(-10, 10, 101)
    ok, worst = second_order_sign_check(
        TruncatedOperator(2, {1: lambda x: -x, 2: lambda x: 1 + x**2}), xs)
    assert ok and worst >= 1.0

    ok, worst = second_order_sign_check(TruncatedOperator(2, {2: -1.0}), xs)
    assert not ok and worst == -1.0

    xs_half = np.linspace(1e-6, 20, 101)
    ok, worst = second_order_sign_check(
        TruncatedOperator(2, {1: lambda x: 1 - x, 2: lambda x: x**2}), xs_half)
    assert ok and worst >= 0.0


def test_sign_check_generator_spec():
    spec, _ = kb.catalog_example("appendix2a", 1.0)
    ok, worst = second_order_sign_check(spec, np.linspace(-10, 10, 51))
    assert ok and worst == pytest.approx(1.0)


def test_cube_vanishes_for_ou():
    spec, _ = kb.catalog_example("ornstein-uhlenbeck")
    val = cube_test(spec, CE("x"), 0.0)
    assert val == 0.0


def test_cube_vanishes_for_quadratic_diffusion():
    spec, _ = kb.catalog_example("appendix2a", 1.0)
    val = cube_test(spec, lambda x: np.sin(x), 0.0)
    assert abs(val) <= 1e-10


def test_cube_flags_third_order_term():
    op = TruncatedOperator(3, {3: 1.0})
    val = cube_test(op, Polynomial([0.0, 1.0]), 0.0)
    assert val == pytest.approx(6.0, rel=1e-9)


def test_cube_precondition():
    spec, _ = kb.catalog_example("ornstein-uhlenbeck")
    with pytest.raises(PreconditionViolated):
        cube_test(spec, CE("x + 1"), 0.0)


# ---------------------------------------------------------------------------
# property batteries
# ---------------------------------------------------------------------------

@st.composite
def higher_order_ops(draw):
    k = draw(st.sampled_from([3, 4, 5]))
    c2 = draw(st.floats(-3.0, 3.0))
    ck = draw(st.one_of(st.floats(-4.0, -0.05), st.floats(0.05, 4.0)))
    x0 = draw(st.floats(-2.0, 2.0))
    return k, c2, ck, x0


@given(higher_order_ops())
def test_every_higher_order_term_is_witnessed(params):
    k, c2, ck, x0 = params
    op = TruncatedOperator(k, {2: c2, k: ck})
    cert = pawula_counterexample(op, x0)
    assert cert.value >= 1.0 - 1e-12  # default amplitude guarantees this
    val = apply_operator(op, cert.polynomial(), x0)
    assert val == pytest.approx(cert.value, rel=1e-8, abs=1e-10)


@given(st.floats(0.0, 3.0), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_admissible_second_order_has_no_certificate(c2_floor, c1, x0):
    op = TruncatedOperator(2, {1: c1, 2: lambda x: c2_floor + x**2})
    ok, _ = second_order_sign_check(op, np.linspace(-3, 3, 31))
    assert ok
    with pytest.raises(OrderTooLow):
        scan_certificate(op, np.linspace(-3, 3, 31))


@given(st.floats(-1.5, 1.5), st.floats(0.1, 2.0), st.floats(-1.0, 1.0),
       st.floats(-1.0, 1.0))
def test_cube_identity_random_battery(x0, a0, b0, slope):
    spec = GeneratorSpec(
        1,
        lambda x: a0 + 0.5 * np.sin(x) ** 2,
        lambda x: b0 + 0.3 * np.asarray(x, dtype=float),
        DomainSpec("full-line", ((-5.0, 5.0),)),
    )
    A = Polynomial([-x0, 1.0]) * Polynomial([1.0, slope, 0.25])
    val = cube_test(spec, A, x0, dA=A.deriv(1), d2A=A.deriv(2))
    assert abs(val) <= 1e-10
