import numpy as np
import pytest
from scipy.linalg import expm
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from obsvkit.batteries import triple_cross_residual
from obsvkit.dynamics import (
    GRAVITY,
    ImuInput,
    camera_observe,
    drift_field,
    feature_in_imu,
    gyro_field,
    lidar_observe,
    named_field,
)
from obsvkit.errors import ChartExitError, JacobianDomainError
from obsvkit.lie import (
    InputSchedule,
    Segment,
    flow,
    flow_jacobian,
    flow_with_jacobian,
    iterated_lie_derivative,
    lie_bracket,
    lie_derivative,
    numeric_jacobian,
    pushforward,
)
from obsvkit.observability import projection_jacobian, structural_blocks
from obsvkit.state import PI, V, cgr_rotation, skew
from oracles import five_point_jacobian, random_state


def _schedule(rng, total=1.0):
    segs = tuple((rng.uniform(0.2, 0.5), ImuInput(rng.uniform(-1, 1, 3), rng.uniform(-5, 5, 3))) for _ in range(3))
    return InputSchedule(segs).scaled_to(total)


def test_jacobian_of_constant_and_linear_maps(rng):
    x = random_state(rng, 2)
    c = rng.normal(size=4)
    assert np.abs(numeric_jacobian(lambda y: np.broadcast_to(c, y.shape[:-1] + (4,)), x)).max() <= 1e-10
    A = rng.normal(size=(5, x.size))
    np.testing.assert_allclose(numeric_jacobian(lambda y: y @ A.T, x), A, atol=1e-8)


def test_camera_jacobian_matches_closed_form(rng):
    for _ in range(10):
        x = random_state(rng, 2)
        b = structural_blocks(x, 1)
        an = b.Hc @ b.K
        fd = numeric_jacobian(lambda y: camera_observe(y, 1), x)
        assert np.linalg.norm(fd - an) <= 1e-6 * np.linalg.norm(an)


def test_domain_errors_are_wrapped():
    x = np.zeros(18)
    x[15:] = [0.0, 0.0, 2e-3]  # stencil crosses the minimum depth
    with pytest.raises(JacobianDomainError):
        numeric_jacobian(lambda y: camera_observe(y, 0), x, step=5e-3)


def test_lidar_drift_derivative_matches_hand_form(rng):
    # d/dt C (p_f - p_I) under the drift = [b_g x] p - C v
    for _ in range(10):
        x = random_state(rng, 1)
        p = feature_in_imu(x, 0)
        expected = skew(x[3:6]) @ p - cgr_rotation(x[0:3]) @ x[V]
        got = lie_derivative(lambda y: lidar_observe(y, 0), drift_field)(x)
        np.testing.assert_allclose(got, expected, atol=1e-8)
        np.testing.assert_allclose(structural_blocks(x, 0, mode="lins").K @ drift_field(x), expected, atol=1e-12)


def test_lie_derivative_of_constant_is_zero(rng):
    x = random_state(rng, 1)
    F = lie_derivative(lambda y: np.ones(y.shape[:-1] + (2,)), drift_field)
    assert np.abs(F(x)).max() == 0.0


def test_iterated_derivatives_are_deterministic(rng):
    x = random_state(rng, 1)
    fields = [named_field("w0"), named_field("w1")]
    F = iterated_lie_derivative(lambda y: lidar_observe(y, 0), fields)
    assert np.array_equal(F(x), F(x))


def test_ad_and_fd_lie_derivatives_agree(rng):
    x = random_state(rng, 2)
    h = lambda y: camera_observe(y, 0)  # noqa: E731
    fd = lie_derivative(h, drift_field, "fd")(x)
    ad = lie_derivative(h, drift_field, "ad")(x)
    np.testing.assert_allclose(fd, ad, rtol=1e-8, atol=1e-10)


def test_bracket_of_constant_fields_vanishes(rng):
    x = random_state(rng, 1)
    a, b = rng.normal(size=x.size), rng.normal(size=x.size)
    f = lambda y: np.broadcast_to(a, y.shape).copy()  # noqa: E731
    g = lambda y: np.broadcast_to(b, y.shape).copy()  # noqa: E731
    assert np.abs(lie_bracket(f, g, x)).max() <= 1e-9
    assert np.abs(lie_bracket(drift_field, drift_field, x)).max() == 0.0


def test_gyro_bracket_matches_fourth_order_oracle(rng):
    for _ in range(5):
        x = random_state(rng, 1)
        f, g = (lambda y: gyro_field(y, 0)), (lambda y: gyro_field(y, 1))
        oracle = five_point_jacobian(g, x) @ f(x) - five_point_jacobian(f, x) @ g(x)
        np.testing.assert_allclose(lie_bracket(f, g, x), oracle, atol=1e-8)


def test_bracket_antisymmetry_and_bilinearity(rng):
    x = random_state(rng, 2)
    f0, w1, a2 = named_field("f0"), named_field("w1"), named_field("a2")
    assert np.linalg.norm(lie_bracket(f0, w1, x) + lie_bracket(w1, f0, x)) <= 1e-8
    combo = lambda y: 2.0 * w1(y) - 3.0 * a2(y)  # noqa: E731
    lhs = lie_bracket(f0, combo, x)
    rhs = 2.0 * lie_bracket(f0, w1, x) - 3.0 * lie_bracket(f0, a2, x)
    assert np.linalg.norm(lhs - rhs) <= 1e-8


@given(*(arrays(np.float64, 3, elements=st.floats(-10, 10)) for _ in range(3)))
def test_triple_cross_identity(a, b, c):
    scale = (1 + np.abs(a).max()) * (1 + np.abs(b).max()) * (1 + np.abs(c).max())
    assert triple_cross_residual(a, b, c) <= 1e-13 * scale


def test_triple_cross_identity_battery(rng):
    worst = max(triple_cross_residual(*rng.normal(size=(3, 3))) for _ in range(1000))
    assert worst <= 1e-13


def test_flow_fixed_point():
    x = np.zeros(18)
    x[PI] = [1.0, 2.0, 3.0]
    x[15:] = [4.0, 5.0, 6.0]
    sched = InputSchedule(((0.5, ImuInput.zero()),))
    assert np.array_equal(flow(x, sched, g=np.zeros(3)), x)


def test_flow_ballistic(rng):
    x = random_state(rng, 1)
    x[3:6] = 0.0
    x[9:12] = 0.0
    v0, p0 = x[V].copy(), x[PI].copy()
    for t in (0.3, 1.0):
        out = flow(x, InputSchedule(((t, ImuInput.zero()),)))
        np.testing.assert_allclose(out[V], v0 + GRAVITY * t, atol=1e-9)
        np.testing.assert_allclose(out[PI], p0 + v0 * t + 0.5 * GRAVITY * t * t, atol=1e-9)


def test_flow_fourth_order_convergence(rng):
    # successive endpoint changes shrink at the fourth-order rate; the ratio
    # approaches 1/16 from either side depending on the next error term
    x = random_state(rng, 1)
    for _ in range(3):
        sched = _schedule(rng)
        a, b, c = (flow(x, sched, dt=dt) for dt in (0.02, 0.01, 0.005))
        first, second = np.linalg.norm(b - a), np.linalg.norm(c - b)
        assert np.log2(first / second) >= 3.5


def test_segments_align_exactly():
    sched = InputSchedule(((0.3, ImuInput.zero()), (0.25, ImuInput.zero())))
    assert sched.duration == 0.55
    assert InputSchedule(sched.scaled_to(1.0).segments).duration == pytest.approx(1.0, abs=1e-15)
    assert sched.truncated(0.4).duration == pytest.approx(0.4)
    with pytest.raises(ValueError):
        InputSchedule(((0.0, ImuInput.zero()),))
    with pytest.raises(ValueError):
        Segment(1.0, ImuInput.zero()) and InputSchedule(((-1.0, ImuInput.zero()),))


def test_flow_leaves_chart():
    x = np.zeros(18)
    x[15:] = [0, 0, 3.0]
    fast = InputSchedule(((1.0, ImuInput([20.0, 0, 0], [0, 0, 0])),))
    with pytest.raises(ChartExitError):
        flow(x, fast, dt=1e-2)


def test_flow_jacobian_trivial_cases(rng):
    x = random_state(rng, 1)
    tiny = InputSchedule(((1e-9, ImuInput(rng.normal(size=3), rng.normal(size=3))),))
    np.testing.assert_allclose(flow_jacobian(x, tiny), np.eye(x.size), atol=1e-8)
    # at a rest point the flow is the identity but its Jacobian is exp(Df t):
    # a gyro-bias error still turns the attitude and a velocity error still moves p_I
    z = np.zeros(18)
    z[PI] = [1.0, -2.0, 0.5]
    z[15:] = [0.3, 0.1, 4.0]
    still = InputSchedule(((0.5, ImuInput.zero()),))
    g0 = np.zeros(3)
    xt, M = flow_with_jacobian(z, still, g=g0, dt=0.05)
    assert np.array_equal(xt, z)
    Df = numeric_jacobian(lambda y: drift_field(y, g0), z)
    np.testing.assert_allclose(M, expm(0.5 * Df), atol=1e-12)
    np.testing.assert_array_equal(M[:, 12:], np.eye(18)[:, 12:])


def test_flow_jacobian_matches_differenced_flow(rng):
    x = random_state(rng, 1)
    sched = _schedule(rng, 0.3)
    M = flow_jacobian(x, sched, dt=0.01)
    h = 1e-5
    fd = np.column_stack([
        (flow(x + h * e, sched, dt=0.01) - flow(x - h * e, sched, dt=0.01)) / (2 * h) for e in np.eye(x.size)
    ])
    assert np.abs(M - fd).max() <= 1e-5 * np.abs(fd).max()


def test_pushforward_composes(rng):
    x = random_state(rng, 1)
    sched = _schedule(rng, 0.4)
    first = sched.truncated(0.15)
    second = InputSchedule(
        tuple(Segment(seg.duration, seg.u) for seg in _tail(sched, 0.15).segments)
    )
    x1, M1 = flow_with_jacobian(x, first, dt=0.01)
    x2, M2 = flow_with_jacobian(x1, second, dt=0.01)
    _, M = flow_with_jacobian(x, sched, dt=0.01)
    assert np.abs(M2 @ M1 - M).max() <= 1e-6 * np.abs(M).max()
    v = rng.normal(size=x.size)
    pushed, xt = pushforward(x, sched, v, dt=0.01)
    np.testing.assert_allclose(pushed, M @ v, atol=1e-12)


def _tail(sched, t):
    out, left = [], t
    for seg in sched.segments:
        if left >= seg.duration:
            left -= seg.duration
            continue
        out.append(Segment(seg.duration - left, seg.u))
        left = 0.0
    return InputSchedule(tuple(out))


def test_projection_jacobian_on_axis():
    np.testing.assert_array_equal(projection_jacobian(np.array([0.0, 0.0, 1.0])), [[1, 0, 0], [0, 1, 0]])
