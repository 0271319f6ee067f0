import numpy as np
import pytest

from obsvkit.dynamics import GRAVITY, ImuInput
from obsvkit.lie import InputSchedule
from obsvkit.observability import theoretical_null_basis
from obsvkit.ocvins import (
    coordinate_transfer_check,
    mutated_n4,
    n4,
    rotation_block_consistency,
    theta_coordinate_direction,
    translation_field,
    verify_brackets,
    verify_flow_invariance,
    verify_translation_brackets,
)
from obsvkit.scenario import sample_scenario
from obsvkit.state import PI, S, V, cgr_rotation, feature_slice
from oracles import random_state


def test_n4_at_rest_origin():
    x = np.zeros(18)
    out = n4(x)
    expected = np.zeros(18)
    expected[S] = 0.5 * GRAVITY
    assert np.array_equal(out, expected)


def test_n4_velocity_block_vanishes_along_gravity(rng):
    x = random_state(rng, 2)
    x[V] = 3.0 * GRAVITY / np.linalg.norm(GRAVITY)
    assert np.abs(n4(x)[V]).max() == 0.0


def test_n4_is_fourth_null_column(rng):
    x = random_state(rng, 3)
    assert np.array_equal(n4(x), theoretical_null_basis(x)[:, 3])


def test_n4_blocks(rng):
    x = random_state(rng, 2)
    out = n4(x)
    np.testing.assert_allclose(out[V], -np.cross(x[V], GRAVITY), atol=1e-14)
    np.testing.assert_allclose(out[PI], np.cross(GRAVITY, x[PI]), atol=1e-14)
    np.testing.assert_allclose(out[feature_slice(1)], np.cross(GRAVITY, x[feature_slice(1)]), atol=1e-14)


def test_brackets_vanish(rng):
    for _ in range(20):
        x = random_state(rng, 2)
        rep = verify_brackets(x)
        assert rep.passed and rep.max_residual <= 1e-5


def test_accel_brackets_at_rest():
    x = np.zeros(18)
    x[15:] = [0.0, 0.0, 2.0]
    rep = verify_brackets(x)
    assert max(rep.residuals[f"a{i}"] for i in range(3)) <= 1e-8


def test_mutation_is_detected(rng):
    x = random_state(rng, 2)
    assert np.array_equal(mutated_n4(x)[V], -n4(x)[V])
    assert verify_brackets(x, direction=mutated_n4).max_residual > 1e-2


def test_translation_directions_commute_with_fields(rng):
    x = random_state(rng, 2)
    assert verify_translation_brackets(x).passed
    assert np.array_equal(translation_field(1)(x), theoretical_null_basis(x)[:, 1])


def test_flow_invariance_trivial_cases(rng):
    x = random_state(rng, 2)
    assert verify_flow_invariance(x, None) == 0.0
    still = np.zeros(18)
    still[15:] = [1.0, 2.0, 3.0]
    sched = InputSchedule(((0.5, ImuInput.zero()),))
    assert verify_flow_invariance(still, sched, g=np.zeros(3), dt=0.01) == 0.0


@pytest.mark.parametrize("jacobian", ["ad", "fd"])
def test_flow_invariance_random_scenario(jacobian):
    sc = sample_scenario(9, "vins", 2)
    sched = sc.schedule.scaled_to(0.3)
    assert verify_flow_invariance(sc.x, sched, sc.gravity, dt=2e-3, jacobian=jacobian) <= 1e-5


def test_ad_and_fd_pushforwards_agree():
    sc = sample_scenario(2, "vins", 2)
    sched = sc.schedule.scaled_to(0.2)
    from obsvkit.lie import flow_jacobian

    a = flow_jacobian(sc.x, sched, sc.gravity, 5e-3, jacobian="ad")
    b = flow_jacobian(sc.x, sched, sc.gravity, 5e-3, jacobian="fd")
    assert np.abs(a - b).max() <= 1e-8 * np.abs(a).max()


def test_coordinate_transfer(rng):
    x = np.zeros(18)
    np.testing.assert_allclose(theta_coordinate_direction(x)[S], GRAVITY, atol=1e-15)
    for _ in range(20):
        x = random_state(rng, 2)
        assert coordinate_transfer_check(x) <= 1e-12
        assert rotation_block_consistency(x) <= 1e-12
        moved, base = theta_coordinate_direction(x), n4(x)
        assert np.array_equal(moved[3:], base[3:])
        np.testing.assert_allclose(moved[S], cgr_rotation(x[S]) @ GRAVITY, atol=1e-12)
