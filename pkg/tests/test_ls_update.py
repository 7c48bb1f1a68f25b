import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_batch, small_nets
from dlsddpg.errors import DimensionMismatch
from dlsddpg.ls_update import (
    RegCoeffState,
    actor_lr_update,
    actor_normal_equations,
    critic_lr_update,
    critic_normal_equations,
    normalized_norm,
    update_coeffs,
)
from dlsddpg.network import BoxBounds, actor_forward, critic_forward, critic_targets
from dlsddpg.numerics import make_rng
from oracles import anchored_actor_oracle, ridge_oracle


def test_normalized_norm():
    assert normalized_norm(np.array([[3.0, 4.0]])) == pytest.approx(np.sqrt(12.5))
    assert normalized_norm(np.full((5, 7), -2.0)) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        normalized_norm(np.zeros((0, 3)))


# ------------------------------------------------------------- scheduler


def test_initial_values():
    st_ = RegCoeffState()
    assert st_.values() == (0.01, 0.01, 0.01, 0.01)
    assert st_.in_range()


def test_decay_then_floor():
    st_ = RegCoeffState()
    seen = []
    for _ in range(60):
        st_ = update_coeffs(st_, 0.5, 5.0)
        seen.append(st_.beta_a)
    assert seen[0] == pytest.approx(0.0095)
    assert seen[1] == pytest.approx(0.009025)
    # 0.01 * 0.95^k drops below 0.001 at k = 45
    assert seen[43] > 0.001 and seen[44] == 0.001 and seen[-1] == 0.001


def test_reset_is_strictly_above_threshold():
    st_ = update_coeffs(RegCoeffState(), 0.5, 5.0)
    assert update_coeffs(st_, 1.0, 10.0).values() == pytest.approx((0.009025,) * 4)
    assert update_coeffs(st_, 1.0 + 1e-12, 5.0).values()[:2] == (0.01, 0.01)
    assert update_coeffs(st_, 0.5, 10.0 + 1e-12).values()[2:] == (0.01, 0.01)


def test_update_is_pure():
    st_ = RegCoeffState()
    update_coeffs(st_, 0.1, 0.1)
    assert st_.values() == (0.01,) * 4


def test_fixed_pairs_do_not_move():
    st_ = RegCoeffState(fixed_critic=0.05, fixed_actor=0.0)
    assert st_.values() == (0.0, 0.0, 0.05, 0.05)
    for n in (0.1, 50.0, 0.1):
        st_ = update_coeffs(st_, n, n)
        assert st_.values() == (0.0, 0.0, 0.05, 0.05)
        assert st_.in_range()


def test_nonfinite_norm_rejected():
    with pytest.raises(ValueError):
        update_coeffs(RegCoeffState(), np.nan, 1.0)


def reference_schedule(n_thetas, n_phis):
    """Straight-line recomputation of the schedule, pair by pair."""
    ba = bc = 0.01
    out = []
    for nt, nphi in zip(n_thetas, n_phis):
        ba = 0.01 if nt > 1.0 else max(0.95 * ba, 0.001)
        bc = 0.01 if nphi > 10.0 else max(0.95 * bc, 0.001)
        out.append((ba, ba, bc, bc))
    return out


@settings(max_examples=100)
@given(st.lists(st.tuples(st.floats(0, 3), st.floats(0, 30)), min_size=1, max_size=80))
def test_schedule_property(norms):
    st_ = RegCoeffState()
    ref = reference_schedule([n[0] for n in norms], [n[1] for n in norms])
    for (nt, nphi), expected in zip(norms, ref):
        st_ = update_coeffs(st_, nt, nphi)
        assert st_.values() == expected
        assert st_.in_range()


def test_replace_keeps_current_values():
    st_ = update_coeffs(RegCoeffState(), 0.1, 0.1)
    assert dataclasses.replace(st_).values() == st_.values()


# ------------------------------------------------------------- critic


def test_critic_normal_equations_form():
    x = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    y = np.array([1.0, 0.0, -1.0])
    a, b = critic_normal_equations(x, y, 0.1)
    np.testing.assert_allclose(a, x.T @ x + 0.3 * np.eye(2))
    np.testing.assert_allclose(b, [-4.0, -4.0])


@pytest.mark.parametrize("seed", range(8))
def test_critic_lr_matches_ridge_oracle(seed):
    actor, critic, rng = small_nets(seed, ds=3, da=1, hidden=12)
    bounds = BoxBounds([-1.0], [1.0])
    mb = random_batch(rng, 200, 3, 1)
    beta = [0.001, 0.01, 0.1][seed % 3]
    new = critic_lr_update(critic, actor, critic, mb, 0.99, beta, bounds)
    _, feats = critic_forward(critic, mb.s, mb.a)
    y = critic_targets(actor, critic, mb, 0.99, bounds)
    ref = ridge_oracle(feats, y, beta)
    assert np.max(np.abs(new.w_out - ref)) <= 1e-9 * max(1.0, np.abs(ref).max())
    np.testing.assert_array_equal(new.w_s_in, critic.w_s_in)
    np.testing.assert_array_equal(new.w_a_in, critic.w_a_in)
    assert new.w_s_in is not critic.w_s_in


def test_critic_lr_without_ridge_fits_exact_targets():
    # with more samples than features and consistent targets, the ridge-free solve interpolates
    actor, critic, rng = small_nets(0, ds=3, da=1, hidden=5)
    bounds = BoxBounds([-1.0], [1.0])
    mb = random_batch(rng, 100, 3, 1)
    mb.d[:] = 1.0
    _, feats = critic_forward(critic, mb.s, mb.a)
    w_true = rng.normal(size=6)
    mb.r[:] = feats @ w_true
    new = critic_lr_update(critic, actor, critic, mb, 0.99, 0.0, bounds)
    np.testing.assert_allclose(new.w_out[0], w_true, rtol=1e-8)


# ------------------------------------------------------------- actor


def test_actor_normal_equations_form():
    rng = make_rng(0)
    x_lr, x_mb = rng.normal(size=(4, 3)), rng.normal(size=(6, 3))
    o, theta = rng.normal(size=(4, 2)), rng.normal(size=(2, 3))
    a, b = actor_normal_equations(x_lr, o, x_mb, theta, 2.0, 0.01)
    anchor = x_mb.T @ x_mb + 0.06 * np.eye(3)
    np.testing.assert_allclose(a, x_lr.T @ x_lr + 2.0 * anchor)
    np.testing.assert_allclose(b, o.T @ x_lr + 2.0 * theta @ anchor)


@pytest.mark.parametrize("seed", range(8))
def test_actor_lr_matches_penalized_oracle(seed):
    actor, _, rng = small_nets(seed, ds=3, da=2, hidden=10)
    mb = random_batch(rng, 150, 3, 2)
    states = rng.normal(size=(40, 3))
    o = rng.uniform(-1, 1, size=(40, 2))
    new = actor_lr_update(actor, [(s, a) for s, a in zip(states, o)], mb, 2.0, 0.01)
    _, x_lr = actor_forward(actor, states)
    _, x_mb = actor_forward(actor, mb.s)
    ref = anchored_actor_oracle(x_lr, o, x_mb, actor.w_out, 2.0, 0.01)
    assert np.max(np.abs(new.w_out - ref)) <= 1e-6
    a, b = actor_normal_equations(x_lr, o, x_mb, actor.w_out, 2.0, 0.01)
    assert np.linalg.norm(new.w_out @ a - b) <= 1e-8 * np.linalg.norm(b)
    np.testing.assert_array_equal(new.w_in, actor.w_in)


def test_actor_lr_accepts_array_tuple():
    actor, _, rng = small_nets(2, ds=3, da=2, hidden=6)
    mb = random_batch(rng, 50, 3, 2)
    states, o = rng.normal(size=(10, 3)), rng.normal(size=(10, 2))
    a = actor_lr_update(actor, (states, o), mb, 2.0, 0.01)
    b = actor_lr_update(actor, list(zip(states, o)), mb, 2.0, 0.01)
    np.testing.assert_array_equal(a.w_out, b.w_out)


def test_actor_lr_huge_anchor_keeps_weights():
    actor, _, rng = small_nets(3, ds=3, da=1, hidden=6)
    mb = random_batch(rng, 50, 3, 1)
    new = actor_lr_update(actor, (rng.normal(size=(5, 3)), rng.normal(size=(5, 1))), mb, 1e9, 0.01)
    np.testing.assert_allclose(new.w_out, actor.w_out, atol=1e-6)


def test_actor_lr_fits_targets_reachable_by_current_features():
    # if O is exactly produced by the current weights, the solution is the current weights
    actor, _, rng = small_nets(4, ds=3, da=2, hidden=6)
    mb = random_batch(rng, 50, 3, 2)
    states = rng.normal(size=(30, 3))
    o, _ = actor_forward(actor, states)
    new = actor_lr_update(actor, (states, o), mb, 2.0, 0.01)
    np.testing.assert_allclose(new.w_out, actor.w_out, atol=1e-9)


def test_actor_lr_rejects_mismatch():
    actor, _, rng = small_nets(0, ds=3, da=2, hidden=4)
    mb = random_batch(rng, 10, 3, 2)
    with pytest.raises(DimensionMismatch):
        actor_lr_update(actor, (rng.normal(size=(5, 3)), rng.normal(size=(5, 1))), mb, 2.0, 0.01)
    with pytest.raises(ValueError):
        actor_lr_update(actor, [], mb, 2.0, 0.01)


def test_normalized_norm_listed_cases():
    assert normalized_norm(np.ones((4, 4))) == 1.0
    assert normalized_norm(np.zeros((3, 3))) == 0.0
    w = make_rng(0).normal(size=(8, 3))
    total = 0.0
    for v in w.ravel():
        total += v * v
    assert normalized_norm(w) == pytest.approx((total / 24) ** 0.5, rel=1e-12)


def test_schedule_listed_cases():
    floor = RegCoeffState(beta_a=0.001, beta_a_prime=0.001)
    assert update_coeffs(floor, 2.0, 0.0).beta_a == 0.01
    assert update_coeffs(RegCoeffState(), 0.5, 0.0).beta_a == pytest.approx(0.0095)
    assert update_coeffs(RegCoeffState(beta_a=0.00102), 0.5, 0.0).beta_a == 0.001


def test_critic_lr_terminal_batch_is_ridge_on_rewards():
    actor, critic, rng = small_nets(6, ds=3, da=1, hidden=7)
    bounds = BoxBounds([-1.0], [1.0])
    mb = random_batch(rng, 60, 3, 1)
    mb.d[:] = 1.0
    new = critic_lr_update(critic, actor, critic, mb, 0.99, 0.01, bounds)
    _, feats = critic_forward(critic, mb.s, mb.a)
    np.testing.assert_allclose(new.w_out, ridge_oracle(feats, mb.r, 0.01), rtol=1e-9, atol=1e-12)


def test_critic_lr_hand_built_h2_n5():
    from dlsddpg.network import CriticParams, ActorParams, Minibatch
    from oracles import gauss_jordan_inverse

    critic = CriticParams(
        np.array([[0.5, -0.2, 0.1], [0.3, 0.4, -0.1]]),
        np.array([[0.7], [-0.6]]),
        np.array([[0.2, -0.3, 0.05]]),
    )
    actor = ActorParams(np.array([[0.2, 0.1, 0.0], [-0.3, 0.2, 0.1]]), np.array([[0.5, -0.5, 0.1]]))
    mb = Minibatch(
        s=np.array([[0.1, 0.2], [-0.3, 0.5], [0.7, -0.1], [0.0, 0.0], [1.0, 1.0]]),
        a=np.array([[0.5], [-0.5], [1.0], [0.0], [-1.0]]),
        r=np.array([1.0, -1.0, 0.5, 0.0, 2.0]),
        s_next=np.array([[0.2, 0.2], [-0.2, 0.4], [0.6, 0.0], [0.1, 0.1], [0.9, 1.1]]),
        d=np.array([0.0, 0.0, 1.0, 0.0, 1.0]),
    )
    bounds = BoxBounds([-1.0], [1.0])
    new = critic_lr_update(critic, actor, critic, mb, 0.99, 0.01, bounds)
    _, x = critic_forward(critic, mb.s, mb.a)
    y = critic_targets(actor, critic, mb, 0.99, bounds)
    ref = (y @ x) @ gauss_jordan_inverse(x.T @ x + 0.01 * 5 * np.eye(3))
    assert np.max(np.abs(new.w_out[0] - ref)) <= 1e-9


def test_critic_lr_huge_ridge_shrinks_to_zero():
    actor, critic, rng = small_nets(7, ds=3, da=1, hidden=6)
    bounds = BoxBounds([-1.0], [1.0])
    mb = random_batch(rng, 40, 3, 1)
    new = critic_lr_update(critic, actor, critic, mb, 0.99, 1e6, bounds)
    _, x = critic_forward(critic, mb.s, mb.a)
    b = critic_targets(actor, critic, mb, 0.99, bounds) @ x
    # A >= beta N I, so ||w|| <= ||b|| / (beta N) holds exactly
    assert np.linalg.norm(new.w_out) <= np.linalg.norm(b) / (1e6 * 40) * (1 + 1e-9)
    assert np.linalg.norm(new.w_out) < 1e-5


def test_actor_lr_hand_built_matches_gradient_descent():
    from dlsddpg.network import ActorParams, Minibatch
    from oracles import anchored_actor_gradient_descent

    actor = ActorParams(np.array([[0.8, -0.4, 0.1], [0.3, 0.9, -0.2]]), np.array([[0.4, -0.7, 0.05]]))
    rng = make_rng(77)
    states = rng.uniform(-1, 1, size=(6, 2))
    o = rng.uniform(-1, 1, size=(6, 1))
    mb = Minibatch(rng.uniform(-1, 1, size=(8, 2)), np.zeros((8, 1)), np.zeros(8), np.zeros((8, 2)), np.zeros(8))
    new = actor_lr_update(actor, (states, o), mb, 2.0, 0.01)
    _, x_lr = actor_forward(actor, states)
    _, x_mb = actor_forward(actor, mb.s)
    ref = anchored_actor_gradient_descent(x_lr, o, x_mb, actor.w_out, 2.0, 0.01)
    assert np.max(np.abs(new.w_out - ref)) <= 1e-6
