import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rhnet import detector as det
from rhnet.checks import run_bandit
from rhnet.numeric import Adam, NumericError, ParameterStore, grad_check, rng

D_C, D_H, D_R = 4, 3, 2


def _params(seed=0, scale=1.0):
    p = ParameterStore()
    det.init_detector_params(p, D_C, D_H, D_R, rng(seed, "det"))
    p["detector.W_p"].value = p.value("detector.W_p") * scale
    return p


def _bag(n=4, seed=1):
    g = rng(seed, "bag")
    return g.normal(size=(n, D_C)), g.normal(size=D_R)


def test_dims_and_zero_state():
    p = _params()
    assert det.detector_dims(p) == (D_H, D_C, D_R)
    p["detector.W_q"].value = np.zeros_like(p.value("detector.W_q"))
    st0 = det.EpisodeState.initial(D_H + D_C, D_C)
    assert np.array_equal(det.next_state(st0, np.ones(D_C), np.ones(D_R), p), np.zeros(D_H + D_C))


def test_policy_probabilities():
    p = _params()
    p["detector.W_p"].value = np.zeros((1, D_H + D_C))
    s = np.ones(D_H + D_C)
    assert det.policy_prob(s, 1, p) == 0.5 and det.policy_prob(s, 0, p) == 0.5
    w = np.zeros((1, D_H + D_C))
    w[0, 0] = math.log(9.0)
    p["detector.W_p"].value = w
    s = np.zeros(D_H + D_C)
    s[0] = 1.0
    assert det.policy_prob(s, 1, p) == pytest.approx(0.9)
    assert det.policy_prob(s, 0, p) == pytest.approx(0.1)


def _saturated(sign):
    # no biases: route the sentence's first coordinate through the hidden state
    p = _params()
    W_q = np.zeros((D_H, D_H + D_C + D_C + D_R))
    W_q[0, D_H + D_C] = 50.0
    p["detector.W_q"].value = W_q
    w = np.zeros((1, D_H + D_C))
    w[0, 0] = sign * 50.0
    p["detector.W_p"].value = w
    return p


def test_select_all_and_force_select():
    emb = np.abs(_bag()[0]) + 1.0            # first coordinate positive everywhere
    r = np.zeros(D_R)
    tr, sel = det.run_episode(emb, r, _saturated(+1), mode="greedy")
    assert sel == [0, 1, 2, 3]
    tr, sel = det.run_episode(emb, r, _saturated(-1), mode="greedy")
    assert sel == [int(np.argmax(tr.select_probs))]
    assert tr.actions[sel[0]] == 1
    _, none = det.run_episode(emb, r, _saturated(-1), mode="greedy", force_select=False)
    assert none == []


def test_sample_reproducible():
    emb, r = _bag(6)
    p = _params(scale=100.0)
    a = det.run_episode(emb, r, p, gen=rng(3, "ep"))
    b = det.run_episode(emb, r, p, gen=rng(3, "ep"))
    assert a[0].actions == b[0].actions and a[1] == b[1]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 7))
def test_running_mean_matches_recompute(seed, n):
    emb, r = _bag(n, seed)
    p = _params(seed, scale=100.0)
    tr, sel = det.run_episode(emb, r, p, gen=rng(seed, "ep"), force_select=False)
    for t in range(n):
        x_hat = tr.states[t][D_H:]
        before = list(tr.selected_before[t])
        expect = emb[before].mean(axis=0) if before else np.zeros(D_C)
        assert np.max(np.abs(x_hat - expect)) <= 1e-12
    assert all(0.0 < q < 1.0 for q in tr.select_probs)


def test_reward_examples():
    assert det.reward([0], [1.0]) == 0.0
    assert det.reward([0, 1], [0.5, 0.25]) == pytest.approx(-1.03972, abs=1e-5)
    with pytest.raises(NumericError):
        det.reward([0], [0.0])
    with pytest.raises(ValueError):
        det.reward([], [0.5])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-9, 1.0), min_size=1, max_size=8))
def test_reward_nonpositive(probs):
    assert det.reward(list(range(len(probs))), probs) <= 0.0


def test_policy_gradient_matches_finite_difference():
    emb, r = _bag(5)
    p = _params(scale=50.0)
    actions = [1, 0, 1, 1, 0]
    adv = 0.7

    def loss_fn(q):
        tr, _ = det.run_episode(emb, r, q, actions=actions)
        return -adv * det.log_likelihood(tr), det.policy_gradient(tr, adv, q)
    assert grad_check(loss_fn, p) < 1e-6


def test_input_gradient_matches_finite_difference():
    emb, r = _bag(4)
    p = _params(scale=50.0)
    actions = [1, 1, 0, 1]
    tr, _ = det.run_episode(emb, r, p, actions=actions)
    _, d_in = det.policy_gradient(tr, 1.0, p, input_grad=True)
    h = 1e-6
    for i in range(emb.shape[0]):
        for j in range(D_C):
            e1, e2 = emb.copy(), emb.copy()
            e1[i, j] += h
            e2[i, j] -= h
            f1 = -det.log_likelihood(det.run_episode(e1, r, p, actions=actions)[0])
            f2 = -det.log_likelihood(det.run_episode(e2, r, p, actions=actions)[0])
            assert d_in[i, j] == pytest.approx((f1 - f2) / (2 * h), rel=1e-5, abs=1e-8)


def test_update_zero_advantage_is_noop():
    emb, r = _bag(3)
    p = _params()
    before = {k: v.copy() for k, v in p.values().items()}
    trajs = []
    for s in range(4):
        tr, _ = det.run_episode(emb, r, p, gen=rng(s))
        tr.reward = -0.5
        trajs.append(tr)
    det.reinforce_update(trajs, det.RewardBaseline(0.9, -0.5), Adam(0.1), p)
    assert all(np.array_equal(before[k], v) for k, v in p.values().items())


def test_update_raises_select_probability():
    emb, r = _bag(3)
    p = _params(scale=30.0)
    tr, _ = det.run_episode(emb, r, p, actions=[1, 1, 1])
    tr.reward = 0.0
    before = det.run_episode(emb, r, p, actions=[1, 1, 1])[0].select_probs
    det.reinforce_update([tr], det.RewardBaseline(0.9, -1.0), Adam(0.01), p)
    after = det.run_episode(emb, r, p, actions=[1, 1, 1])[0].select_probs
    assert all(a > b for a, b in zip(after, before))


def test_update_touches_only_detector():
    emb, r = _bag(3)
    p = _params()
    p.add("hrs.W", np.ones(2))
    p["hrs.W"].grad[...] = 5.0
    tr, _ = det.run_episode(emb, r, p, actions=[1, 0, 1])
    tr.reward = 1.0
    det.reinforce_update([tr], det.RewardBaseline(0.9, 0.0), Adam(0.1), p)
    assert np.array_equal(p.value("hrs.W"), np.ones(2))


def test_baseline_ema():
    b = det.RewardBaseline(0.9)
    assert b.current([-1.0, -3.0]) == -2.0
    b.update([-1.0, -3.0])
    b.update([0.0])
    assert b.value == pytest.approx(-1.8)


def test_bandit_learns_and_is_deterministic():
    h = run_bandit()
    assert max(h) > 0.9
    assert run_bandit() == h
