import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdpref.nnet import (Adam, ReliabilityNet, RewardNet, flatten, grad_check, load_checkpoint,
                            reliability_forward, reward_forward, save_checkpoint, unflatten)


def test_zero_reward_net_outputs_zero():
    net = RewardNet(6, 3, zero=True)
    assert np.all(net.reward_table() == 0.0)


def test_reward_net_is_pure():
    net = RewardNet(6, 3, rng=np.random.default_rng(0))
    assert reward_forward(net, 2, 1) == reward_forward(net, 2, 1)


def test_linear_net_matches_hand_computation():
    net = RewardNet(3, 2, hidden=(), zero=True)
    net.params["W0"][:, 0] = [0.5, -1.0, 2.0, 3.0, -4.0]
    net.params["b0"][:] = 0.25
    # one-hot(state 1) ++ one-hot(action 0) picks weights -1.0 and 3.0
    assert reward_forward(net, 1, 0) == pytest.approx(-1.0 + 3.0 + 0.25)


def test_reward_net_rejects_bad_inputs():
    net = RewardNet(4, 2)
    with pytest.raises(ValueError):
        net(4, 0)
    with pytest.raises(ValueError):
        net(0, 2)
    with pytest.raises(ValueError):
        net.forward(np.zeros((1, 5)))


def test_init_scale():
    net = RewardNet(40, 4, rng=np.random.default_rng(1))
    assert np.abs(net.params["W0"]).max() <= 1 / np.sqrt(44)
    assert np.abs(net.params["W1"]).max() <= 1 / np.sqrt(64)
    rel = ReliabilityNet(2000, 8, rng=np.random.default_rng(1))
    assert rel.params["embeddings"].std() == pytest.approx(0.1, rel=0.05)


def test_zero_head_gives_half():
    rel = ReliabilityNet(3, 4, zero=True)
    assert reliability_forward(rel, 1, [np.ones(4)] * 3, 0.9) == 0.5


def test_empty_colabels_still_inside_unit_interval():
    rel = ReliabilityNet(3, 4, rng=np.random.default_rng(0))
    a = reliability_forward(rel, 0, [np.zeros(4)] * 3, 0.5)
    assert 0.0 < a < 1.0


def test_reliability_hand_computation():
    rel = ReliabilityNet(2, 1, zero=True)
    rel.params["embeddings"][:, 0] = [0.5, -2.0]
    rel.params["head_w"][:] = [1.0, 2.0, 3.0, 4.0, 5.0]
    rel.params["head_b"][:] = -1.0
    z = 1.0 * -2.0 + 2.0 * 0.1 + 3.0 * 0.2 + 4.0 * 0.3 + 5.0 * 0.6 - 1.0
    got = reliability_forward(rel, 1, [[0.1], [0.2], [0.3]], 0.6)
    assert got == pytest.approx(1.0 / (1.0 + np.exp(-z)), abs=1e-15)
    with pytest.raises(IndexError):
        reliability_forward(rel, 2, [[0.0]] * 3, 0.5)


def test_batched_forward_agrees_with_single():
    rng = np.random.default_rng(3)
    rel = ReliabilityNet(5, 2, rng=rng)
    mats = [sp.csr_matrix(rng.random((4, 5)) * (rng.random((4, 5)) < 0.4)) for _ in range(3)]
    ann = np.array([0, 4, 2, 2])
    p = rng.random(4)
    alpha, _ = rel.forward(ann, mats, p)
    E = rel.params["embeddings"]
    for k in range(4):
        means = [m[k].toarray()[0] @ E for m in mats]
        assert alpha[k] == pytest.approx(reliability_forward(rel, ann[k], means, p[k]), abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(0.0, 1.0))
def test_alpha_in_open_interval(scale, p):
    rel = ReliabilityNet(2, 2, rng=np.random.default_rng(0))
    rel.params["head_w"] *= scale / 100.0
    a = reliability_forward(rel, 0, [np.zeros(2)] * 3, p)
    assert 0.0 <= a <= 1.0 and np.isfinite(a)


def test_grad_check_quadratic_and_constant():
    p = np.random.default_rng(0).standard_normal(30)
    assert grad_check(lambda x: (0.5 * x @ x, x), p) < 1e-8
    assert grad_check(lambda x: (3.0, np.zeros_like(x)), p) == 0.0
    with pytest.raises(FloatingPointError):
        grad_check(lambda x: (np.inf, x), p)
    with pytest.raises(ValueError):
        grad_check(lambda x: (0.0, x), p, h=0.0)


def test_grad_check_catches_wrong_gradient():
    p = np.ones(5)
    assert grad_check(lambda x: (0.5 * x @ x, 2 * x), p) > 0.5


def test_reward_backward_by_finite_differences():
    rng = np.random.default_rng(2)
    net = RewardNet(5, 3, hidden=(7, 4), rng=rng)
    x = net.encode([0, 3, 4, 1], [2, 0, 1, 1])
    w = rng.standard_normal(4)
    names = list(net.params)

    def loss(flat):
        net.params.update(unflatten(flat, net.params, names))
        out, acts = net.forward(x)
        g = net.backward(acts, w)
        return float(out @ w), flatten(g, names)

    assert grad_check(loss, flatten(net.params, names), n_probes=40) < 1e-7


def test_reliability_backward_by_finite_differences():
    rng = np.random.default_rng(4)
    rel = ReliabilityNet(6, 3, rng=rng)
    mats = [sp.csr_matrix(rng.random((5, 6)) * (rng.random((5, 6)) < 0.5)) for _ in range(3)]
    ann = rng.integers(6, size=5)
    p0 = rng.random(5)
    w = rng.standard_normal(5)
    names = list(rel.params)

    def loss(flat):
        rel.params.update(unflatten(flat[:-5], rel.params, names))
        alpha, cache = rel.forward(ann, mats, flat[-5:])
        g, dp = rel.backward(cache, w)
        return float(alpha @ w), np.concatenate([flatten(g, names), dp])

    assert grad_check(loss, np.concatenate([flatten(rel.params, names), p0]), n_probes=40) < 1e-7


def test_adam_first_step_is_lr_sized():
    params = {"x": np.array([1.0, -2.0])}
    Adam(lr=0.1).step(params, {"x": np.array([3.0, -0.5])})
    assert np.allclose(params["x"], [0.9, -1.9])


def test_adam_minimises_quadratic():
    params = {"x": np.array([5.0, -3.0])}
    opt = Adam(lr=0.05)
    for _ in range(2000):
        opt.step(params, {"x": params["x"].copy()})
    assert np.abs(params["x"]).max() < 1e-2


def test_flatten_round_trip_and_length_check():
    p = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([7.0])}
    back = unflatten(flatten(p), p)
    assert all(np.array_equal(back[k], p[k]) for k in p)
    with pytest.raises(ValueError):
        unflatten(np.zeros(3), p)


def test_checkpoint_round_trip_is_exact(tmp_path):
    net = RewardNet(5, 2, rng=np.random.default_rng(8))
    save_checkpoint(tmp_path / "c.npz", net.params)
    back = load_checkpoint(tmp_path / "c.npz")
    assert set(back) == set(net.params)
    assert all(np.array_equal(back[k], net.params[k]) for k in back)
