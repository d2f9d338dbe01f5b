"""MLP forward/backward correctness, optimizer behavior, checkpoints."""

import numpy as np
import pytest

from edgecontract.nn import (
    AdamState,
    Mlp,
    adam_step,
    flatten_param_grads,
    load_weights,
    save_weights,
)


def _reference_forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Straight-line reimplementation of the forward pass."""
    h = np.asarray(x, dtype=float)
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = h @ w + b
        if act == "relu":
            h = np.maximum(z, 0.0)
        elif act == "tanh":
            h = np.tanh(z)
        else:
            h = z
    return h


def _numeric_param_grads(net: Mlp, x: np.ndarray, upstream: np.ndarray, h: float = 1e-5):
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            up = float(np.sum(net.forward(x) * upstream))
            p[idx] = orig - h
            dn = float(np.sum(net.forward(x) * upstream))
            p[idx] = orig
            g[idx] = (up - dn) / (2 * h)
            it.iternext()
        grads.append(g)
    return grads


def test_constructor_validation():
    with pytest.raises(ValueError):
        Mlp([3, 4], ["relu", "relu"])
    with pytest.raises(ValueError):
        Mlp([3, 4, 2], ["relu", "sigmoid"])


def test_forward_matches_reference_to_1e12():
    rng = np.random.default_rng(0)
    for _ in range(20):
        net = Mlp([4, 7, 5, 2], ["relu", "tanh", "identity"], rng)
        x = rng.standard_normal((6, 4))
        assert np.allclose(net.forward(x), _reference_forward(net, x), rtol=0, atol=1e-12)


def test_forward_deterministic():
    rng = np.random.default_rng(3)
    net = Mlp([3, 8, 2], ["relu", "identity"], rng)
    x = rng.standard_normal(3)
    assert np.array_equal(net.forward(x), net.forward(x))


def test_unbatched_and_batched_agree():
    rng = np.random.default_rng(4)
    net = Mlp([3, 6, 2], ["tanh", "identity"], rng)
    x = rng.standard_normal(3)
    assert np.allclose(net.forward(x), net.forward(x[None, :])[0], atol=1e-15)


def test_input_width_checked():
    net = Mlp([3, 2], ["identity"])
    with pytest.raises(ValueError):
        net.forward(np.zeros(4))


def test_linear_layer_gradient_is_outer_product():
    rng = np.random.default_rng(5)
    net = Mlp([3, 2], ["identity"], rng)
    x = rng.standard_normal(3)
    upstream = rng.standard_normal(2)
    net.forward(x)
    param_grads, dx = net.backward(upstream)
    dw, db = param_grads[0]
    assert np.allclose(dw, np.outer(x, upstream), atol=1e-12)
    assert np.allclose(db, upstream, atol=1e-12)
    assert np.allclose(dx, net.weights[0] @ upstream, atol=1e-12)


def test_zero_weight_net_has_zero_input_gradient():
    net = Mlp([3, 4, 2], ["relu", "identity"])  # zero init
    net.forward(np.ones(3))
    _, dx = net.backward(np.ones(2))
    assert np.allclose(dx, 0.0)


def test_backward_requires_forward():
    net = Mlp([2, 2], ["identity"])
    with pytest.raises(RuntimeError):
        net.backward(np.ones(2))


def test_gradients_match_finite_differences_over_100_nets():
    rng = np.random.default_rng(42)
    worst = 0.0
    checked = 0
    while checked < 100:
        widths = [int(rng.integers(2, 5)) for _ in range(3)] + [int(rng.integers(1, 3))]
        acts = [str(rng.choice(["relu", "tanh", "identity"])) for _ in range(3)]
        net = Mlp(widths, acts, rng)
        x = rng.standard_normal(widths[0]) * 0.7
        upstream = rng.standard_normal(widths[-1])
        _, tape = net.apply(x)
        # finite differences are invalid within the step size of a relu kink
        if any(
            a == "relu" and np.any(np.abs(z) < 1e-3)
            for a, z in zip(acts, tape.preacts)
        ):
            continue
        checked += 1
        net.forward(x)
        analytic, _ = net.backward(upstream)
        numeric = _numeric_param_grads(net, x, upstream)
        for (dw, db), (nw, nb) in zip(analytic, zip(numeric[0::2], numeric[1::2])):
            for a, n in ((dw, nw), (db, nb)):
                denom = np.maximum(np.abs(n), 1e-3)
                worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    assert worst < 1e-4, f"worst relative gradient error {worst:.2e}"


def test_batched_param_grads_sum_over_batch():
    rng = np.random.default_rng(7)
    net = Mlp([3, 4, 2], ["tanh", "identity"], rng)
    xs = rng.standard_normal((5, 3))
    ups = rng.standard_normal((5, 2))
    _, tape = net.apply(xs)
    batched, _ = net.grads(tape, ups)
    # sum of per-sample gradients
    acc = None
    for i in range(5):
        net.forward(xs[i])
        single, _ = net.backward(ups[i])
        if acc is None:
            acc = [[dw.copy(), db.copy()] for dw, db in single]
        else:
            for a, (dw, db) in zip(acc, single):
                a[0] += dw
                a[1] += db
    for (bw, bb), (aw, ab) in zip(batched, acc):
        assert np.allclose(bw, aw, atol=1e-12)
        assert np.allclose(bb, ab, atol=1e-12)


# -- optimizer --------------------------------------------------------------

def test_adam_zero_gradient_leaves_parameters_unchanged():
    net = Mlp([2, 2], ["identity"], np.random.default_rng(0))
    before = [p.copy() for p in net.parameters()]
    state = AdamState.for_net(net)
    adam_step(state, net.parameters(), [np.zeros_like(p) for p in net.parameters()], lr=0.1)
    for p, b in zip(net.parameters(), before):
        assert np.array_equal(p, b)


def test_adam_zero_lr_leaves_parameters_unchanged():
    rng = np.random.default_rng(1)
    net = Mlp([2, 2], ["identity"], rng)
    before = [p.copy() for p in net.parameters()]
    state = AdamState.for_net(net)
    adam_step(state, net.parameters(), [rng.standard_normal(p.shape) for p in net.parameters()], lr=0.0)
    for p, b in zip(net.parameters(), before):
        assert np.array_equal(p, b)


def test_adam_first_step_scalar_hand_computation():
    # one scalar parameter, gradient g: bias-corrected first step is
    # lr * g / (|g| + eps) regardless of beta values
    p = np.array([1.0])
    g = np.array([0.37])
    state = AdamState(m=[np.zeros(1)], v=[np.zeros(1)])
    adam_step(state, [p], [g], lr=0.01)
    expect = 1.0 - 0.01 * 0.37 / (abs(0.37) + 1e-8)
    assert p[0] == pytest.approx(expect, rel=1e-9)


# -- parameter plumbing and checkpoints -------------------------------------

def test_clone_is_deep():
    rng = np.random.default_rng(2)
    net = Mlp([3, 4, 2], ["relu", "identity"], rng)
    other = net.clone()
    other.weights[0][0, 0] += 1.0
    assert net.weights[0][0, 0] != other.weights[0][0, 0]


def test_flatten_param_grads_order_matches_parameters():
    net = Mlp([3, 4, 2], ["relu", "identity"], np.random.default_rng(0))
    net.forward(np.ones(3))
    pg, _ = net.backward(np.ones(2))
    flat = flatten_param_grads(pg)
    for g, p in zip(flat, net.parameters()):
        assert g.shape == p.shape


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    net = Mlp([4, 6, 3], ["tanh", "identity"], rng)
    path = tmp_path / "net.npz"
    save_weights(path, net)
    loaded = load_weights(path)
    x = rng.standard_normal(4)
    assert np.array_equal(net.forward(x), loaded.forward(x))
    assert loaded.widths == net.widths and loaded.activations == net.activations


def test_checkpoint_version_rejected(tmp_path):
    net = Mlp([2, 2], ["identity"])
    path = tmp_path / "net.npz"
    save_weights(path, net)
    data = dict(np.load(path, allow_pickle=False))
    data["version"] = np.array(99)
    np.savez(path, **data)
    with pytest.raises(ValueError):
        load_weights(path)
