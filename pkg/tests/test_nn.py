"""Unit tests for the neural-network engine, checked against naive oracles."""

import numpy as np
import pytest

from sflpoison import nn

# ---------------------------------------------------------------------------
# independent oracles: straightforward loop implementations


def naive_dense(x, w, b, relu):
    out = np.zeros((x.shape[0], w.shape[1]))
    for i in range(x.shape[0]):
        for j in range(w.shape[1]):
            s = b[j]
            for k in range(x.shape[1]):
                s += x[i, k] * w[k, j]
            out[i, j] = max(s, 0.0) if relu else s
    return out


def naive_conv1d(x, w, b, relu):
    batch, _, length = x.shape
    out_c, in_c, kw = w.shape
    out = np.zeros((batch, out_c, length - kw + 1))
    for n in range(batch):
        for f in range(out_c):
            for l in range(length - kw + 1):
                s = b[f]
                for c in range(in_c):
                    for k in range(kw):
                        s += w[f, c, k] * x[n, c, l + k]
                out[n, f, l] = max(s, 0.0) if relu else s
    return out


def logsumexp_ce(logits, labels):
    losses = []
    for row, y in zip(logits, labels):
        m = row.max()
        losses.append(np.log(np.sum(np.exp(row - m))) + m - row[y])
    return float(np.mean(losses))


def random_segment(rng, conv=False):
    if conv:
        # lengths: 14 -conv-> 12 -pool-> 6 -conv-> 4, so the flatten width is 4*4
        layers = [nn.Conv1D(2, 3, 3, "relu", rng=rng),
                  nn.MaxPool1D(2, 2),
                  nn.Conv1D(3, 4, 3, "relu", rng=rng),
                  nn.Dense(4 * 4, 4, None, rng=rng)]
    else:
        layers = [nn.Dense(6, 5, "relu", rng=rng), nn.Dense(5, 3, None, rng=rng)]
    return jitter_biases(layers, rng)


def jitter_biases(layers, rng):
    # zero biases can park ReLU pre-activations exactly on the kink, where
    # central differences are one-sided; move the check off that point
    for layer in layers:
        if layer.param_arrays():
            layer.biases += rng.normal(scale=0.1, size=layer.biases.shape)
    return layers


# ---------------------------------------------------------------------------
# forward


def test_forward_identity_dense_relu_clamps():
    layer = nn.Dense(2, 2, "relu")
    layer.weights = np.eye(2)
    layer.biases = np.zeros(2)
    out, _ = nn.forward([layer], np.array([[1.0, -2.0]]))
    assert np.array_equal(out, [[1.0, 0.0]])


def test_forward_empty_segment_is_identity():
    x = np.random.default_rng(1).normal(size=(3, 4))
    out, _ = nn.forward([], x)
    assert np.array_equal(out, x)


def test_forward_matches_naive_two_layer_dense():
    rng = np.random.default_rng(7)
    layers = [nn.Dense(6, 5, "relu", rng=rng), nn.Dense(5, 3, None, rng=rng)]
    x = rng.normal(size=(4, 6))
    out, _ = nn.forward(layers, x)
    expect = naive_dense(naive_dense(x, layers[0].weights, layers[0].biases, True),
                         layers[1].weights, layers[1].biases, False)
    np.testing.assert_allclose(out, expect, atol=1e-10)


def test_forward_conv_matches_naive():
    rng = np.random.default_rng(3)
    layer = nn.Conv1D(2, 3, 4, "relu", rng=rng)
    x = rng.normal(size=(2, 2, 9))
    out, _ = nn.forward([layer], x)
    np.testing.assert_allclose(out, naive_conv1d(x, layer.weights, layer.biases, True),
                               atol=1e-10)


def test_forward_rejects_empty_batch_and_bad_shapes():
    layer = nn.Dense(4, 2)
    with pytest.raises(ValueError, match="empty batch"):
        nn.forward([layer], np.zeros((0, 4)))
    with pytest.raises(ValueError, match="input features"):
        nn.forward([layer], np.zeros((2, 3)))
    with pytest.raises(ValueError, match="channels"):
        nn.forward([nn.Conv1D(2, 2, 3)], np.zeros((1, 3, 8)))


def test_forward_deterministic_bitwise():
    rng = np.random.default_rng(11)
    layers = random_segment(rng, conv=True)
    x = rng.normal(size=(3, 2, 14))
    a, _ = nn.forward(layers, x)
    b, _ = nn.forward(layers, x)
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# backward


def test_backward_zero_upstream_gives_zero_grads():
    rng = np.random.default_rng(2)
    layers = random_segment(rng)
    x = rng.normal(size=(3, 6))
    out, cache = nn.forward(layers, x)
    grads, gin = nn.backward(layers, cache, np.zeros_like(out))
    assert np.array_equal(gin, np.zeros_like(x))
    for per_layer in grads:
        for g in per_layer:
            assert np.array_equal(g, np.zeros_like(g))


def test_backward_single_dense_hand_case():
    # y = x @ W, B=1; input gradient is g @ W^T worked out by hand
    layer = nn.Dense(2, 2)
    layer.weights = np.array([[1.0, 2.0], [3.0, 4.0]])
    layer.biases = np.zeros(2)
    x = np.array([[5.0, 6.0]])
    out, cache = nn.forward([layer], x)
    g = np.array([[1.0, -1.0]])
    grads, gin = nn.backward([layer], cache, g)
    # g @ W^T = [1*1 + (-1)*2, 1*3 + (-1)*4] = [-1, -1]
    np.testing.assert_allclose(gin, [[-1.0, -1.0]])
    # W grad = x^T @ g
    np.testing.assert_allclose(grads[0][0], [[5.0, -5.0], [6.0, -6.0]])
    np.testing.assert_allclose(grads[0][1], [1.0, -1.0])


@pytest.mark.parametrize("conv", [False, True])
def test_backward_matches_finite_differences(conv):
    for seed in range(20):
        rng = np.random.default_rng(seed)
        layers = random_segment(rng, conv=conv)
        x = rng.normal(size=(3, 2, 14) if conv else (3, 6))
        labels = rng.integers(0, 4 if conv else 3, size=3)
        assert nn.grad_check(layers, x, labels, eps=1e-5) < 1e-4


def test_backward_rejects_foreign_cache_and_bad_shape():
    rng = np.random.default_rng(5)
    layers = random_segment(rng)
    other = random_segment(rng)
    x = rng.normal(size=(2, 6))
    out, cache = nn.forward(layers, x)
    with pytest.raises(ValueError, match="cache"):
        nn.backward(other, cache, out)
    with pytest.raises(ValueError, match="upstream"):
        nn.backward(layers, cache, out[:, :2])


def test_relu_output_nonnegative_and_passthrough():
    rng = np.random.default_rng(9)
    layer = nn.Dense(4, 4, "relu")
    x = rng.normal(size=(8, 4))
    out, _ = nn.forward([layer], x)
    assert (out >= 0).all()
    z = x @ layer.weights + layer.biases
    assert np.array_equal(out[z > 0], z[z > 0])


def test_maxpool_routes_gradient_to_single_positions():
    rng = np.random.default_rng(13)
    layer = nn.MaxPool1D(2, 2)  # disjoint windows
    x = rng.normal(size=(2, 3, 8))
    out, cache = nn.forward([layer], x)
    g = rng.normal(size=out.shape)
    grads, gin = nn.backward([layer], cache, g)
    assert np.isclose(gin.sum(), g.sum())
    # every window contributes exactly one nonzero input position
    assert np.count_nonzero(gin) == g.size


# ---------------------------------------------------------------------------
# softmax cross-entropy


def test_softmax_ce_uniform_logits_is_log_c():
    for c in (2, 5, 10):
        loss, _ = nn.softmax_cross_entropy(np.zeros((3, c)), np.array([0, 1, c - 1]))
        assert np.isclose(loss, np.log(c))


def test_softmax_ce_vanishes_with_margin():
    losses = []
    for margin in (5.0, 20.0, 80.0):
        logits = np.zeros((1, 4))
        logits[0, 2] = margin
        loss, _ = nn.softmax_cross_entropy(logits, np.array([2]))
        losses.append(loss)
    assert losses[0] > losses[1] > losses[2]
    assert losses[2] < 1e-30


def test_softmax_ce_matches_logsumexp_oracle():
    rng = np.random.default_rng(21)
    logits = rng.normal(size=(16, 7)) * 10
    labels = rng.integers(0, 7, size=16)
    loss, grad = nn.softmax_cross_entropy(logits, labels)
    assert np.isclose(loss, logsumexp_ce(logits, labels), atol=1e-10)
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-9)
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    assert (probs >= 0).all()
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_softmax_ce_loss_nonnegative_and_label_range():
    rng = np.random.default_rng(4)
    logits = rng.normal(size=(8, 5))
    loss, _ = nn.softmax_cross_entropy(logits, rng.integers(0, 5, size=8))
    assert loss >= 0
    with pytest.raises(ValueError, match="labels"):
        nn.softmax_cross_entropy(logits, np.array([0, 1, 2, 3, 4, 0, 1, 5]))
    with pytest.raises(ValueError, match="labels"):
        nn.softmax_cross_entropy(logits, np.array([0, 1, 2, 3, 4, 0, 1, -1]))


# ---------------------------------------------------------------------------
# sgd


def test_sgd_zero_lr_keeps_params():
    p = np.array([1.0, 2.0])
    nn.sgd_step([p], [np.array([5.0, -3.0])], 0.0)
    assert np.array_equal(p, [1.0, 2.0])


def test_sgd_arithmetic():
    p = np.array([1.0])
    nn.sgd_step([p], [np.array([2.0])], 0.5)
    assert np.array_equal(p, [0.0])


def test_sgd_matches_elementwise_oracle_exactly():
    rng = np.random.default_rng(17)
    params = [rng.normal(size=(4, 3)), rng.normal(size=3)]
    grads = [rng.normal(size=(4, 3)), rng.normal(size=3)]
    expect = [p - 0.05 * g for p, g in zip(params, grads)]
    nn.sgd_step(params, grads, 0.05)
    for p, e in zip(params, expect):
        assert np.array_equal(p, e)


def test_sgd_rejects_nonfinite_naming_layer():
    layers = [nn.Dense(2, 2), nn.Dense(2, 2)]
    grads = [(np.zeros((2, 2)), np.zeros(2)), (np.full((2, 2), np.nan), np.zeros(2))]
    with pytest.raises(ValueError, match=r"dense\[1\]\.weights"):
        nn.apply_gradients(layers, grads, 0.1)


# ---------------------------------------------------------------------------
# gradient checking


def test_grad_check_linear_model_tight():
    rng = np.random.default_rng(23)
    layers = [nn.Dense(5, 3, None, rng=rng)]
    x = rng.normal(size=(4, 5))
    labels = rng.integers(0, 3, size=4)
    assert nn.grad_check(layers, x, labels) < 1e-6


def test_grad_check_conv_stack():
    rng = np.random.default_rng(29)
    layers = jitter_biases([nn.Conv1D(1, 2, 3, "relu", rng=rng),
                            nn.Conv1D(2, 2, 3, "relu", rng=rng),
                            nn.Dense(2 * 8, 3, None, rng=rng)], rng)
    x = rng.normal(size=(2, 1, 12))
    labels = rng.integers(0, 3, size=2)
    assert nn.grad_check(layers, x, labels) < 1e-4


def test_grad_check_detects_corrupted_gradient():
    rng = np.random.default_rng(31)
    layers = [nn.Dense(5, 4, "relu", rng=rng), nn.Dense(4, 3, None, rng=rng)]
    x = rng.normal(size=(4, 5))
    labels = rng.integers(0, 3, size=4)
    out, cache = nn.forward(layers, x)
    _, grad_logits = nn.softmax_cross_entropy(out, labels)
    analytic, _ = nn.backward(layers, cache, grad_logits)
    corrupted = [tuple(g * 1.01 for g in per_layer) for per_layer in analytic]
    numeric = nn.numeric_param_grads(layers, x, labels)
    assert nn.max_relative_error(corrupted, numeric) > 1e-3
