import math

import numpy as np
import pytest

from kltrust.models import MLP, Batch, SmallCNN, fd_check


def scalar_mlp_loss(model, params, x, y):
    """Scalar-by-scalar forward pass, independent of the vectorized path."""
    parts = model.unflatten(params)
    total = 0.0
    for s in range(len(y)):
        h = list(x[s])
        for li in range(len(model.layer_sizes) - 1):
            w, b = parts[2 * li], parts[2 * li + 1]
            z = []
            for j in range(w.shape[1]):
                acc = float(b[j])
                for i in range(w.shape[0]):
                    acc += h[i] * float(w[i, j])
                z.append(acc)
            if li < len(model.layer_sizes) - 2:
                h = [max(v, 0.0) for v in z]
            else:
                h = z
        mx = max(h)
        lse = mx + math.log(sum(math.exp(v - mx) for v in h))
        total += lse - h[y[s]]
    return total / len(y)


@pytest.fixture
def tiny_batch():
    x = np.array([[0.1, -0.2, 0.3, 0.4], [0.9, 0.8, -0.7, 0.6]])
    return Batch(x, np.array([0, 1]))


# ---------------------------------------------------------------------------
# forward_loss
# ---------------------------------------------------------------------------

def test_uniform_logits_give_log_c():
    model = MLP((5, 10))
    params = np.zeros(model.n_params)
    batch = Batch(np.random.default_rng(0).normal(size=(4, 5)), np.arange(4) % 10)
    loss, logits = model.forward_loss(params, batch)
    assert loss == pytest.approx(math.log(10.0), rel=1e-12)
    assert logits.shape == (4, 10)


def test_confident_correct_logits_give_tiny_loss():
    model = MLP((2, 3))
    parts = model.unflatten(np.zeros(model.n_params))
    parts[1][:] = [-50.0, 50.0, -50.0]  # bias picks class 1
    params = model.flatten(parts)
    loss, _ = model.forward_loss(params, Batch(np.zeros((2, 2)), np.array([1, 1])))
    assert loss < 1e-6


def test_seed0_regression_fixture(tiny_batch):
    model = MLP((4, 3, 2))
    params = model.init_params(seed=0)
    loss, _ = model.forward_loss(params, tiny_batch)
    # frozen value pinned by the scalar-by-scalar oracle
    assert loss == pytest.approx(0.4719811312424067, rel=1e-12)
    assert loss == pytest.approx(
        scalar_mlp_loss(model, params, tiny_batch.inputs, tiny_batch.targets),
        rel=1e-12,
    )


def test_forward_shape_mismatch():
    model = MLP((4, 2))
    with pytest.raises(ValueError):
        model.forward_loss(np.zeros(model.n_params), Batch(np.zeros((1, 5)), np.zeros(1, int)))
    cnn = SmallCNN(in_shape=(1, 28, 28))
    with pytest.raises(ValueError):
        cnn.forward_loss(np.zeros(cnn.n_params), Batch(np.zeros((1, 3, 28, 28)), np.zeros(1, int)))


def test_label_out_of_range():
    model = MLP((4, 2))
    with pytest.raises(ValueError):
        model.forward_loss(np.zeros(model.n_params), Batch(np.zeros((1, 4)), np.array([2])))


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def test_single_layer_closed_form_gradient():
    # softmax regression: dW = x^T (p - onehot) / B, db = sum(p - onehot) / B
    model = MLP((3, 4))
    rng = np.random.default_rng(2)
    params = model.init_params(seed=2)
    x = rng.normal(size=(5, 3))
    y = rng.integers(0, 4, size=5)
    grad = model.backward(params, Batch(x, y))
    w, b = model.unflatten(params)
    logits = x @ w + b
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    p = z / z.sum(axis=1, keepdims=True)
    p[np.arange(5), y] -= 1.0
    p /= 5.0
    dw, db = model.unflatten(grad)
    assert np.allclose(dw, x.T @ p, rtol=1e-12, atol=1e-15)
    assert np.allclose(db, p.sum(axis=0), rtol=1e-12, atol=1e-15)


def test_mlp_gradient_matches_finite_differences(tiny_batch):
    model = MLP((4, 6, 3, 2))
    params = model.init_params(seed=1)
    coords = np.random.default_rng(3).choice(model.n_params, size=30, replace=False)
    assert fd_check(model, params, tiny_batch, coords) < 1e-4


def test_cnn_gradient_matches_finite_differences():
    model = SmallCNN(in_shape=(1, 8, 8), num_classes=3, channels=(4, 5))
    params = model.init_params(seed=4)
    rng = np.random.default_rng(5)
    batch = Batch(rng.uniform(0.0, 1.0, size=(3, 1, 8, 8)), rng.integers(0, 3, size=3))
    coords = rng.choice(model.n_params, size=50, replace=False)
    assert fd_check(model, params, batch, coords) < 1e-4


def test_zero_last_layer_blocks_upstream_gradient(tiny_batch):
    model = MLP((4, 3, 2))
    parts = model.unflatten(model.init_params(seed=0))
    parts[2][:] = 0.0  # last-layer weights
    params = model.flatten(parts)
    grads = model.unflatten(model.backward(params, tiny_batch))
    assert np.all(grads[0] == 0.0) and np.all(grads[1] == 0.0)
    assert np.any(grads[2] != 0.0)  # dW2 = h^T delta is generally nonzero


# ---------------------------------------------------------------------------
# fd_check utility
# ---------------------------------------------------------------------------

def test_float32_mode_passes_relaxed_fd_check(tiny_batch):
    model = MLP((4, 3, 2), dtype=np.float32)
    params = model.init_params(seed=0)
    assert params.dtype == np.float32
    assert fd_check(model, params, tiny_batch, range(model.n_params), h=1e-2) < 1e-2


def test_fd_check_rejects_bad_args(tiny_batch):
    model = MLP((4, 2))
    params = model.init_params(seed=0)
    with pytest.raises(ValueError):
        fd_check(model, params, tiny_batch, [0], h=0.0)
    with pytest.raises(ValueError):
        fd_check(model, params, tiny_batch, [model.n_params])


def test_fd_check_small_on_analytic_case(tiny_batch):
    model = MLP((4, 2))
    params = model.init_params(seed=0)
    assert fd_check(model, params, tiny_batch, range(model.n_params)) < 1e-7


# ---------------------------------------------------------------------------
# init / flatten
# ---------------------------------------------------------------------------

def test_init_is_deterministic_per_seed():
    model = SmallCNN(in_shape=(1, 8, 8), num_classes=3, channels=(2, 3))
    assert np.array_equal(model.init_params(7), model.init_params(7))
    assert not np.array_equal(model.init_params(7), model.init_params(8))


def test_parameter_count_mlp_784_256_10():
    assert MLP((784, 256, 10)).n_params == 784 * 256 + 256 + 256 * 10 + 10 == 203530


def test_flatten_round_trip_exact():
    for model in (MLP((4, 3, 2)), SmallCNN(in_shape=(1, 8, 8), num_classes=3, channels=(2, 3))):
        flat = model.init_params(seed=11)
        assert np.array_equal(model.flatten(model.unflatten(flat)), flat)


def test_gradient_length_equals_n(tiny_batch):
    model = MLP((4, 3, 2))
    grad = model.backward(model.init_params(0), tiny_batch)
    assert grad.shape == (model.n_params,)


def test_loss_decreases_under_small_gradient_step(tiny_batch):
    model = MLP((4, 3, 2))
    params = model.init_params(seed=0)
    loss0, _ = model.forward_loss(params, tiny_batch)
    grad = model.backward(params, tiny_batch)
    loss1, _ = model.forward_loss(params - 0.01 * grad, tiny_batch)
    assert loss1 < loss0
