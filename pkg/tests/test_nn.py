import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import central_differences, relative_error, simulate_adam
from visrank import nn


def random_stack(rng, n_layers, max_dim=16, dropout=0.0):
    """Random dense/ReLU stack with nonzero biases, so no unit sits exactly on a kink."""
    dims = rng.integers(1, max_dim + 1, size=n_layers + 1)
    layers = []
    for i in range(n_layers):
        layer = nn.Dense(int(dims[i]), int(dims[i + 1]), rng=rng)
        layer.biases[:] = rng.normal(scale=0.5, size=layer.out_dim)
        layers.append(layer)
        if i < n_layers - 1:
            layers.append(nn.ReLU())
            if dropout:
                layers.append(nn.Dropout(dropout))
    return layers, int(dims[0]), int(dims[-1])


def test_relu_forward_example():
    layer = nn.Dense(2, 2, weights=np.eye(2))
    out, _ = nn.forward([layer, nn.ReLU()], [1.0, -2.0])
    assert out.tolist() == [1.0, 0.0]


def test_dropout_zero_rate_ignores_rng():
    rng = np.random.default_rng(0)
    layers, d_in, _ = random_stack(rng, 2)
    x = rng.random((4, d_in))
    with_p0 = [nn.Dense(l.in_dim, l.out_dim, weights=l.weights) if isinstance(l, nn.Dense) else l for l in layers]
    with_p0.insert(2, nn.Dropout(0.0))
    a, _ = nn.forward(with_p0, x, train=True, rng=np.random.default_rng(1))
    b, _ = nn.forward(with_p0, x, train=True, rng=np.random.default_rng(2))
    assert np.array_equal(a, b)


def test_eval_mode_dropout_is_identity():
    rng = np.random.default_rng(0)
    dense = nn.Dense(5, 3, rng=rng)
    x = rng.random((2, 5))
    a, _ = nn.forward([dense, nn.ReLU(), nn.Dropout(0.1)], x, train=False)
    b, _ = nn.forward([dense, nn.ReLU(), nn.Dropout(0.0)], x, train=False)
    assert np.array_equal(a, b)


def test_train_mode_requires_rng():
    with pytest.raises(ValueError):
        nn.forward([nn.Dropout(0.5)], np.ones(3), train=True)


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        nn.forward([nn.Dense(3, 2)], np.ones(4))


def test_dropout_expectation():
    x = np.linspace(0.5, 2.0, 8)
    masks = np.tile(x, (10000, 1))
    out, _ = nn.forward([nn.Dropout(0.1)], masks, train=True, rng=np.random.default_rng(0))
    assert np.all(np.abs(out.mean(axis=0) - x) / x < 0.02)
    survivors = out[out != 0]
    assert np.allclose(survivors / np.tile(x, (10000, 1))[out != 0], 1 / 0.9)


def test_linear_gradient_is_outer_product():
    dense = nn.Dense(3, 2, rng=np.random.default_rng(0))
    x = np.array([[1.0, 2.0, 3.0]])
    g = np.array([[0.5, -1.0]])
    out, tape = nn.forward([dense], x)
    (gw, gb), gx = nn.backward([dense], tape, g)
    assert np.allclose(gw, g.T @ x) and np.allclose(gb, g[0]) and np.allclose(gx, g @ dense.weights)


def test_relu_blocks_negative_gradient():
    layers = [nn.Dense(1, 1, weights=[[1.0]], biases=[-5.0]), nn.ReLU()]
    out, tape = nn.forward(layers, [[1.0]])
    grads, gx = nn.backward(layers, tape, [[1.0]])
    assert out[0, 0] == 0 and grads[0][0, 0] == 0 and gx[0, 0] == 0


def test_dropout_backward_uses_mask():
    layers = [nn.Dropout(0.5)]
    x = np.ones((1, 200))
    out, tape = nn.forward(layers, x, train=True, rng=np.random.default_rng(3))
    _, gx = nn.backward(layers, tape, np.ones_like(x))
    assert np.array_equal(gx, out)


@pytest.mark.parametrize("seed", range(10))
def test_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    layers, d_in, d_out = random_stack(rng, 3)
    x = rng.normal(size=(3, d_in))
    upstream = rng.normal(size=(3, d_out))

    def loss():
        return float(np.sum(nn.forward(layers, x)[0] * upstream))

    _, tape = nn.forward(layers, x)
    grads, _ = nn.backward(layers, tape, upstream)
    numeric = central_differences(loss, nn.params(layers))
    assert max(relative_error(a, n) for a, n in zip(grads, numeric)) < 1e-4


def test_dropout_gradient_with_fixed_mask():
    rng = np.random.default_rng(4)
    layers, d_in, d_out = random_stack(rng, 2, dropout=0.3)
    x = rng.normal(size=(2, d_in))

    def loss():
        out, _ = nn.forward(layers, x, train=True, rng=np.random.default_rng(99))
        return float(out.sum())

    _, tape = nn.forward(layers, x, train=True, rng=np.random.default_rng(99))
    grads, _ = nn.backward(layers, tape, np.ones((2, d_out)))
    numeric = central_differences(loss, nn.params(layers))
    assert max(relative_error(a, n) for a, n in zip(grads, numeric)) < 1e-4


@pytest.mark.parametrize("diff,expected", [(2.0, 0.0), (0.0, 1.0), (0.25, 0.75)])
def test_hinge_loss_examples(diff, expected):
    assert nn.pairwise_hinge_loss(diff, 0.0, 1.0) == pytest.approx(expected)


def test_hinge_gradient_and_kink():
    assert nn.pairwise_hinge_grad([0.0, 2.0, 1.0], [0.0, 0.0, 0.0]).tolist() == [-1.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        nn.pairwise_hinge_loss(0.0, 0.0, margin=0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.01, 5))
def test_hinge_nonnegative_and_zero_iff_margin(s_pos, s_neg, margin):
    loss = float(nn.pairwise_hinge_loss(s_pos, s_neg, margin))
    assert loss >= 0
    assert (loss == 0) == (s_pos - s_neg >= margin)


def test_l2_gradient_is_2_lambda_w():
    rng = np.random.default_rng(0)
    w = [rng.normal(size=(3, 2)), rng.normal(size=4)]
    lam = 0.3

    def loss():
        return nn.l2_penalty(w, lam)

    for analytic, numeric in zip(nn.l2_grad(w, lam), central_differences(loss, w)):
        assert np.allclose(analytic, numeric, atol=1e-8)


def test_adam_first_step_is_lr():
    for g in (0.3, -7.0, 1e-3):
        p = [np.array([1.0])]
        nn.adam_step(p, [np.array([g])], nn.AdamState(lr=0.01))
        assert abs(p[0][0] - 1.0) == pytest.approx(0.01, rel=1e-4)


def test_adam_zero_gradient_fixed_point():
    p = [np.array([0.5, -2.0])]
    state = nn.AdamState(lr=0.1)
    for _ in range(50):
        nn.adam_step(p, [np.zeros(2)], state)
    assert p[0].tolist() == [0.5, -2.0]


def test_adam_matches_simulation():
    grads = [1.0, -1.0, 0.5, 2.0, -0.25]
    expected = simulate_adam(grads, lr=0.01)
    p = [np.array([0.0])]
    state = nn.AdamState(lr=0.01)
    for g in grads:
        nn.adam_step(p, [np.array([g])], state)
    assert p[0][0] == pytest.approx(expected[-1], abs=1e-15)
    assert abs(expected[2] - expected[0]) < 2 * 0.01


def test_adam_shape_checks():
    with pytest.raises(ValueError):
        nn.adam_step([np.zeros(2)], [np.zeros(3)], nn.AdamState())


def test_glorot_init_bounds():
    layer = nn.Dense(30, 10, rng=np.random.default_rng(0))
    assert np.abs(layer.weights).max() <= np.sqrt(6 / 40)
    assert not layer.biases.any()


def test_count_parameters_dense():
    assert nn.Dense(25088, 1, weights=np.zeros((1, 25088))).n_params == 25089
    assert nn.count_parameters([nn.BackboneLayer("fc", "dense", 0, 25088, 4096, True)]) == 102_764_544


def test_backbone_tables():
    vgg = nn.load_backbone("vgg16")
    assert len(vgg) == 13 and all(layer.bias for layer in vgg)
    assert nn.count_parameters(vgg) == 14_714_688
    resnet = nn.load_backbone("resnet152")
    assert sum(1 for layer in resnet if layer.kind == "conv") == 155
    assert nn.count_parameters(resnet) == 58_143_808


def test_backbone_tables_match_torchvision():
    models = pytest.importorskip("torchvision.models")
    vgg = models.vgg16(weights=None).features
    assert sum(p.numel() for p in vgg.parameters()) == nn.count_parameters(nn.load_backbone("vgg16"))
    resnet = models.resnet152(weights=None)
    trunk = sum(p.numel() for name, p in resnet.named_parameters() if not name.startswith("fc."))
    assert trunk == nn.count_parameters(nn.load_backbone("resnet152"))
