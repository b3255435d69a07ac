import numpy as np
import pytest

from nptmetric.errors import DimensionMismatch, ShapeMismatch, TapeMismatch
from nptmetric.model import (
    EmbedderModel,
    OptimizerState,
    init_model,
    model_backward,
    model_forward,
    sgd_step,
)


def tiny_model(rng, d_in=4, hidden=(5,), d_out=3):
    return init_model(d_in, hidden=hidden, d_out=d_out, rng=rng)


def test_forward_shapes_and_relu(rng):
    model = tiny_model(rng)
    x = rng.standard_normal((7, 4))
    out, tape = model_forward(model, x)
    assert out.shape == (7, 3)
    assert tape.inputs is not None
    for h in tape.hidden:
        assert (h >= 0).all()  # post-activation values are rectified


def test_forward_rejects_wrong_input_dim(rng):
    model = tiny_model(rng)
    with pytest.raises(DimensionMismatch):
        model_forward(model, rng.standard_normal((3, 5)))


def test_backward_matches_central_differences(rng):
    # scalar objective L = sum(out * coef); FD over every parameter and input
    model = tiny_model(rng, d_in=3, hidden=(4, 4), d_out=2)
    x = rng.standard_normal((5, 3))
    coef = rng.standard_normal((5, 2))
    h = 1e-6

    def value(m, xs):
        out, _ = model_forward(m, xs)
        return float(np.sum(out * coef))

    out, tape = model_forward(model, x)
    grads = model_backward(model, tape, coef)

    params = model.parameters()
    for p, g in zip(params, grads.parameters()):
        for idx in np.ndindex(p.shape):
            keep = p[idx]
            p[idx] = keep + h
            up = value(model, x)
            p[idx] = keep - h
            down = value(model, x)
            p[idx] = keep
            fd = (up - down) / (2 * h)
            assert g[idx] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_backward_rejects_foreign_tape(rng):
    model = tiny_model(rng)
    x = rng.standard_normal((2, 4))
    _, tape = model_forward(model, x)
    other = tiny_model(rng, d_in=4, hidden=(9,), d_out=3)
    with pytest.raises(TapeMismatch):
        model_backward(other, tape, np.ones((2, 3)))
    with pytest.raises(TapeMismatch):
        model_backward(model, tape, np.ones((2, 7)))


def test_init_glorot_bounds_and_determinism():
    a = init_model(10, hidden=(20,), d_out=5, rng=np.random.default_rng(3))
    b = init_model(10, hidden=(20,), d_out=5, rng=np.random.default_rng(3))
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    for w, (fi, fo) in zip(a.weights, [(10, 20), (20, 5)]):
        bound = np.sqrt(6.0 / (fi + fo))
        assert np.abs(w).max() <= bound
        assert np.abs(w).max() > 0.5 * bound  # actually fills the range
    for bias in a.biases:
        assert not bias.any()
    assert a.layer_dims == [10, 20, 5]


def test_model_ctor_rejects_broken_chain():
    w0 = np.zeros((3, 4))
    w1 = np.zeros((5, 2))  # should be (4, _)
    with pytest.raises(ShapeMismatch):
        EmbedderModel(weights=[w0, w1], biases=[np.zeros(4), np.zeros(2)])
    with pytest.raises(ShapeMismatch):
        EmbedderModel(weights=[w0], biases=[np.zeros(3)])


def test_sgd_hand_computed_sequence():
    # single scalar parameter: p=1, grad=0.5 each step, lr=0.1,
    # momentum=0.9, weight decay=0.01
    p = np.array([1.0])
    state = OptimizerState.for_params([p])
    lr, mu, wd = 0.1, 0.9, 0.01

    # step 1: v = g + wd*p = 0.5 + 0.01 = 0.51 ; p = 1 - 0.051 = 0.949
    sgd_step([p], [np.array([0.5])], state, lr=lr, momentum=mu, weight_decay=wd)
    assert p[0] == pytest.approx(0.949, abs=1e-15)
    # step 2: v = 0.9*0.51 + 0.5 + 0.01*0.949 = 0.96849
    #         p = 0.949 - 0.096849 = 0.852151
    sgd_step([p], [np.array([0.5])], state, lr=lr, momentum=mu, weight_decay=wd)
    assert p[0] == pytest.approx(0.852151, abs=1e-12)


def test_sgd_zero_momentum_is_plain_descent():
    p = np.array([2.0, -3.0])
    state = OptimizerState.for_params([p])
    sgd_step([p], [np.array([1.0, 1.0])], state, lr=0.5, momentum=0.0, weight_decay=0.0)
    assert np.allclose(p, [1.5, -3.5], atol=1e-15)


def test_sgd_weight_decay_shrinks_under_flat_gradient():
    p = np.array([4.0])
    state = OptimizerState.for_params([p])
    for _ in range(10):
        sgd_step([p], [np.zeros(1)], state, lr=0.1, momentum=0.0, weight_decay=0.1)
    # pure decay: p *= (1 - lr*wd) each step
    assert p[0] == pytest.approx(4.0 * (1 - 0.01) ** 10, rel=1e-12)


def test_sgd_shape_guard():
    p = np.zeros((2, 2))
    state = OptimizerState.for_params([p])
    with pytest.raises(ShapeMismatch):
        sgd_step([p], [np.zeros(3)], state, lr=0.1, momentum=0.9, weight_decay=0.0)
    with pytest.raises(ShapeMismatch):
        sgd_step([p, p], [np.zeros((2, 2))], state, lr=0.1, momentum=0.9, weight_decay=0.0)


def test_parameters_interleaving(rng):
    model = tiny_model(rng, d_in=2, hidden=(3, 4), d_out=2)
    params = model.parameters()
    assert [q.shape for q in params] == [(2, 3), (3,), (3, 4), (4,), (4, 2), (2,)]
    # views, not copies: sgd must mutate the model in place
    params[0][0, 0] = 123.0
    assert model.weights[0][0, 0] == 123.0
