"""Analytic gradients against central finite differences (step 1e-6, float64)."""
import numpy as np
import pytest

from fatigue_seq import losses
from fatigue_seq.lstm import LstmModel, lstm_cell_backward, lstm_cell_step, loss_and_grads
from fatigue_seq.tensor import (
    Conv, ConvSpec, Dense, FeatureUnit, GlobalAvgPool, LeakyReLU, Residual,
)

from oracles import numeric_grad, rel_error

SEEDS = range(20)
TOL = 1e-4
LOSS_TOL = 1e-6


def check_layer(make, in_shape, seed):
    """Check input and parameter gradients of a single-input layer."""
    rng = np.random.default_rng(seed)
    op = make(rng)
    x = rng.normal(size=in_shape)
    R = rng.normal(size=np.shape(op.forward(x)))

    def f_x(xv):
        return float(np.sum(op.forward(xv) * R))

    op.forward(x)
    dx, pgrads = op.backward(R)
    assert rel_error(dx, numeric_grad(f_x, x)) < TOL
    for name, p in op.params().items():
        def f_p(pv, p=p):
            saved = p.copy()
            p[...] = pv
            out = float(np.sum(op.forward(x) * R))
            p[...] = saved
            return out
        assert rel_error(pgrads[name], numeric_grad(f_p, p.copy())) < TOL, name


def conv_maker(kind, k, m, n, stride=1, padding="same"):
    def make(rng):
        return Conv.init(ConvSpec(k, m, n, stride, padding, kind), rng)
    return make


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("kind,k,m,n,stride,padding", [
    ("standard", 3, 3, 4, 1, "same"),
    ("standard", 3, 2, 3, 2, "valid"),
    ("depthwise", 3, 4, 4, 1, "same"),
    ("depthwise", 5, 2, 2, 2, "same"),
    ("pointwise", 1, 4, 5, 1, "same"),
])
def test_conv_gradients(seed, kind, k, m, n, stride, padding):
    check_layer(conv_maker(kind, k, m, n, stride, padding), (6, 5, m), seed)


@pytest.mark.parametrize("seed", SEEDS)
def test_gap_gradient(seed):
    check_layer(lambda rng: GlobalAvgPool(), (4, 3, 5), seed)


@pytest.mark.parametrize("seed", SEEDS)
def test_dense_gradient(seed):
    check_layer(lambda rng: Dense(rng.normal(size=(6, 8)), rng.normal(size=6)), (8,), seed)


@pytest.mark.parametrize("seed", SEEDS)
def test_leaky_relu_gradient(seed):
    check_layer(lambda rng: LeakyReLU(0.1), (5, 4, 3), seed)


@pytest.mark.parametrize("seed", SEEDS)
def test_feature_unit_gradient(seed):
    check_layer(lambda rng: FeatureUnit.init(4, 3, rng), (5, 5, 4), seed)


@pytest.mark.parametrize("seed", SEEDS)
def test_residual_gradient(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(3, 4, 2)), rng.normal(size=(3, 4, 2))
    R = rng.normal(size=a.shape)
    op = Residual()
    op.forward(a, b)
    (da, db), _ = op.backward(R)
    assert rel_error(da, numeric_grad(lambda v: float(np.sum(op.forward(v, b) * R)), a)) < TOL
    assert rel_error(db, numeric_grad(lambda v: float(np.sum(op.forward(a, v) * R)), b)) < TOL


def small_model(rng, H):
    m = LstmModel.init(H, seed=int(rng.integers(1 << 30)))
    for v in m.params.values():
        v[...] = rng.normal(scale=0.6, size=v.shape)
    return m


@pytest.mark.parametrize("seed", SEEDS)
def test_lstm_cell_gradient(seed):
    rng = np.random.default_rng(seed)
    H = 3
    model = small_model(rng, H)
    x, h, c = rng.normal(size=4), rng.normal(size=H), rng.normal(size=H)
    Rh, Rc = rng.normal(size=H), rng.normal(size=H)

    def obj(xv=x, hv=h, cv=c):
        h2, c2, _ = lstm_cell_step(xv, hv, cv, model)
        return float(h2 @ Rh + c2 @ Rc)

    _, _, cache = lstm_cell_step(x, h, c, model)
    dx, dh, dc, grads = lstm_cell_backward(cache, Rh, Rc, model)
    assert rel_error(dx, numeric_grad(lambda v: obj(xv=v), x)) < TOL
    assert rel_error(dh, numeric_grad(lambda v: obj(hv=v), h)) < TOL
    assert rel_error(dc, numeric_grad(lambda v: obj(cv=v), c)) < TOL
    for name, g in grads.items():
        p = model.params[name]

        def f(pv, p=p):
            saved = p.copy()
            p[...] = pv
            out = obj()
            p[...] = saved
            return out
        assert rel_error(g, numeric_grad(f, p.copy())) < TOL, name


@pytest.mark.parametrize("seed", SEEDS)
def test_sequence_loss_gradient(seed):
    """Full BPTT through the batched kernels plus the logistic head."""
    rng = np.random.default_rng(seed)
    model = small_model(rng, 3)
    X = rng.normal(size=(3, 4, 5))
    y = np.array([1, 0, 1])
    sw = rng.uniform(0.5, 2.0, size=3)
    _, grads = loss_and_grads(model, X, y, sw)
    for name, g in grads.items():
        p = model.params[name]

        def f(pv, p=p):
            saved = p.copy()
            p[...] = pv
            out = loss_and_grads(model, X, y, sw)[0]
            p[...] = saved
            return out
        assert rel_error(g, numeric_grad(f, p.copy())) < TOL, name


@pytest.mark.parametrize("seed", SEEDS)
def test_bce_gradient(seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.05, 0.95, size=6)
    y = rng.integers(0, 2, size=6).astype(float)
    num = numeric_grad(lambda v: float(np.sum(losses.binary_cross_entropy(v, y))), p)
    assert rel_error(losses.binary_cross_entropy_grad(p, y), num) < LOSS_TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_square_loss_gradients(seed):
    rng = np.random.default_rng(seed)
    pred, truth = rng.normal(scale=50, size=136), rng.normal(scale=50, size=136)
    num = numeric_grad(lambda v: losses.landmark_loss(v, truth), pred)
    assert rel_error(losses.landmark_loss_grad(pred, truth), num) < LOSS_TOL
    pp, pt = rng.uniform(-60, 60, size=3), rng.uniform(-60, 60, size=3)
    num = numeric_grad(lambda v: losses.pose_loss(v, pt), pp)
    assert rel_error(losses.pose_loss_grad(pp, pt), num) < LOSS_TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_total_loss_gradient(seed):
    rng = np.random.default_rng(seed)
    w = losses.LossWeights(*rng.uniform(0, 2, size=2))
    ab = rng.uniform(0, 10, size=2)
    num = numeric_grad(lambda v: losses.total_loss(v[0], v[1], w), ab)
    assert rel_error(losses.total_loss_grad(w), num) < LOSS_TOL
