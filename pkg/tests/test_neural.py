import json

import numpy as np
import pytest

from wassdrl.classification import regularized_objective_classification
from wassdrl.core import Dataset, LossSpec, loss_eval
from wassdrl.errors import DimensionMismatch, DivergenceDetected, InputError
from wassdrl.neural import (
    MLPSpec,
    SPGDOptions,
    drnn_convex_objective,
    drnn_objective,
    init_weights,
    lipschitz_upper,
    nn_backprop,
    nn_forward,
    nn_predict,
    operator_norm,
    prox_macs,
    prox_mars,
    prox_operator_norm,
    prox_spectral,
    singular_value_threshold,
    train_spgd,
    weights_from_dict,
    weights_to_dict,
    weights_to_json,
)

from oracles import prox_oracle

PROX = {1.0: prox_macs, 2.0: prox_spectral, np.inf: prox_mars}


def _random_net(rng, acts=("tanh", "sigmoid"), max_layers=3, max_width=8, p=2.0):
    L = int(rng.integers(1, max_layers + 1))
    sizes = [int(rng.integers(1, max_width + 1)) for _ in range(L)] + [1]
    spec = MLPSpec(sizes, [str(rng.choice(acts)) for _ in range(L)], p)
    return spec, [2 * W for W in init_weights(spec, int(rng.integers(1 << 30)))]


def _reference_forward(spec, ws, x):
    """Plain re-evaluation with no shared code."""
    acts = {"tanh": np.tanh, "sigmoid": lambda z: 1 / (1 + np.exp(-z)), "relu": lambda z: np.maximum(z, 0),
            "identity": lambda z: z, "softmax": lambda z: np.exp(z - z.max()) / np.exp(z - z.max()).sum(),
            "elu": lambda z: np.where(z > 0, z, spec.elu_alpha * (np.exp(np.minimum(z, 0)) - 1))}
    h = np.asarray(x, float)
    for W, a in zip(ws, spec.activations):
        h = acts[a.value](W @ h)
    return float(h[0])


# --- forward pass ---------------------------------------------------------

def test_relu_identity_passthrough():
    spec = MLPSpec([3, 3, 1], ["relu", "relu"])
    x = np.array([0.5, 2.0, 0.0])
    val, (zs, xs) = nn_forward(spec, [np.eye(3), np.array([[1.0, 0.0, 0.0]])], x, return_cache=True)
    np.testing.assert_array_equal(xs[1].ravel(), x)
    assert val == 0.5


def test_zero_weights_sigmoid():
    spec = MLPSpec([4, 1], ["sigmoid"])
    assert nn_forward(spec, [np.zeros((1, 4))], np.ones(4)) == 0.5


@pytest.mark.parametrize("seed", range(5))
def test_forward_matches_reference(seed):
    rng = np.random.default_rng(seed)
    spec, ws = _random_net(rng, acts=("tanh", "sigmoid", "relu", "elu", "identity"))
    X = rng.normal(size=(7, spec.sizes[0]))
    out = nn_predict(spec, ws, X)
    for i in range(7):
        assert out[i] == pytest.approx(_reference_forward(spec, ws, X[i]), rel=1e-13, abs=1e-15)
        assert nn_forward(spec, ws, X[i]) == pytest.approx(out[i], rel=1e-14, abs=1e-15)


def test_softmax_hidden_layer():
    spec = MLPSpec([2, 3, 1], ["softmax", "identity"])
    ws = init_weights(spec, 1)
    x = np.array([0.3, -0.7])
    assert nn_forward(spec, ws, x) == pytest.approx(_reference_forward(spec, ws, x))


def test_spec_validation():
    with pytest.raises(InputError):
        MLPSpec([2, 2], ["tanh"])  # output width must be 1
    with pytest.raises(InputError):
        MLPSpec([2, 1], ["softmax"])
    with pytest.raises(InputError):
        MLPSpec([2, 3, 1], ["tanh"])
    spec = MLPSpec([2, 1], ["tanh"])
    with pytest.raises(DimensionMismatch):
        nn_forward(spec, [np.zeros((1, 3))], [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        nn_forward(spec, [np.zeros((1, 2))], [1.0, 2.0, 3.0])


# --- operator norms and Lipschitz bounds ----------------------------------

def test_operator_norm_examples():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert operator_norm(A, 1) == 6.0
    assert operator_norm(A, np.inf) == 7.0
    for p in (1, 2, np.inf):
        assert operator_norm(np.eye(3), p) == pytest.approx(1.0)
    u, v = np.array([1.0, 2.0, 2.0]), np.array([3.0, 4.0])
    assert operator_norm(np.outer(u, v), 2) == pytest.approx(15.0)


@pytest.mark.parametrize("p", [1.0, 2.0, np.inf])
def test_operator_norm_is_sup_over_unit_ball(p):
    rng = np.random.default_rng(0)
    W = rng.normal(size=(3, 4))
    # p=1 and p=inf attain the sup at a vertex of the unit ball
    if p == 1.0:
        best = max(np.abs(W[:, j]).sum() for j in range(4))
    elif p == np.inf:
        signs = np.array(np.meshgrid(*[[-1, 1]] * 4)).reshape(4, -1).T
        best = max(np.abs(W @ s).max() for s in signs)
    else:
        V = rng.normal(size=(20000, 4))
        best = max(np.linalg.norm(W @ v) / np.linalg.norm(v) for v in V)
        assert best <= operator_norm(W, p) + 1e-12
        return
    assert operator_norm(W, p) == pytest.approx(best)


def test_lipschitz_upper_examples():
    spec = MLPSpec([2, 2, 1], ["relu", "relu"])
    ws = [np.eye(2), np.array([[1.0, 0.0]])]
    assert lipschitz_upper(spec, ws) == pytest.approx(1.0)
    assert lipschitz_upper(spec, [3 * ws[0], ws[1]]) == pytest.approx(3.0)
    elu = MLPSpec([2, 1], ["elu"], elu_alpha=2.5)
    assert lipschitz_upper(elu, [np.array([[1.0, 0.0]])]) == pytest.approx(2.5)


@pytest.mark.parametrize("p", [1.0, 2.0, np.inf])
def test_lipschitz_upper_dominates_samples(p):
    rng = np.random.default_rng(3)
    for _ in range(5):
        spec, ws = _random_net(rng, acts=("tanh", "sigmoid", "relu", "elu"), p=p)
        X = rng.normal(size=(1000, spec.sizes[0]))
        Y = X + rng.normal(size=X.shape) * rng.choice([1e-3, 1e-1, 1.0], size=(1000, 1))
        diff = np.abs(nn_predict(spec, ws, X) - nn_predict(spec, ws, Y))
        dist = np.linalg.norm(X - Y, ord=p, axis=1)
        assert np.max(diff / dist) <= lipschitz_upper(spec, ws) * (1 + 1e-12)


# --- objectives -----------------------------------------------------------

def _cls(seed, N=6, n=2):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(N, n)), np.where(rng.random(N) < 0.5, -1.0, 1.0), "cls")


def test_objectives_at_zero_radius_are_empirical():
    ds = _cls(0)
    spec = MLPSpec([2, 3, 1], ["tanh", "tanh"])
    ws = init_weights(spec, 0)
    emp = np.mean(loss_eval(LossSpec.logloss(), ds.outputs * nn_predict(spec, ws, ds.inputs)))
    assert drnn_objective(spec, ws, ds, LossSpec.logloss(), 0.0, 0.5) == pytest.approx(emp)
    assert drnn_convex_objective(spec, ws, ds, LossSpec.logloss(), 0.0) == pytest.approx(emp)


def test_objective_kappa_inf_uses_product():
    ds = _cls(1)
    spec = MLPSpec([2, 3, 1], ["tanh", "identity"])
    ws = init_weights(spec, 2)
    emp = drnn_objective(spec, ws, ds, LossSpec.hinge(), 0.0)
    assert drnn_objective(spec, ws, ds, LossSpec.hinge(), 0.4) == pytest.approx(emp + 0.4 * lipschitz_upper(spec, ws))
    # small weights: the flip term c / kappa = 2 / 0.5 dominates for a bounded output
    spec_b = MLPSpec([2, 1], ["tanh"])
    wb = [np.array([[0.1, 0.1]])]
    e = drnn_objective(spec_b, wb, ds, LossSpec.hinge(), 0.0)
    assert drnn_objective(spec_b, wb, ds, LossSpec.hinge(), 0.3, 0.5) == pytest.approx(e + 0.3 * 4.0)
    with pytest.raises(InputError):
        drnn_objective(spec, ws, ds, LossSpec.hinge(), 0.3, 0.5)


def test_single_linear_layer_bounds_worst_case():
    ds = Dataset([[1.0, -0.5]], [1], "cls")
    spec = MLPSpec([2, 1], ["identity"])
    w = np.array([[0.8, 0.3]])
    exact = regularized_objective_classification(ds, LossSpec.hinge(), w[0], 0.2, np.inf, 2.0)
    assert drnn_objective(spec, [w], ds, LossSpec.hinge(), 0.2) >= exact - 1e-12
    assert drnn_objective(spec, [w], ds, LossSpec.hinge(), 0.2) == pytest.approx(exact)


def test_convex_objective_single_layer_matches_product_form():
    ds = Dataset([[1.0, 2.0], [0.0, -1.0]], [0.5, 1.0])
    spec = MLPSpec([2, 1], ["identity"], p=np.inf)
    w = [np.array([[0.4, -0.2]])]
    loss = LossSpec.pinball(0.3)
    rb = 0.35
    assert drnn_convex_objective(spec, w, ds, loss, rb) == pytest.approx(
        drnn_objective(spec, w, ds, loss, rb / 0.7))


def test_am_gm_between_sum_and_product():
    rng = np.random.default_rng(5)
    for _ in range(20):
        spec, ws = _random_net(rng, acts=("tanh",))
        norms = np.array([operator_norm(W, 2) for W in ws])
        assert norms.mean() >= np.prod(norms) ** (1 / len(norms)) - 1e-12


# --- proximal operators ---------------------------------------------------

@pytest.mark.parametrize("p", [1.0, 2.0, np.inf])
def test_prox_matches_conic_oracle(p):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        W = rng.normal(size=(int(rng.integers(1, 4)), int(rng.integers(1, 5))))
        eta = float(rng.uniform(0.05, 2.0))
        worst = max(worst, np.abs(PROX[p](W, eta) - prox_oracle(W, eta, p)).max())
    assert worst <= 1e-6


@pytest.mark.parametrize("p", [1.0, 2.0, np.inf])
def test_prox_beats_random_perturbations(p):
    rng = np.random.default_rng(12)
    for _ in range(5):
        W = rng.normal(size=(3, 3))
        eta = float(rng.uniform(0.1, 1.5))
        P = PROX[p](W, eta)
        obj = lambda X: eta * operator_norm(X, p) + 0.5 * np.sum((X - W) ** 2)
        base = obj(P)
        deltas = rng.normal(size=(1000, 3, 3))
        deltas *= 1e-3 / np.linalg.norm(deltas.reshape(1000, -1), axis=1)[:, None, None]
        assert min(obj(P + d) for d in deltas) >= base - 1e-12


@pytest.mark.parametrize("p", [1.0, 2.0, np.inf])
def test_prox_limits(p):
    W = np.random.default_rng(13).normal(size=(2, 3))
    np.testing.assert_array_equal(PROX[p](W, 0.0), W)
    np.testing.assert_allclose(PROX[p](W, 1e3), 0.0, atol=1e-12)
    assert prox_operator_norm(W, 0.4, p) == pytest.approx(PROX[p](W, 0.4))


def test_prox_spectral_diag():
    # the prox of the spectral norm clips the singular values (3, 1) to a common level
    np.testing.assert_allclose(prox_spectral(np.diag([3.0, 1.0]), 2.0), np.eye(2), atol=1e-12)
    np.testing.assert_allclose(prox_spectral(np.diag([3.0, 1.0]), 1.0), np.diag([2.0, 1.0]), atol=1e-12)
    # soft thresholding of the singular values is the nuclear-norm prox
    np.testing.assert_allclose(singular_value_threshold(np.diag([3.0, 1.0]), 2.0), np.diag([1.0, 0.0]), atol=1e-12)


def test_prox_mars_row_vector_is_transposed_macs():
    w = np.array([[3.0, -1.0, 0.5]])
    np.testing.assert_allclose(prox_mars(w, 0.7), prox_macs(w.T, 0.7).T)


# --- gradients ------------------------------------------------------------

def _fd_grads(f, ws, h=1e-6):
    out = []
    for m, W in enumerate(ws):
        g = np.zeros_like(W)
        for idx in np.ndindex(W.shape):
            a = [V.copy() for V in ws]
            b = [V.copy() for V in ws]
            a[m][idx] += h
            b[m][idx] -= h
            g[idx] = (f(a) - f(b)) / (2 * h)
        out.append(g)
    return out


@pytest.mark.parametrize("seed", range(10))
def test_backprop_matches_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    spec, ws = _random_net(rng)
    x = rng.normal(size=spec.sizes[0])
    if seed % 2:
        y, loss, task = float(rng.choice([-1.0, 1.0])), LossSpec.logloss(), "classification"
        f = lambda v: float(loss_eval(loss, y * nn_forward(spec, v, x)))
    else:
        y, loss, task = float(rng.normal()), LossSpec.huber(10.0), "regression"
        f = lambda v: float(loss_eval(loss, nn_forward(spec, v, x) - y))
    grads = nn_backprop(spec, ws, x, y, loss, task)
    for g, fd in zip(grads, _fd_grads(f, ws)):
        assert np.abs(g - fd).max() <= 1e-5 * max(np.abs(fd).max(), 1e-3)


def test_backprop_zero_loss_and_linear_closed_form():
    spec = MLPSpec([3, 1], ["identity"])
    w = np.array([[0.5, -1.0, 2.0]])
    x = np.array([1.0, 2.0, -0.5])
    y = float((w @ x)[0])
    np.testing.assert_array_equal(nn_backprop(spec, [w], x, y, LossSpec.huber(5.0))[0], 0.0)
    g = nn_backprop(spec, [w], x, y - 0.3, LossSpec.huber(5.0))[0]
    np.testing.assert_allclose(g, 0.3 * x[None, :], atol=1e-15)


# --- stochastic proximal gradient -----------------------------------------

def _linear_data(seed=0, N=50):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(N, 3))
    w_true = np.array([0.5, -1.0, 2.0])
    return Dataset(X, X @ w_true), w_true


def test_spgd_recovers_least_squares_weights():
    ds, w_true = _linear_data()
    spec = MLPSpec([3, 1], ["identity"])
    res = train_spgd(spec, ds, LossSpec.huber(1e6), 0.0, SPGDOptions(epochs=200, eta0=0.05, momentum=0.5))
    w_ls = np.linalg.lstsq(ds.inputs, ds.outputs, rcond=None)[0]
    np.testing.assert_allclose(res.weights[0].ravel(), w_ls, atol=1e-2)
    np.testing.assert_allclose(res.weights[0].ravel(), w_true, atol=1e-2)


def test_spgd_deterministic_and_trace(tmp_path):
    ds, _ = _linear_data(1, N=20)
    spec = MLPSpec([3, 2, 1], ["tanh", "identity"])
    opts = SPGDOptions(epochs=15, eta0=1e-2, decay=50.0, seed=4)
    a = train_spgd(spec, ds, LossSpec.absolute(), 0.05, opts)
    b = train_spgd(spec, ds, LossSpec.absolute(), 0.05, opts)
    assert a.trace == b.trace
    for Wa, Wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(Wa, Wb)
    a.write_trace(tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "epoch,objective,reg_term" and len(lines) == len(a.trace) + 1


def test_spgd_large_regularization_zeroes_weights():
    ds, _ = _linear_data(2, N=20)
    spec = MLPSpec([3, 1], ["identity"], p=np.inf)
    res = train_spgd(spec, ds, LossSpec.absolute(), 1e3, SPGDOptions(epochs=5, eta0=1e-2))
    np.testing.assert_allclose(res.weights[0], 0.0, atol=1e-12)
    at_zero = drnn_convex_objective(spec, [np.zeros((1, 3))], ds, LossSpec.absolute(), 1e3)
    assert res.trace[-1][1] == pytest.approx(at_zero)


def test_spgd_best_objective_non_increasing_convex_case():
    ds, _ = _linear_data(3, N=30)
    spec = MLPSpec([3, 1], ["identity"])
    res = train_spgd(spec, ds, LossSpec.huber(1.0), 0.0, SPGDOptions(epochs=40, eta0=1e-2, momentum=0.0, tol=1e-15))
    best = np.minimum.accumulate([t[1] for t in res.trace])
    assert np.all(np.diff(best) <= 0)
    assert res.trace[-1][1] < res.trace[0][1]


def test_spgd_divergence():
    ds, _ = _linear_data(4, N=10)
    spec = MLPSpec([3, 1], ["identity"])
    with pytest.raises(DivergenceDetected):
        train_spgd(spec, ds, LossSpec.huber(1e12), 0.0, SPGDOptions(epochs=50, eta0=10.0, momentum=0.9))


# --- serialization --------------------------------------------------------

def test_weights_json_round_trip():
    spec = MLPSpec([2, 3, 1], ["elu", "sigmoid"], p=np.inf, elu_alpha=0.5)
    ws = init_weights(spec, 9)
    d = json.loads(weights_to_json(spec, ws))
    assert d["p"] == "inf" and d["layers"][0]["rows"] == 3 and d["layers"][0]["activation"] == "elu"
    spec2, ws2 = weights_from_dict(d)
    assert spec2 == spec
    for a, b in zip(ws, ws2):
        np.testing.assert_array_equal(a, b)
    assert weights_to_dict(spec, ws) == d
