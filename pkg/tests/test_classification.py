import numpy as np
import pytest
from scipy.optimize import minimize

from wassdrl.classification import (
    ClassificationProblem,
    check_non_separability,
    predict,
    regularized_objective_classification,
    robust_loss_classification,
    train_lipschitz_classification,
    train_pwl_classification,
    wc_expected_loss_classification,
)
from wassdrl.core import Dataset, LossSpec, SupportPolytope, TransportCost, loss_eval
from wassdrl.errors import BoundedSupportUnsupported, DimensionMismatch, NotPWL

from oracles import classification_grid_oracle, scalar_min


def _random(seed, N=8, n=2, flip=0.2):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(N, n))
    y = np.sign(X @ rng.normal(size=n) + 1e-12)
    y[rng.random(N) < flip] *= -1
    return Dataset(X, np.where(y == 0, 1.0, y), "cls")


def _problem(ds, loss, rho, kappa=np.inf, p=np.inf, support=None):
    return ClassificationProblem(ds, loss, support, TransportCost.classification(p, kappa), rho)


# --- training -------------------------------------------------------------

def test_rho_zero_hinge_is_empirical_minimum():
    ds = Dataset([[1.0], [2.0], [-1.0], [0.3]], [1, 1, -1, -1], "cls")
    fit = train_pwl_classification(_problem(ds, LossSpec.hinge(), 0.0))
    f = lambda w: float(np.mean(np.maximum(0, 1 - ds.outputs * ds.inputs[:, 0] * w)))
    assert fit.value == pytest.approx(scalar_min(f, -10, 10)[1], abs=1e-8)


@pytest.mark.parametrize("p", [1.0, np.inf])
def test_kappa_inf_collapses_to_regularized_form(p):
    ds = _random(1)
    fit = train_pwl_classification(_problem(ds, LossSpec.hinge(), 0.2, np.inf, p))
    reg = regularized_objective_classification(ds, LossSpec.hinge(), fit.hypothesis.w, 0.2, np.inf, p)
    assert fit.value == pytest.approx(reg, abs=1e-6)


def test_single_sample_at_origin():
    ds = Dataset([[0.0]], [1], "cls")
    fit = train_pwl_classification(_problem(ds, LossSpec.hinge(), 0.5))
    _, best = scalar_min(lambda w: 1.0 + 0.5 * abs(w), -3, 3)
    assert fit.value == pytest.approx(best, abs=1e-9)
    assert fit.value == pytest.approx(1.0, abs=1e-12)


def test_logloss_rho_zero_matches_gradient_descent_reference():
    ds = _random(2, N=10, flip=0.3)
    fit = train_lipschitz_classification(_problem(ds, LossSpec.logloss(), 0.0, p=2))
    X, y = ds.inputs, ds.outputs
    f = lambda w: float(np.mean(np.logaddexp(0, -y * (X @ w))))
    g = lambda w: -(X.T @ (y / (1 + np.exp(y * (X @ w))))) / len(y)
    ref = minimize(f, np.zeros(2), jac=g, method="BFGS", options={"gtol": 1e-12})
    assert fit.value == pytest.approx(ref.fun, rel=1e-5)


def test_kappa_inf_lipschitz_route_is_norm_regularized():
    ds = _random(3)
    fit = train_lipschitz_classification(_problem(ds, LossSpec.smooth_hinge(), 0.1, p=2))
    w = fit.hypothesis.w
    emp = np.mean(loss_eval(LossSpec.smooth_hinge(), ds.outputs * (ds.inputs @ w)))
    assert fit.value == pytest.approx(emp + 0.1 * np.linalg.norm(w), rel=1e-4)


def test_symmetric_two_point_dataset():
    ds = Dataset([[1.0], [-1.0]], [1, -1], "cls")
    rho = 0.2
    fit = train_lipschitz_classification(_problem(ds, LossSpec.logloss(), rho, p=2))
    assert fit.hypothesis.w[0] >= 0
    # both samples have margin w, so the objective is softplus(-w) + rho |w|
    obj = lambda w: float(np.logaddexp(0, -w) + rho * abs(w))
    _, best = scalar_min(obj, -5, 5)
    assert fit.value == pytest.approx(best, rel=1e-5)


def test_lipschitz_route_rejects_bounded_support():
    ds = _random(0, N=3)
    with pytest.raises(BoundedSupportUnsupported):
        train_lipschitz_classification(_problem(ds, LossSpec.logloss(), 0.1, support=SupportPolytope.box([-1, -1],
                                                                                                      [1, 1])))


def test_pwl_route_rejects_logloss():
    with pytest.raises(NotPWL):
        train_pwl_classification(_problem(_random(0), LossSpec.logloss(), 0.1))


def test_large_rho_drives_w_to_zero():
    ds = _random(4)
    fit = train_pwl_classification(_problem(ds, LossSpec.hinge(), 1e3))
    assert np.abs(fit.hypothesis.w).max() < 1e-9
    assert fit.value == pytest.approx(1.0, abs=1e-9)


def test_finite_kappa_lp_matches_composite():
    ds = _random(5, N=6)
    prob = _problem(ds, LossSpec.hinge(), 0.3, kappa=0.5, p=np.inf)
    lp = train_pwl_classification(prob)
    comp = train_lipschitz_classification(prob)
    assert comp.value == pytest.approx(lp.value, rel=1e-5)


# --- worst-case expectation -----------------------------------------------

def test_wc_rho_zero_is_empirical():
    ds = _random(6)
    w = np.array([0.4, -1.0])
    emp = np.mean(np.maximum(0, 1 - ds.outputs * (ds.inputs @ w)))
    assert wc_expected_loss_classification(_problem(ds, LossSpec.hinge(), 0.0, 0.5), w) == pytest.approx(emp)


def test_wc_single_sample_value():
    ds = Dataset([[1.0]], [1], "cls")
    val = wc_expected_loss_classification(_problem(ds, LossSpec.hinge(), 0.1, p=2), [0.5])
    assert val == pytest.approx(0.55, abs=1e-12)
    ref = classification_grid_oracle(ds.inputs, ds.outputs, np.array([0.5]), lambda z: loss_eval(LossSpec.hinge(), z),
                                     1.0, 0.1, 2.0, np.inf, [-4.0], [6.0], points_per_axis=1001)
    assert val == pytest.approx(ref, rel=0.02)


@pytest.mark.parametrize("bounded", [False, True])
def test_wc_monotone_in_rho_and_kappa(bounded):
    ds = _random(7, N=4)
    sup = SupportPolytope.box([-3, -3], [3, 3]) if bounded else None
    w = [0.8, -0.3]
    rhos = (0.0, 0.05, 0.1, 0.5, 1.0)
    vals = [wc_expected_loss_classification(_problem(ds, LossSpec.hinge(), r, 0.5, support=sup), w) for r in rhos]
    assert np.all(np.diff(vals) >= -1e-9)
    kaps = (0.0, 0.1, 0.5, 2.0, np.inf)
    vals = [wc_expected_loss_classification(_problem(ds, LossSpec.hinge(), 0.3, k, support=sup), w) for k in kaps]
    assert np.all(np.diff(vals) <= 1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_kappa_zero_label_flip_invariance(seed):
    ds = _random(seed, N=3)
    w = np.random.default_rng(seed).normal(size=2)
    base = wc_expected_loss_classification(_problem(ds, LossSpec.hinge(), 0.2, 0.0), w)
    for i in range(ds.N):
        y = ds.outputs.copy()
        y[i] *= -1
        flipped = Dataset(ds.inputs, y, "cls")
        assert wc_expected_loss_classification(_problem(flipped, LossSpec.hinge(), 0.2, 0.0), w) == pytest.approx(
            base, abs=1e-9)


def test_bounded_micro_instance_matches_grid():
    ds = Dataset([[0.5, -0.5], [-0.2, 0.1]], [1, -1], "cls")
    lo, hi = -np.ones(2), np.ones(2)
    w = np.array([1.2, 0.4])
    prob = _problem(ds, LossSpec.hinge(), 0.2, 0.25, p=1.0, support=SupportPolytope.box(lo, hi))
    val = wc_expected_loss_classification(prob, w)
    ref = classification_grid_oracle(ds.inputs, ds.outputs, w, lambda z: loss_eval(LossSpec.hinge(), z), 1.0,
                                     0.2, 1.0, 0.25, lo, hi)
    assert val == pytest.approx(ref, rel=0.02)


# --- non-separability and the robust sandwich ------------------------------

def test_non_separability_examples():
    ds = Dataset([[2.0], [-2.0]], [1, -1], "cls")
    assert not check_non_separability(ds, LossSpec.hinge(), [1.0])  # margins 2
    assert check_non_separability(ds, LossSpec.hinge(), [-1.0])  # misclassified
    assert not check_non_separability(_random(0), LossSpec.logloss(), [5.0, -5.0])
    assert check_non_separability(ds, LossSpec.smooth_hinge(), [-1.0])


@pytest.mark.parametrize("seed", range(20))
def test_robust_sandwich(seed):
    ds = _random(seed, N=4)
    w = np.random.default_rng(200 + seed).normal(size=2)
    rho = 0.15
    robust = robust_loss_classification(ds, LossSpec.hinge(), w, rho, p=2)
    dro = wc_expected_loss_classification(_problem(ds, LossSpec.hinge(), rho, p=2), w)
    assert robust <= dro + 1e-9
    if check_non_separability(ds, LossSpec.hinge(), w):
        assert robust == pytest.approx(dro, abs=1e-6)


def test_separable_instance_bound_only():
    ds = Dataset([[3.0], [-3.0]], [1, -1], "cls")
    robust = robust_loss_classification(ds, LossSpec.hinge(), [1.0], 0.1)
    dro = wc_expected_loss_classification(_problem(ds, LossSpec.hinge(), 0.1, p=2), [1.0])
    assert robust == 0.0 and dro > 0.0


def test_robust_rho_zero_equality():
    ds = _random(9)
    w = [0.3, 0.3]
    emp = np.mean(np.maximum(0, 1 - ds.outputs * (ds.inputs @ w)))
    assert robust_loss_classification(ds, LossSpec.hinge(), w, 0.0) == pytest.approx(emp)


# --- prediction -----------------------------------------------------------

def test_predict_examples():
    assert predict([1, 0], [2, 5]) == 1
    assert predict([1, -1], [3, 3]) == 1
    assert predict([-1, 1], [3, 1]) == -1
    np.testing.assert_array_equal(predict([1.0], [[1.0], [-1.0], [0.0]]), [1, -1, 1])
    with pytest.raises(DimensionMismatch):
        predict([1, 0], [1, 2, 3])
