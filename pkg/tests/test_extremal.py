import json

import numpy as np
import pytest

from wassdrl.classification import ClassificationProblem, regularized_objective_classification, \
    wc_expected_loss_classification
from wassdrl.core import Dataset, LossSpec, SupportPolytope, Task, TransportCost
from wassdrl.errors import GammaOutOfRange, KappaInfinite, NotPWL, UnsupportedNorm
from wassdrl.extremal import (
    WorstCaseDistribution,
    unit_ball_maximizer,
    worstcase_classification_exact,
    worstcase_classification_sequence,
    worstcase_regression_exact,
    worstcase_regression_sequence,
)
from wassdrl.regression import RegressionProblem, regularized_objective_regression, wc_expected_loss_regression


def _reg(seed, N=3, n=2):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(N, n)), rng.normal(size=N)), rng.normal(size=n)


def _cls(seed, N=3, n=2):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(N, n)), np.where(rng.random(N) < 0.5, -1.0, 1.0), "cls"), rng.normal(size=n)


def _check_invariants(d, ds, prob):
    assert np.all(d.masses >= 0)
    assert d.masses.sum() == pytest.approx(1.0, abs=1e-9)
    for i in range(ds.N):
        assert d.masses[d.sources == i].sum() == pytest.approx(1.0 / ds.N, abs=1e-9)
    assert d.transport_cost(ds, prob.metric) <= prob.rho + 1e-7
    S = prob.support
    if not S.is_unbounded:
        for x, y in zip(d.points, d.labels):
            pt = np.append(x, y) if S.has_output else x
            assert S.contains(pt, tol=1e-7)


# --- regression, exact ----------------------------------------------------

def test_regression_rho_zero_is_empirical():
    ds, w = _reg(0)
    prob = RegressionProblem(ds, LossSpec.absolute(), metric=TransportCost.joint(np.inf), rho=0.0)
    d = worstcase_regression_exact(prob, w)
    order = np.argsort(d.sources)
    np.testing.assert_allclose(d.points[order], ds.inputs, atol=1e-12)
    np.testing.assert_allclose(d.labels[order], ds.outputs, atol=1e-12)
    np.testing.assert_allclose(d.masses, 1 / 3, atol=1e-12)
    assert d.gap_bound == 0.0


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("p", [1.0, np.inf])
@pytest.mark.parametrize("bounded", [False, True])
def test_regression_duality(seed, p, bounded):
    ds, w = _reg(seed)
    sup = SupportPolytope.box(-4 * np.ones(3), 4 * np.ones(3), with_output=True) if bounded else None
    loss = [LossSpec.absolute(), LossSpec.eps_insensitive(0.3), LossSpec.pinball(0.2)][seed % 3]
    prob = RegressionProblem(ds, loss, sup, TransportCost.joint(p), rho=0.3)
    d = worstcase_regression_exact(prob, w)
    assert d.attained_value == pytest.approx(wc_expected_loss_regression(prob, w), abs=1e-6)
    assert d.expected_loss(loss, w, "regression") == pytest.approx(d.attained_value, abs=1e-9)
    _check_invariants(d, ds, prob)


def test_regression_single_sample_displacement():
    ds = Dataset([[1.0]], [0.0])
    prob = RegressionProblem(ds, LossSpec.absolute(), metric=TransportCost.joint(np.inf), rho=0.2)
    d = worstcase_regression_exact(prob, [1.0])
    # a hand-built plan: move y down by rho (costs rho in the inf-norm), residual grows by rho * ||(w,-1)||_1
    hand = 1.0 + 0.2 * 2.0
    assert d.attained_value == pytest.approx(hand, abs=1e-9)


def test_regression_exact_rejects_euclidean_and_smooth():
    ds, w = _reg(1)
    with pytest.raises(UnsupportedNorm):
        worstcase_regression_exact(RegressionProblem(ds, LossSpec.absolute(), rho=0.1), w)
    with pytest.raises(NotPWL):
        worstcase_regression_exact(RegressionProblem(ds, LossSpec.huber(1.0), metric=TransportCost.joint(1),
                                                     rho=0.1), w)


# --- regression, sequence -------------------------------------------------

def test_regression_sequence_gamma_one_rho_zero():
    ds, w = _reg(2)
    d = worstcase_regression_sequence(RegressionProblem(ds, LossSpec.huber(1.0), rho=0.0), w, 1.0)
    assert len(d.masses) == ds.N
    emp = np.mean(np.where(np.abs(r := ds.inputs @ w - ds.outputs) <= 1, 0.5 * r**2, np.abs(r) - 0.5))
    assert d.attained_value == pytest.approx(emp, abs=1e-12)


@pytest.mark.parametrize("loss", [LossSpec.huber(1.0), LossSpec.absolute(), LossSpec.pinball(0.3)],
                         ids=lambda l: l.kind.value)
def test_regression_sequence_converges(loss):
    ds, w = _reg(3)
    prob = RegressionProblem(ds, loss, rho=0.2)
    sup = regularized_objective_regression(ds, loss, w, 0.2, prob.metric)
    gaps = []
    for g in (1e-1, 1e-2, 1e-3):
        d = worstcase_regression_sequence(prob, w, g)
        assert d.attained_value <= sup + 1e-9
        assert d.transport_cost(ds, prob.metric) <= 0.2 + 1e-7
        gaps.append(sup - d.attained_value)
    assert gaps[0] >= gaps[1] - 1e-12 and gaps[1] >= gaps[2] - 1e-12 and gaps[2] >= -1e-12
    assert gaps[2] < 1e-2


def test_unit_ball_maximizer_euclidean():
    c = np.array([0.5, -1.0])
    np.testing.assert_allclose(unit_ball_maximizer(c, 2), c / np.linalg.norm(c))
    for p, q in [(1.0, np.inf), (np.inf, 1.0)]:
        x = unit_ball_maximizer(c, p)
        assert c @ x == pytest.approx(np.linalg.norm(c, q))


def test_regression_sequence_gamma_range():
    ds, w = _reg(0)
    prob = RegressionProblem(ds, LossSpec.huber(1.0), rho=0.1)
    for g in (0.0, 1.5):
        with pytest.raises(GammaOutOfRange):
            worstcase_regression_sequence(prob, w, g)


# --- classification, exact ------------------------------------------------

def test_classification_rho_zero_is_empirical():
    ds, w = _cls(0)
    prob = ClassificationProblem(ds, LossSpec.hinge(), metric=TransportCost.classification(np.inf, 0.5), rho=0.0)
    d = worstcase_classification_exact(prob, w)
    np.testing.assert_allclose(np.sort(d.masses), 1 / 3, atol=1e-12)
    assert d.transport_cost(ds, prob.metric) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("kappa", [0.25, 1.0, np.inf])
@pytest.mark.parametrize("bounded", [False, True])
def test_classification_duality(seed, kappa, bounded):
    ds, w = _cls(seed)
    sup = SupportPolytope.box(-4 * np.ones(2), 4 * np.ones(2)) if bounded else None
    p = [1.0, np.inf][seed % 2]
    prob = ClassificationProblem(ds, LossSpec.hinge(), sup, TransportCost.classification(p, kappa), rho=0.3)
    d = worstcase_classification_exact(prob, w)
    assert d.attained_value == pytest.approx(wc_expected_loss_classification(prob, w), abs=1e-6)
    _check_invariants(d, ds, prob)
    if np.isinf(kappa):
        src_labels = ds.outputs[d.sources]
        np.testing.assert_array_equal(d.labels, src_labels)


def test_classification_single_sample_flips_label():
    # kappa < rho * N: flipping costs 0.2 of the 0.5 budget and turns margin 2 into -2
    ds = Dataset([[2.0]], [1], "cls")
    prob = ClassificationProblem(ds, LossSpec.hinge(), metric=TransportCost.classification(np.inf, 0.2), rho=0.5)
    d = worstcase_classification_exact(prob, [1.0])
    flipped = d.masses[d.labels == -1].sum()
    assert flipped > 0
    no_flip = max(0.0, 1 - 2.0 + 0.5)  # spend the whole budget on x
    flip = 1 + 2.0 + (0.5 - 0.2)  # flip, then move x with what remains
    assert d.attained_value == pytest.approx(max(flip, no_flip), abs=1e-9)


def test_classification_exact_rejects_euclidean():
    ds, w = _cls(1)
    with pytest.raises(UnsupportedNorm):
        worstcase_classification_exact(ClassificationProblem(ds, LossSpec.hinge(), rho=0.1), w)


# --- classification, sequence ---------------------------------------------

def test_classification_sequence_small_rho_near_empirical():
    ds, w = _cls(4)
    prob = ClassificationProblem(ds, LossSpec.logloss(), metric=TransportCost.classification(2, 0.5), rho=1e-6)
    d = worstcase_classification_sequence(prob, w, 1e-6)
    emp = np.mean(np.logaddexp(0, -ds.outputs * (ds.inputs @ w)))
    assert d.attained_value == pytest.approx(emp, abs=1e-8)


@pytest.mark.parametrize("loss", [LossSpec.logloss(), LossSpec.hinge(), LossSpec.smooth_hinge()],
                         ids=lambda l: l.kind.value)
def test_classification_sequence_converges(loss):
    ds, w = _cls(5, N=4)
    prob = ClassificationProblem(ds, loss, metric=TransportCost.classification(2, 0.5), rho=0.3)
    sup = regularized_objective_classification(ds, loss, w, 0.3, 0.5, 2)
    gaps = []
    for g in (1e-1, 1e-2, 1e-3):
        d = worstcase_classification_sequence(prob, w, g)
        assert d.attained_value <= sup + 1e-9
        assert d.transport_cost(ds, prob.metric) <= 0.3 + 1e-7
        assert d.masses.sum() == pytest.approx(1.0, abs=1e-9)
        gaps.append(sup - d.attained_value)
    assert gaps[0] >= gaps[1] - 1e-12 and gaps[1] >= gaps[2] - 1e-12
    assert gaps[2] < 1e-2


def test_classification_sequence_large_kappa_moves_only_inputs():
    ds, w = _cls(6)
    prob = ClassificationProblem(ds, LossSpec.hinge(), metric=TransportCost.classification(2, 100.0), rho=0.1)
    d = worstcase_classification_sequence(prob, w, 0.01)
    np.testing.assert_array_equal(d.labels, ds.outputs[d.sources])


def test_classification_sequence_errors():
    ds, w = _cls(0)
    with pytest.raises(KappaInfinite):
        worstcase_classification_sequence(ClassificationProblem(ds, LossSpec.hinge(), rho=0.1), w)
    prob = ClassificationProblem(ds, LossSpec.hinge(), metric=TransportCost.classification(2, 1.0), rho=0.1)
    with pytest.raises(GammaOutOfRange):
        worstcase_classification_sequence(prob, w, 0.2)


# --- serialization and resampling -----------------------------------------

def test_json_and_sampling():
    ds, w = _reg(7)
    prob = RegressionProblem(ds, LossSpec.absolute(), metric=TransportCost.joint(1), rho=0.0)
    d = worstcase_regression_exact(prob, w)
    obj = json.loads(d.to_json())
    assert set(obj) == {"atoms", "value", "gap_bound"}
    assert sum(a["mass"] for a in obj["atoms"]) == pytest.approx(1.0)
    sample = d.sample(6, np.random.default_rng(0), Task.REGRESSION)
    assert sample.N == 6
    # masses are 1/3 each, so 6 draws reproduce every training row twice
    rows = sorted(map(tuple, np.column_stack([sample.inputs, sample.outputs]).round(12)))
    expect = sorted(map(tuple, np.column_stack([ds.inputs, ds.outputs]).round(12))) * 2
    assert rows == sorted(expect)


def test_atoms_property():
    d = WorstCaseDistribution(np.array([[1.0], [2.0]]), np.array([1.0, -1.0]), np.array([0.5, 0.5]),
                              np.array([0, 1]), 0.0, 0.0)
    assert d.atoms == [((1.0,), 1.0, 0.5), ((2.0,), -1.0, 0.5)]
