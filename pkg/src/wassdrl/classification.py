"""Distributionally robust linear classification.

The transport cost is ``||x - x'||_p + kappa * 1[y != y']``. For a
piecewise-linear loss and an input support ``{x : C x <= d}`` the worst-case
expected loss is the LP::

    min  lam * rho + (1/N) sum_i s_i
    s.t. mu+_ij . (d - C x_i) + a_j y_i <w, x_i> + b_j <= s_i
         mu-_ij . (d - C x_i) - a_j y_i <w, x_i> + b_j - kappa lam <= s_i
         || a_j y_i w - C' mu+_ij ||_* <= lam,  || a_j y_i w + C' mu-_ij ||_* <= lam
         mu+, mu- >= 0

The second family models label flips and disappears for ``kappa = inf``.
Without support constraints every Lipschitz loss admits the compact form::

    min  lam * rho + (1/N) sum_i max{L(m_i), L(-m_i) - kappa lam}
    s.t. lam >= lip(L) ||w||_*

with margins ``m_i = y_i <w, x_i>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._lpkit import add_norm_le
from .core import (CostKind, Dataset, FitResult, LinearHypothesis, LossSpec, SupportPolytope, Task,
                   TransportCost, loss_derivative, loss_eval, loss_lipschitz, pwl_pieces,
                   steepest_slope_attained)
from .errors import BoundedSupportUnsupported, DimensionMismatch, InputError, SolverDefect, UnsupportedNorm
from .solver.composite import CompositeProblem, solve_composite
from .solver.lp import LPBuilder, solve_lp
from .solver.norms import conjugate_exponent, parse_p, pnorm
from .solver.options import SolveOptions

__all__ = [
    "ClassificationProblem",
    "KAPPA_GRID",
    "train_pwl_classification",
    "train_lipschitz_classification",
    "wc_expected_loss_classification",
    "regularized_objective_classification",
    "check_non_separability",
    "robust_loss_classification",
    "predict",
]

KAPPA_GRID = (0.1, 0.25, 0.5, 0.75, np.inf)


@dataclass(frozen=True, eq=False)
class ClassificationProblem:
    """Distributionally robust classification instance.

    Parameters
    ----------
    dataset : Dataset
        Samples with labels in {-1, +1}.
    loss : LossSpec
        Margin loss ``L(y <w, x>)``.
    support : SupportPolytope, optional
        Input support ``{x : C x <= d}``; defaults to the whole space.
    metric : TransportCost, optional
        Separable classification metric; defaults to ``p = 2``, ``kappa = inf``.
    rho : float
    """

    dataset: Dataset
    loss: LossSpec
    support: SupportPolytope | None = None
    metric: TransportCost = field(default_factory=TransportCost.classification)
    rho: float = 0.0

    def __post_init__(self):
        if self.dataset.task is not Task.CLASSIFICATION:
            raise InputError("classification problems need a classification dataset")
        if not self.rho >= 0:
            raise InputError("rho must be nonnegative")
        if self.metric.kind is not CostKind.SEPARABLE_CLASSIFICATION:
            raise InputError("classification needs the separable classification metric")
        sup = self.support
        if sup is None:
            sup = SupportPolytope.unbounded(self.dataset.n, with_output=False)
            object.__setattr__(self, "support", sup)
        if sup.has_output or sup.n_inputs != self.dataset.n:
            raise DimensionMismatch("support must constrain the inputs only, with matching dimension")

    @property
    def kappa(self) -> float:
        return self.metric.kappa

    def with_rho(self, rho) -> "ClassificationProblem":
        return ClassificationProblem(self.dataset, self.loss, self.support, self.metric, rho)


def _margins(dataset: Dataset, w) -> np.ndarray:
    return dataset.outputs * (dataset.inputs @ np.asarray(w, float))


def _lambda_objective(lam0, rho, kappa, A, B):
    """Minimize ``H(lam) = lam rho + mean max(A_i, B_i - kappa lam)`` over ``lam >= lam0``.

    ``H`` is convex piecewise linear, so its minimum is attained at ``lam0``
    or at a breakpoint ``(B_i - A_i) / kappa``.
    """

    def H(lam):
        if np.isinf(kappa):
            return lam * rho + float(np.mean(A))
        return lam * rho + float(np.mean(np.maximum(A, B - kappa * lam)))

    if np.isinf(kappa) or kappa == 0:
        return lam0, H(lam0)
    cand = np.concatenate([[lam0], (B - A) / kappa])
    cand = cand[cand >= lam0]
    vals = [H(c) for c in cand]
    k = int(np.argmin(vals))
    return float(cand[k]), float(vals[k])


def regularized_objective_classification(dataset: Dataset, loss: LossSpec, w, rho, kappa=np.inf, p=2.0) -> float:
    """Worst-case expected loss without support constraints.

    For ``kappa = inf`` this is ``mean L(m_i) + rho * lip(L) * ||w||_*``;
    otherwise the optimal ``lam`` is found exactly by a breakpoint search.
    """
    w = np.asarray(w, float).ravel()
    m = _margins(dataset, w)
    lam0 = loss_lipschitz(loss) * pnorm(w, conjugate_exponent(parse_p(p)))
    A = loss_eval(loss, m)
    B = loss_eval(loss, -m)
    return _lambda_objective(lam0, rho, kappa, np.atleast_1d(A), np.atleast_1d(B))[1]


def _classification_lp(prob: ClassificationProblem, w_fixed=None):
    ds, sup, metric = prob.dataset, prob.support, prob.metric
    X, y = ds.inputs, ds.outputs
    N, n = X.shape
    pieces = pwl_pieces(prob.loss)
    q = metric.q
    kappa = metric.kappa
    flips = np.isfinite(kappa)
    lp = LPBuilder("min")
    eye = np.eye(n)
    if w_fixed is None:
        w = lp.add_var("w", (n,), lower=-np.inf)
        w_terms = lambda coef: [(w, coef)]  # noqa: E731
        w_const = lambda coef: 0.0  # noqa: E731
    else:
        wf = np.asarray(w_fixed, float).ravel()
        w_terms = lambda coef: []  # noqa: E731
        w_const = lambda coef: float(np.dot(coef, wf))  # noqa: E731
    lam = lp.add_var("lam", lower=0.0)
    s = lp.add_var("s", (N,), lower=-np.inf)
    lp.add_cost(lam, prob.rho)
    lp.add_cost(s, 1.0 / N)

    if sup.is_unbounded:
        for i in range(N):
            for a, b in pieces:
                coef = a * y[i] * X[i]
                lp.add_le(w_terms(coef) + [(s[i], -1.0)], -(w_const(coef) + b))
                if flips:
                    lp.add_le(w_terms(-coef) + [(s[i], -1.0), (lam, -kappa)], -(w_const(-coef) + b))
        for a in sorted({abs(a) for a, _ in pieces}):
            comps = [(w_terms(a * eye[k]), a * w_const(eye[k])) for k in range(n)]
            add_norm_le(lp, comps, [(lam, 1.0)], q)
        return lp.build()

    C, d = sup.C1, sup.d
    m = d.size
    J = len(pieces)
    mu_p = lp.add_var("mu_plus", (N, J, m), lower=0.0)
    mu_m = lp.add_var("mu_minus", (N, J, m), lower=0.0) if flips else None
    for i in range(N):
        slack = d - C @ X[i]
        for j, (a, b) in enumerate(pieces):
            coef = a * y[i] * X[i]
            lp.add_le([(mu_p[i, j], slack)] + w_terms(coef) + [(s[i], -1.0)], -(w_const(coef) + b))
            comps = [(w_terms(a * y[i] * eye[k]) + [(mu_p[i, j], -C[:, k])], a * y[i] * w_const(eye[k]))
                     for k in range(n)]
            add_norm_le(lp, comps, [(lam, 1.0)], q)
            if flips:
                lp.add_le([(mu_m[i, j], slack)] + w_terms(-coef) + [(s[i], -1.0), (lam, -kappa)],
                          -(w_const(-coef) + b))
                comps = [(w_terms(-a * y[i] * eye[k]) + [(mu_m[i, j], -C[:, k])], -a * y[i] * w_const(eye[k]))
                         for k in range(n)]
                add_norm_le(lp, comps, [(lam, 1.0)], q)
    return lp.build()


def _solve(lp, lp_method, opts=None):
    sol = solve_lp(lp, opts, method=lp_method)
    if not sol.optimal:
        raise SolverDefect(f"reformulation LP is {sol.status.value}")
    return sol


def train_pwl_classification(prob: ClassificationProblem, *, lp_method: str = "simplex",
                             opts: SolveOptions | None = None) -> FitResult:
    """Train with a piecewise-linear margin loss via the reformulation LP.

    For the hinge loss this is the distributionally robust support vector
    machine. Unbounded supports with ``p = 2`` go to the composite route.

    Raises
    ------
    NotPWL
    UnsupportedNorm
        ``p = 2`` with a bounded support.
    """
    pwl_pieces(prob.loss)
    if prob.metric.p == 2.0:
        if not prob.support.is_unbounded:
            raise UnsupportedNorm("p=2 with a bounded support is not LP-representable")
        return train_lipschitz_classification(prob, opts=opts)
    sol = _solve(_classification_lp(prob), lp_method, opts)
    return FitResult(LinearHypothesis(sol.get("w")), sol.value, float(sol.get("lam")[0]), "lp")


def train_lipschitz_classification(prob: ClassificationProblem, *, opts: SolveOptions | None = None) -> FitResult:
    """Train with any Lipschitz margin loss (logloss, smooth hinge, hinge, ...)
    over ``(w, lam)`` with the coupling ``lam >= lip(L) ||w||_*``.

    Raises
    ------
    BoundedSupportUnsupported
    """
    if not prob.support.is_unbounded:
        raise BoundedSupportUnsupported("the compact form requires an unbounded input support")
    ds, loss, rho, kappa = prob.dataset, prob.loss, prob.rho, prob.kappa
    X, y = ds.inputs, ds.outputs
    N, n = X.shape
    lip = loss_lipschitz(loss)
    Z = y[:, None] * X
    flips = np.isfinite(kappa)

    def obj(w, lam):
        m = Z @ w
        if not flips:
            return lam * rho + float(np.mean(loss_eval(loss, m)))
        return lam * rho + float(np.mean(np.maximum(loss_eval(loss, m), loss_eval(loss, -m) - kappa * lam)))

    def grad(w, lam):
        m = Z @ w
        if not flips:
            return Z.T @ loss_derivative(loss, m) / N, rho
        keep = loss_eval(loss, m) >= loss_eval(loss, -m) - kappa * lam
        coef = np.where(keep, loss_derivative(loss, m), -loss_derivative(loss, -m))
        return Z.T @ coef / N, rho - kappa * np.mean(~keep)

    res = solve_composite(CompositeProblem(obj, grad, n, coupling_lip=lip, p=prob.metric.p), opts)
    w = res.w
    value = regularized_objective_classification(ds, loss, w, rho, kappa, prob.metric.p)
    return FitResult(LinearHypothesis(w), min(value, res.value), res.lam, "composite", res.converged)


def wc_expected_loss_classification(prob: ClassificationProblem, w, *, lp_method: str = "simplex") -> float:
    """Worst-case expected loss of a fixed hypothesis over the Wasserstein ball."""
    w = np.asarray(getattr(w, "w", w), float).ravel()
    if w.size != prob.dataset.n:
        raise DimensionMismatch("hypothesis dimension does not match the data")
    if prob.support.is_unbounded:
        return regularized_objective_classification(prob.dataset, prob.loss, w, prob.rho, prob.kappa, prob.metric.p)
    pwl_pieces(prob.loss)
    if prob.metric.p == 2.0:
        raise UnsupportedNorm("p=2 with a bounded support is not LP-representable")
    return _solve(_classification_lp(prob, w_fixed=w), lp_method).value


def check_non_separability(dataset: Dataset, loss: LossSpec, w) -> bool:
    """True iff some margin sits where ``L`` is differentiable with ``|L'| = lip(L)``.

    Logloss never qualifies because its steepest slope is only approached
    as the margin tends to minus infinity.
    """
    w = np.asarray(getattr(w, "w", w), float).ravel()
    return bool(np.any(steepest_slope_attained(loss, _margins(dataset, w))))


def robust_loss_classification(dataset: Dataset, loss: LossSpec, w, rho: float, p=2.0) -> float:
    """Robust loss with input perturbations of total size ``N * rho`` and no label flips.

    The supremum is attained by spending the whole budget on one sample
    (convexity), which reduces the problem to ``N`` scalar evaluations.

    Raises
    ------
    NotPWL
    """
    pwl_pieces(loss)
    w = np.asarray(getattr(w, "w", w), float).ravel()
    m = _margins(dataset, w)
    N = m.size
    reach = N * rho * pnorm(w, conjugate_exponent(parse_p(p)))
    base = loss_eval(loss, m)
    lifted = np.maximum(loss_eval(loss, m + reach), loss_eval(loss, m - reach))
    return float((base.sum() + max(0.0, float(np.max(lifted - base)))) / N)


def predict(w, x) -> np.ndarray | int:
    """Labels ``sign(<w, x>)`` with ``sign(0) = +1``; ``x`` may be a vector or a matrix."""
    w = np.asarray(getattr(w, "w", w), float).ravel()
    x = np.asarray(x, float)
    if x.shape[-1] != w.size:
        raise DimensionMismatch(f"input has {x.shape[-1]} features, hypothesis has {w.size}")
    lab = np.where(x @ w >= 0, 1, -1)
    return int(lab) if lab.ndim == 0 else lab
