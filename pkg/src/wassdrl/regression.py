"""Distributionally robust linear regression.

For a piecewise-linear loss ``L(z) = max_j a_j z + b_j`` the worst-case
expected loss over a Wasserstein ball of radius ``rho`` around the empirical
distribution is the value of a linear program in ``(w, lam, s, mu)``::

    min  lam * rho + (1/N) sum_i s_i
    s.t. mu_ij . (d - C1 x_i - c2 y_i) + a_j (<w, x_i> - y_i) + b_j <= s_i
         || (a_j w - C1' mu_ij, -a_j - c2' mu_ij) ||_* <= lam
         mu_ij >= 0

where the support polytope is ``{(x, y) : C1 x + c2 y <= d}``. Without
support constraints and with any Lipschitz loss the problem reduces to the
regularized empirical loss ``mean L(r_i) + rho * lip(L) * ||(w, -1)||_*``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._lpkit import add_abs_le, add_norm_le
from .core import (CostKind, Dataset, FitResult, LinearHypothesis, LossSpec, SupportPolytope, Task,
                   TransportCost, loss_derivative, loss_eval, loss_lipschitz, pwl_pieces,
                   steepest_slope_attained)
from .errors import BoundedSupportUnsupported, DimensionMismatch, InputError, SolverDefect, UnsupportedNorm
from .solver.composite import CompositeProblem, solve_composite
from .solver.lp import LPBuilder, solve_lp
from .solver.norms import conjugate_exponent, norm_subgradient, parse_p, pnorm
from .solver.options import SolveOptions

__all__ = [
    "RegressionProblem",
    "train_pwl_regression",
    "train_lipschitz_regression",
    "train_huber",
    "train_svr",
    "train_quantile",
    "wc_expected_loss_regression",
    "regularized_objective_regression",
    "check_min_dispersion",
    "robust_loss_regression",
]


@dataclass(frozen=True, eq=False)
class RegressionProblem:
    """Distributionally robust regression instance.

    Parameters
    ----------
    dataset : Dataset
        Regression samples.
    loss : LossSpec
    support : SupportPolytope, optional
        Support of ``(x, y)``. Defaults to the whole space.
    metric : TransportCost, optional
        Defaults to the joint Euclidean norm on ``(x, y)``.
    rho : float
        Wasserstein radius.
    """

    dataset: Dataset
    loss: LossSpec
    support: SupportPolytope | None = None
    metric: TransportCost = field(default_factory=TransportCost.joint)
    rho: float = 0.0

    def __post_init__(self):
        if self.dataset.task is not Task.REGRESSION:
            raise InputError("regression problems need a regression dataset")
        if not self.rho >= 0:
            raise InputError("rho must be nonnegative")
        if self.metric.kind is CostKind.SEPARABLE_CLASSIFICATION:
            raise InputError("classification metric used for regression")
        sup = self.support
        if sup is None:
            sup = SupportPolytope.unbounded(self.dataset.n)
            object.__setattr__(self, "support", sup)
        if not sup.has_output or sup.n_inputs != self.dataset.n:
            raise DimensionMismatch("support must constrain (x, y) with matching input dimension")

    def with_rho(self, rho) -> "RegressionProblem":
        return RegressionProblem(self.dataset, self.loss, self.support, self.metric, rho)


def _residuals(dataset: Dataset, w) -> np.ndarray:
    return dataset.inputs @ np.asarray(w, float) - dataset.outputs


def regularized_objective_regression(dataset: Dataset, loss: LossSpec, w, rho, metric: TransportCost) -> float:
    """Empirical loss plus ``rho * lip(L) * ||(w, -1)||_*`` (separable metrics use
    ``max(||w||_*, 1/kappa)`` as the dual norm)."""
    w = np.asarray(w, float).ravel()
    emp = float(np.mean(loss_eval(loss, _residuals(dataset, w))))
    return emp + rho * loss_lipschitz(loss) * metric.regression_dual(w)


def _check_norm(metric: TransportCost, bounded: bool):
    if metric.p == 2.0:
        if bounded:
            raise UnsupportedNorm("p=2 with a bounded support is not LP-representable")
        return False
    return True


def _regression_lp(prob: RegressionProblem, w_fixed=None):
    """Assemble the reformulation LP; ``w_fixed`` freezes the hypothesis."""
    ds, sup, metric = prob.dataset, prob.support, prob.metric
    X, y = ds.inputs, ds.outputs
    N, n = X.shape
    pieces = pwl_pieces(prob.loss)
    q = metric.q
    lp = LPBuilder("min")
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

    def add_dual(p_comps, u_terms, u_const):
        if metric.kind is CostKind.JOINT_REGRESSION:
            add_norm_le(lp, p_comps + [(u_terms, u_const)], [(lam, 1.0)], q)
        else:
            add_norm_le(lp, p_comps, [(lam, 1.0)], q)
            if np.isfinite(metric.kappa):
                add_abs_le(lp, u_terms, u_const, [(lam, metric.kappa)])

    if sup.is_unbounded:
        for a, b in pieces:
            for i in range(N):
                lp.add_le(w_terms(a * X[i]) + [(s[i], -1.0)], -(a * (w_const(X[i]) - y[i]) + b))
        for a in sorted({a for a, _ in pieces}):
            comps = [(w_terms(a * np.eye(n)[k]), a * w_const(np.eye(n)[k])) for k in range(n)]
            add_dual(comps, [], -a)
        return lp.build()

    C1, c2, d = sup.C1, sup.c2, sup.d
    m = d.size
    mu = lp.add_var("mu", (N, len(pieces), m), lower=0.0)
    for i in range(N):
        slack = d - C1 @ X[i] - c2 * y[i]
        for j, (a, b) in enumerate(pieces):
            lp.add_le([(mu[i, j], slack)] + w_terms(a * X[i]) + [(s[i], -1.0)],
                      -(a * (w_const(X[i]) - y[i]) + b))
            comps = []
            for k in range(n):
                ek = np.eye(n)[k]
                comps.append((w_terms(a * ek) + [(mu[i, j], -C1[:, k])], a * w_const(ek)))
            add_dual(comps, [(mu[i, j], -c2)], -a)
    return lp.build()


def _solve(lp, lp_method, opts=None):
    sol = solve_lp(lp, opts, method=lp_method)
    if not sol.optimal:
        raise SolverDefect(f"reformulation LP is {sol.status.value}")
    return sol


def train_pwl_regression(prob: RegressionProblem, *, lp_method: str = "simplex",
                         opts: SolveOptions | None = None) -> FitResult:
    """Train with a piecewise-linear loss by solving the reformulation LP.

    Unbounded supports with ``p = 2`` are delegated to
    :func:`train_lipschitz_regression`, since the regularized form then
    applies.

    Raises
    ------
    NotPWL
        If the loss is not piecewise linear.
    UnsupportedNorm
        For ``p = 2`` with a bounded support.
    """
    pwl_pieces(prob.loss)
    bounded = not prob.support.is_unbounded
    if not _check_norm(prob.metric, bounded):
        return train_lipschitz_regression(prob, opts=opts)
    sol = _solve(_regression_lp(prob), lp_method, opts)
    w = sol.get("w")
    return FitResult(LinearHypothesis(w), sol.value, float(sol.get("lam")[0]), "lp")


def train_lipschitz_regression(prob: RegressionProblem, *, opts: SolveOptions | None = None) -> FitResult:
    """Minimize ``mean L(r_i) + rho * lip(L) * ||(w, -1)||_*`` over ``w``.

    Valid for any Lipschitz loss when the support is the whole space. The
    separable metric is accepted too; its dual norm is
    ``max(||w||_*, 1/kappa)``.

    Raises
    ------
    BoundedSupportUnsupported
        If the problem has support constraints.
    """
    if not prob.support.is_unbounded:
        raise BoundedSupportUnsupported("the regularized form requires an unbounded support")
    ds, loss, metric, rho = prob.dataset, prob.loss, prob.metric, prob.rho
    X, y = ds.inputs, ds.outputs
    N, n = X.shape
    lip = loss_lipschitz(loss)
    q = metric.q

    def dual_grad(w):
        if metric.kind is CostKind.JOINT_REGRESSION:
            return norm_subgradient(np.append(w, -1.0), q)[:n]
        if pnorm(w, q) >= 1.0 / metric.kappa:
            return norm_subgradient(w, q)
        return np.zeros(n)

    def obj(w, _lam):
        return regularized_objective_regression(ds, loss, w, rho, metric)

    def grad(w, _lam):
        g = X.T @ loss_derivative(loss, X @ w - y) / N
        return g + rho * lip * dual_grad(w), 0.0

    res = solve_composite(CompositeProblem(obj, grad, n), opts)
    return FitResult(LinearHypothesis(res.w), obj(res.w, 0.0), None, "composite", res.converged)


def train_huber(dataset: Dataset, delta: float, rho: float, p=2.0, *,
                opts: SolveOptions | None = None) -> FitResult:
    """Huber regression through its split form over ``(w, z)``::

        min (1/N) sum_i [z_i^2 / 2 + delta |r_i - z_i|] + rho * delta * ||(w, -1)||_*

    The support is the whole space and the metric the joint ``p``-norm.
    """
    X, y = dataset.inputs, dataset.outputs
    N, n = X.shape
    q = conjugate_exponent(p)

    def obj(v, _lam):
        w, z = v[:n], v[n:]
        r = X @ w - y
        return float(np.mean(0.5 * z * z + delta * np.abs(r - z))
                     + rho * delta * pnorm(np.append(w, -1.0), q))

    def grad(v, _lam):
        w, z = v[:n], v[n:]
        sg = np.sign(X @ w - y - z)
        gw = delta * X.T @ sg / N + rho * delta * norm_subgradient(np.append(w, -1.0), q)[:n]
        gz = (z - delta * sg) / N
        return np.concatenate([gw, gz]), 0.0

    res = solve_composite(CompositeProblem(obj, grad, n + N), opts)
    w = res.w[:n]
    value = regularized_objective_regression(dataset, LossSpec.huber(delta), w, rho, TransportCost.joint(p))
    return FitResult(LinearHypothesis(w), min(value, obj(res.w, 0.0)), None, "composite", res.converged)


def _metric_for(p, kappa):
    if kappa is None:
        return TransportCost.joint(p)
    return TransportCost.separable_regression(p, kappa)


def train_svr(dataset: Dataset, eps: float, rho: float, support: SupportPolytope | None = None,
              p=np.inf, *, kappa: float | None = None, lp_method: str = "simplex") -> FitResult:
    """Support vector regression with the epsilon-insensitive loss.

    ``kappa=None`` selects the joint metric; a number selects the separable
    metric ``||dx||_p + kappa |dy|``.
    """
    prob = RegressionProblem(dataset, LossSpec.eps_insensitive(eps), support, _metric_for(p, kappa), rho)
    return train_pwl_regression(prob, lp_method=lp_method)


def train_quantile(dataset: Dataset, tau: float, rho: float, support: SupportPolytope | None = None,
                   p=np.inf, *, kappa: float | None = None, lp_method: str = "simplex") -> FitResult:
    """Quantile regression with the pinball loss of level ``tau``."""
    prob = RegressionProblem(dataset, LossSpec.pinball(tau), support, _metric_for(p, kappa), rho)
    return train_pwl_regression(prob, lp_method=lp_method)


def wc_expected_loss_regression(prob: RegressionProblem, w, *, lp_method: str = "simplex") -> float:
    """Worst-case expected loss of a fixed hypothesis over the Wasserstein ball.

    Unbounded supports use the closed form; bounded supports solve the
    reformulation LP with ``w`` frozen (PWL losses and ``p`` in {1, inf}).
    """
    w = np.asarray(getattr(w, "w", w), float).ravel()
    if w.size != prob.dataset.n:
        raise DimensionMismatch("hypothesis dimension does not match the data")
    if prob.support.is_unbounded:
        return regularized_objective_regression(prob.dataset, prob.loss, w, prob.rho, prob.metric)
    pwl_pieces(prob.loss)
    _check_norm(prob.metric, True)
    return _solve(_regression_lp(prob, w_fixed=w), lp_method).value


def check_min_dispersion(dataset: Dataset, loss: LossSpec, w) -> bool:
    """True iff some residual sits where ``L`` is differentiable with ``|L'| = lip(L)``."""
    w = np.asarray(getattr(w, "w", w), float).ravel()
    return bool(np.any(steepest_slope_attained(loss, _residuals(dataset, w))))


def robust_loss_regression(dataset: Dataset, loss: LossSpec, w, rho: float, p=2.0) -> float:
    """Robust loss with a total perturbation budget ``N * rho``::

        sup { (1/N) sum_i L(<w, x_i + dx_i> - y_i - dy_i) : sum_i ||(dx_i, dy_i)|| <= N rho }

    The objective is convex in the perturbations, so the supremum is attained
    at a vertex of the budget set: the whole budget spent on one sample,
    along the direction that maximizes or minimizes the residual.

    Raises
    ------
    NotPWL
        For losses without a piecewise-linear representation.
    """
    pwl_pieces(loss)
    w = np.asarray(getattr(w, "w", w), float).ravel()
    r = _residuals(dataset, w)
    N = r.size
    reach = N * rho * pnorm(np.append(w, -1.0), conjugate_exponent(parse_p(p)))
    base = loss_eval(loss, r)
    lifted = np.maximum(loss_eval(loss, r + reach), loss_eval(loss, r - reach))
    return float((base.sum() + max(0.0, float(np.max(lifted - base)))) / N)
