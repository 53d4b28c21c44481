"""Worst-case distributions for fixed linear hypotheses.

Exact constructions solve the primal counterpart of the reformulation LPs.
For regression, sample ``i`` is split over the loss pieces ``j`` with
weights ``alpha_ij`` and moved by ``(q_ij, v_ij) / alpha_ij``::

    max  (1/N) sum_ij [alpha_ij (a_j r_i + b_j) + a_j (<w, q_ij> - v_ij)]
    s.t. sum_j alpha_ij = 1
         (1/N) sum_ij ||(q_ij, v_ij)|| <= rho
         G (q_ij, v_ij) <= alpha_ij (d - G xi_i)
         alpha >= 0

where ``r_i`` is the residual of sample ``i`` and ``G = [C1 c2]``.
Classification adds label-flipped copies with an extra transport cost
``kappa`` per unit of mass. When the support is unbounded the supremum may
not be attained; such solutions put ``alpha = 0`` on a nonzero shift and are
realized by an atom with tiny mass far away, with the loss of value reported
in ``gap_bound``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._lpkit import add_abs_le
from .classification import ClassificationProblem, regularized_objective_classification
from .core import CostKind, Dataset, LossSpec, Task, TransportCost, asymptotic_slopes, loss_eval, loss_lipschitz, pwl_pieces
from .errors import (BoundedSupportUnsupported, GammaOutOfRange, KappaInfinite, SolverDefect, UnsupportedNorm)
from .regression import RegressionProblem, regularized_objective_regression
from .solver.lp import LPBuilder, solve_lp
from .solver.norms import conjugate_exponent, pnorm

__all__ = [
    "WorstCaseDistribution",
    "DEFAULT_GAMMA",
    "worstcase_regression_exact",
    "worstcase_regression_sequence",
    "worstcase_classification_exact",
    "worstcase_classification_sequence",
    "unit_ball_maximizer",
]

DEFAULT_GAMMA = 1e-3
ZERO_MASS = 1e-12
MERGE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class WorstCaseDistribution:
    """Discrete distribution ``sum_k mass_k * delta_(x_k, y_k)``.

    Attributes
    ----------
    points : (K, n) ndarray
    labels : (K,) ndarray
        Outputs (regression) or labels (classification).
    masses : (K,) ndarray
    sources : (K,) ndarray of int
        Training sample each atom was transported from.
    attained_value : float
        Expected loss under this distribution.
    gap_bound : float
        Upper bound on ``sup - attained_value`` (zero for attained optima).
    """

    points: np.ndarray
    labels: np.ndarray
    masses: np.ndarray
    sources: np.ndarray
    attained_value: float
    gap_bound: float

    @property
    def atoms(self):
        return list(zip(map(tuple, self.points), self.labels.tolist(), self.masses.tolist()))

    def expected_loss(self, loss: LossSpec, w, task) -> float:
        w = np.asarray(getattr(w, "w", w), float)
        h = self.points @ w
        z = h - self.labels if Task.parse(task) is Task.REGRESSION else self.labels * h
        return float(self.masses @ loss_eval(loss, z))

    def transport_cost(self, dataset: Dataset, metric: TransportCost) -> float:
        """Cost of the coupling that maps each atom to its source sample."""
        total = 0.0
        for x, y, m, i in zip(self.points, self.labels, self.masses, self.sources):
            total += m * metric.cost(x, y, dataset.inputs[i], dataset.outputs[i])
        return total

    def to_dict(self) -> dict:
        return {
            "atoms": [{"x": x.tolist(), "y": float(y), "mass": float(m)}
                      for x, y, m in zip(self.points, self.labels, self.masses)],
            "value": float(self.attained_value),
            "gap_bound": float(self.gap_bound),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def sample(self, size: int, rng: np.random.Generator, task=None) -> Dataset:
        """Systematic resampling: ``size`` rows whose empirical distribution
        approximates the atoms; exact when all masses are multiples of
        ``1/size``. Rows are shuffled with ``rng``.

        ``task`` defaults to classification when every label is +-1.
        """
        cdf = np.cumsum(self.masses)
        cdf /= cdf[-1]
        u = (np.arange(size) + rng.uniform(0.0, 1.0)) / size
        idx = np.minimum(np.searchsorted(cdf, u - 1e-12), len(cdf) - 1)
        idx = rng.permutation(idx)
        if task is None:
            task = Task.CLASSIFICATION if np.all(np.isin(self.labels, (-1.0, 1.0))) else Task.REGRESSION
        return Dataset(self.points[idx], self.labels[idx], task)


def _merge(points, labels, masses, sources):
    """Merge atoms of one source closer than ``MERGE_TOL`` with equal labels."""
    keep_p, keep_l, keep_m, keep_s = [], [], [], []
    for x, y, m, s in zip(points, labels, masses, sources):
        for k in range(len(keep_p)):
            if keep_s[k] == s and keep_l[k] == y and np.max(np.abs(keep_p[k] - x), initial=0.0) <= MERGE_TOL:
                keep_m[k] += m
                break
        else:
            keep_p.append(np.array(x, float))
            keep_l.append(float(y))
            keep_m.append(float(m))
            keep_s.append(int(s))
    n = len(points[0]) if len(points) else 0
    return (np.array(keep_p).reshape(-1, n), np.array(keep_l), np.array(keep_m), np.array(keep_s, int))


def _add_primal_norm(lp: LPBuilder, comps, p):
    """Return an index ``t`` with ``t >= ||v||_p`` for ``v = comps`` (lists of terms)."""
    t = lp.add_var(None, lower=0.0)
    if p == np.inf:
        for terms in comps:
            add_abs_le(lp, terms, 0.0, [(t, 1.0)])
    elif p == 1.0:
        e = lp.add_var(None, (len(comps),), lower=0.0)
        for k, terms in enumerate(comps):
            add_abs_le(lp, terms, 0.0, [(e[k], 1.0)])
        lp.add_le([(e, 1.0), (t, -1.0)], 0.0)
    else:
        raise UnsupportedNorm("exact worst-case distributions need p in {1, inf}")
    return t


def _escape_mass(donor_mass, donor_val, piece_val):
    """Mass for an atom that realizes a shift the LP placed at zero mass.

    The atom sits at ``shift / eta``; taking ``eta`` from a donor atom loses
    at most ``eta * (|donor_val| + |piece_val|)`` of expected loss.
    """
    return min(0.5 * donor_mass, 1e-9 / (1.0 + abs(donor_val) + abs(piece_val)))


def worstcase_regression_exact(prob: RegressionProblem, w, *, lp_method: str = "simplex"):
    """Worst-case distribution for a PWL loss and ``p`` in {1, inf}.

    Raises
    ------
    UnsupportedNorm
        For ``p = 2``.
    NotPWL
    """
    ds, metric, sup = prob.dataset, prob.metric, prob.support
    w = np.asarray(getattr(w, "w", w), float).ravel()
    if metric.p == 2.0:
        raise UnsupportedNorm("exact worst-case distributions need p in {1, inf}")
    pieces = pwl_pieces(prob.loss)
    X, y = ds.inputs, ds.outputs
    N, n = X.shape
    J = len(pieces)
    r = X @ w - y
    move_y = not (metric.kind is CostKind.SEPARABLE_REGRESSION and np.isinf(metric.kappa))

    lp = LPBuilder("max")
    alpha = lp.add_var("alpha", (N, J), lower=0.0)
    q = lp.add_var("q", (N, J, n), lower=-np.inf)
    v = lp.add_var("v", (N, J), lower=-np.inf) if move_y else None
    costs = []
    for i in range(N):
        lp.add_eq([(alpha[i], 1.0)], 1.0)
        for j, (a, b) in enumerate(pieces):
            lp.add_cost(alpha[i, j], (a * r[i] + b) / N)
            lp.add_cost(q[i, j], a * w / N)
            if move_y:
                lp.add_cost(v[i, j], -a / N)
            comps = [[(q[i, j, k], 1.0)] for k in range(n)]
            if metric.kind is CostKind.JOINT_REGRESSION:
                costs.append((_add_primal_norm(lp, comps + [[(v[i, j], 1.0)]], metric.p), 1.0))
            else:
                costs.append((_add_primal_norm(lp, comps, metric.p), 1.0))
                if move_y:
                    av = lp.add_var(None, lower=0.0)
                    add_abs_le(lp, [(v[i, j], 1.0)], 0.0, [(av, 1.0)])
                    costs.append((av, metric.kappa))
            if not sup.is_unbounded:
                G = sup.G
                slack = sup.d - G @ np.append(X[i], y[i])
                for row in range(G.shape[0]):
                    terms = [(q[i, j], G[row, :n])]
                    if move_y:
                        terms.append((v[i, j], G[row, n]))
                    lp.add_le(terms + [(alpha[i, j], -slack[row])], 0.0)
    lp.add_le([(t, c / N) for t, c in costs], prob.rho)
    sol = solve_lp(lp.build(), method=lp_method)
    if not sol.optimal:
        raise SolverDefect(f"worst-case LP is {sol.status.value}")

    A = sol.get("alpha").reshape(N, J)
    Q = sol.get("q").reshape(N, J, n)
    V = sol.get("v").reshape(N, J) if move_y else np.zeros((N, J))
    pts, labs, mass, src = [], [], [], []
    for i in range(N):
        a_i = A[i].copy()
        safe = np.maximum(A[i], ZERO_MASS)
        atom_vals = loss_eval(prob.loss, r[i] + (Q[i] @ w - V[i]) / safe)
        for j, (a, b) in enumerate(pieces):
            if A[i, j] > ZERO_MASS:
                continue
            a_i[j] = 0.0
            shift = np.append(Q[i, j], V[i, j])
            if np.max(np.abs(shift)) <= 1e-9:
                continue
            if not sup.is_unbounded:
                raise SolverDefect("zero-mass atom with a nonzero shift on a bounded support")
            k = int(np.argmax(a_i))
            eta = _escape_mass(a_i[k], atom_vals[k], a * r[i] + b)
            a_i[k] -= eta
            pts.append(X[i] + shift[:n] / eta)
            labs.append(y[i] + shift[n] / eta)
            mass.append(eta / N)
            src.append(i)
        for j in range(J):
            if a_i[j] > 0:
                pts.append(X[i] + Q[i, j] / A[i, j])
                labs.append(y[i] + V[i, j] / A[i, j])
                mass.append(a_i[j] / N)
                src.append(i)
    pts, labs, mass, src = _merge(pts, labs, mass, src)
    dist = WorstCaseDistribution(pts, labs, mass, src, 0.0, 0.0)
    value = dist.expected_loss(prob.loss, w, Task.REGRESSION)
    return WorstCaseDistribution(pts, labs, mass, src, value, max(0.0, sol.value - value))


def worstcase_classification_exact(prob: ClassificationProblem, w, *, lp_method: str = "simplex"):
    """Worst-case distribution for a PWL margin loss and ``p`` in {1, inf}.

    With ``kappa = inf`` labels are never flipped.
    """
    ds, metric, sup = prob.dataset, prob.metric, prob.support
    w = np.asarray(getattr(w, "w", w), float).ravel()
    if metric.p == 2.0:
        raise UnsupportedNorm("exact worst-case distributions need p in {1, inf}")
    pieces = pwl_pieces(prob.loss)
    X, y = ds.inputs, ds.outputs
    N, n = X.shape
    J = len(pieces)
    m = y * (X @ w)
    kappa = metric.kappa
    flips = np.isfinite(kappa)
    signs = (1.0, -1.0) if flips else (1.0,)

    lp = LPBuilder("max")
    alpha = {s: lp.add_var(f"alpha{s:+.0f}", (N, J), lower=0.0) for s in signs}
    q = {s: lp.add_var(f"q{s:+.0f}", (N, J, n), lower=-np.inf) for s in signs}
    costs = []
    for i in range(N):
        lp.add_eq([(alpha[s][i], 1.0) for s in signs], 1.0)
        for j, (a, b) in enumerate(pieces):
            for s in signs:
                # atom label s * y_i, margin s * y_i <w, x_i + q / alpha>
                lp.add_cost(alpha[s][i, j], (a * s * m[i] + b) / N)
                lp.add_cost(q[s][i, j], a * s * y[i] * w / N)
                comps = [[(q[s][i, j, k], 1.0)] for k in range(n)]
                costs.append((_add_primal_norm(lp, comps, metric.p), 1.0))
                if s < 0 and kappa > 0:
                    costs.append((alpha[s][i, j], kappa))
                if not sup.is_unbounded:
                    slack = sup.d - sup.C1 @ X[i]
                    for row in range(sup.d.size):
                        lp.add_le([(q[s][i, j], sup.C1[row]), (alpha[s][i, j], -slack[row])], 0.0)
    lp.add_le([(t, c / N) for t, c in costs], prob.rho)
    sol = solve_lp(lp.build(), method=lp_method)
    if not sol.optimal:
        raise SolverDefect(f"worst-case LP is {sol.status.value}")

    A = {s: sol.get(f"alpha{s:+.0f}").reshape(N, J) for s in signs}
    Q = {s: sol.get(f"q{s:+.0f}").reshape(N, J, n) for s in signs}
    pts, labs, mass, src = [], [], [], []
    for i in range(N):
        a_i = {s: A[s][i].copy() for s in signs}
        vals = {s: loss_eval(prob.loss, s * m[i] + s * y[i] * (Q[s][i] @ w) / np.maximum(A[s][i], ZERO_MASS))
                for s in signs}
        for s in signs:
            for j, (a, b) in enumerate(pieces):
                if A[s][i, j] > ZERO_MASS:
                    continue
                a_i[s][j] = 0.0
                shift = Q[s][i, j].copy()
                if np.max(np.abs(shift), initial=0.0) <= 1e-9:
                    continue
                if not sup.is_unbounded:
                    raise SolverDefect("zero-mass atom with a nonzero shift on a bounded support")
                # donor: heaviest atom of the sample, same label if possible
                s_d = s if a_i[s].max() > ZERO_MASS else -s
                k = int(np.argmax(a_i[s_d]))
                eta = _escape_mass(a_i[s_d][k], vals[s_d][k], a * s * m[i] + b)
                if s_d != s and s < 0:
                    # the borrowed mass now pays the flip cost; shorten the shift to compensate
                    size = pnorm(shift, metric.p)
                    shift *= max(0.0, 1.0 - kappa * eta / size)
                a_i[s_d][k] -= eta
                pts.append(X[i] + shift / eta)
                labs.append(s * y[i])
                mass.append(eta / N)
                src.append(i)
        for s in signs:
            for j in range(J):
                if a_i[s][j] > 0:
                    pts.append(X[i] + Q[s][i, j] / A[s][i, j])
                    labs.append(s * y[i])
                    mass.append(a_i[s][j] / N)
                    src.append(i)
    pts, labs, mass, src = _merge(pts, labs, mass, src)
    dist = WorstCaseDistribution(pts, labs, mass, src, 0.0, 0.0)
    value = dist.expected_loss(prob.loss, w, Task.CLASSIFICATION)
    return WorstCaseDistribution(pts, labs, mass, src, value, max(0.0, sol.value - value))


def unit_ball_maximizer(c, p) -> np.ndarray:
    """A maximizer of ``<c, z>`` over ``||z||_p <= 1``."""
    c = np.asarray(c, float).ravel()
    q = conjugate_exponent(p)
    nq = pnorm(c, q)
    if nq == 0:
        return np.zeros_like(c)
    if p == 2.0:
        return c / nq
    if p == 1.0:
        z = np.zeros_like(c)
        k = int(np.argmax(np.abs(c)))
        z[k] = np.sign(c[k])
        return z
    return np.sign(c)


def _steep_side(loss: LossSpec) -> float:
    """+1 if ``L`` reaches its Lipschitz slope as ``z -> +inf``, else -1."""
    left, right = asymptotic_slopes(loss)
    return 1.0 if right >= left else -1.0


def worstcase_regression_sequence(prob: RegressionProblem, w, gamma: float = DEFAULT_GAMMA):
    """Member ``Q_gamma`` of an asymptotically optimal sequence (unbounded support).

    Sample 0 keeps mass ``(1 - gamma)/N``; the remaining ``gamma/N`` is moved
    by ``rho N / gamma`` along the unit direction that changes the residual
    fastest, towards the steep side of the loss. The expected loss tends to
    the worst-case value as ``gamma -> 0``.

    Raises
    ------
    GammaOutOfRange
        Unless ``0 < gamma <= 1``.
    BoundedSupportUnsupported
    """
    if not 0 < gamma <= 1:
        raise GammaOutOfRange("gamma must lie in (0, 1]")
    if not prob.support.is_unbounded:
        raise BoundedSupportUnsupported("sequence constructions need an unbounded support")
    ds, metric = prob.dataset, prob.metric
    w = np.asarray(getattr(w, "w", w), float).ravel()
    X, y = ds.inputs, ds.outputs
    N, n = X.shape
    if metric.kind is CostKind.JOINT_REGRESSION:
        d = unit_ball_maximizer(np.append(w, -1.0), metric.p)
        dx, dy = d[:n], d[n]
    else:
        if pnorm(w, metric.q) >= 1.0 / metric.kappa:
            dx, dy = unit_ball_maximizer(w, metric.p), 0.0
        else:
            dx, dy = np.zeros(n), -1.0 / metric.kappa
    sgn = _steep_side(prob.loss)
    scale = sgn * prob.rho * N / gamma
    pts = [X[0], X[0] + scale * dx] + list(X[1:])
    labs = [y[0], y[0] + scale * dy] + list(y[1:])
    mass = [(1 - gamma) / N, gamma / N] + [1.0 / N] * (N - 1)
    src = [0, 0] + list(range(1, N))
    pts, labs, mass, src = _merge(pts, labs, mass, src)
    keep = mass > 0
    pts, labs, mass, src = pts[keep], labs[keep], mass[keep], src[keep]
    dist = WorstCaseDistribution(pts, labs, mass, src, 0.0, 0.0)
    value = dist.expected_loss(prob.loss, w, Task.REGRESSION)
    sup_value = regularized_objective_regression(ds, prob.loss, w, prob.rho, metric)
    return WorstCaseDistribution(pts, labs, mass, src, value, max(0.0, sup_value - value))


def worstcase_classification_sequence(prob: ClassificationProblem, w, gamma: float = DEFAULT_GAMMA,
                                      *, lp_method: str = "simplex"):
    """Member ``Q_gamma`` of an asymptotically optimal sequence (unbounded input support).

    Solves the LP::

        max  lip(L) ||w||_* theta + (1/N) sum_i [(1 - a_i) L(m_i) + a_i L(-m_i)]
        s.t. theta + (kappa/N) sum_i a_i <= rho - gamma,  0 <= a <= 1,  theta >= 0

    then flips fraction ``a_i`` of every label and moves a fraction ``eta``
    of sample 0 by ``theta N / eta`` along the direction that changes its
    margin fastest.

    Raises
    ------
    GammaOutOfRange
        Unless ``0 < gamma <= min(rho, 1)``.
    KappaInfinite
    BoundedSupportUnsupported
    """
    kappa = prob.kappa
    if not np.isfinite(kappa):
        raise KappaInfinite("the sequence construction needs a finite kappa")
    if not 0 < gamma <= min(prob.rho, 1.0):
        raise GammaOutOfRange("gamma must lie in (0, min(rho, 1)]")
    if not prob.support.is_unbounded:
        raise BoundedSupportUnsupported("sequence constructions need an unbounded input support")
    ds, loss, metric = prob.dataset, prob.loss, prob.metric
    w = np.asarray(getattr(w, "w", w), float).ravel()
    X, y = ds.inputs, ds.outputs
    N, n = X.shape
    m = y * (X @ w)
    keep_val = loss_eval(loss, m)
    flip_val = loss_eval(loss, -m)
    slope = loss_lipschitz(loss) * pnorm(w, metric.q)

    lp = LPBuilder("max")
    a = lp.add_var("a", (N,), lower=0.0, upper=1.0)
    theta = lp.add_var("theta", lower=0.0)
    lp.add_cost(theta, slope)
    lp.add_cost(a, (flip_val - keep_val) / N)
    lp.add_le([(theta, 1.0), (a, kappa / N)], prob.rho - gamma)
    sol = solve_lp(lp.build(), method=lp_method)
    if not sol.optimal:
        raise SolverDefect(f"sequence LP is {sol.status.value}")
    al = np.clip(sol.get("a"), 0.0, 1.0)
    th = float(sol.get("theta")[0])

    eta = gamma / (th + kappa - prob.rho + gamma + 1.0)
    if not 0 < eta <= 1:
        eta = gamma
    xstar = unit_ball_maximizer(w, metric.p)
    shift = _steep_side(loss) * y[0] * (th * N / eta) * xstar
    pts, labs, mass, src = [], [], [], []
    for i in range(N):
        keep = 1.0 - eta if i == 0 else 1.0
        pts += [X[i], X[i]]
        labs += [y[i], -y[i]]
        mass += [keep * (1 - al[i]) / N, keep * al[i] / N]
        src += [i, i]
    pts.append(X[0] + shift)
    labs.append(y[0])
    mass.append(eta / N)
    src.append(0)
    pts, labs, mass, src = _merge(pts, labs, mass, src)
    keep = mass > 0
    pts, labs, mass, src = pts[keep], labs[keep], mass[keep], src[keep]
    dist = WorstCaseDistribution(pts, labs, mass, src, 0.0, 0.0)
    value = dist.expected_loss(loss, w, Task.CLASSIFICATION)
    sup_value = regularized_objective_classification(ds, loss, w, prob.rho, kappa, metric.p)
    return WorstCaseDistribution(pts, labs, mass, src, value, max(0.0, sup_value - value))
