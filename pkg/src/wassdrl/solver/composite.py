"""Solver for nonsmooth convex objectives with an optional dual-norm coupling.

The problems have the form::

    minimize F(w, lam)   subject to   lam >= lip * ||w||_q,

where ``q`` is the exponent conjugate to the input norm ``p``. The solver
first runs a projected subgradient method with diminishing steps
``c0 / sqrt(k)`` and best-iterate tracking. The best iterate then seeds a
deep-cut ellipsoid method, which supplies a certified lower bound so that the
returned objective is accurate to a relative gap of ``tolerance``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable
import warnings

import numpy as np
from scipy.optimize import brentq

from .norms import conjugate_exponent, norm_subgradient, pnorm, project_ball, parse_p
from .options import SolveOptions

__all__ = [
    "CompositeProblem",
    "CompositeResult",
    "solve_composite",
    "project_norm_cone",
]


@dataclass
class CompositeProblem:
    """Convex objective ``F(w, lam)`` with subgradient oracle.

    Parameters
    ----------
    objective : callable
        ``F(w, lam) -> float``. When ``coupling_lip`` is None the problem has
        no ``lam`` variable and the callbacks receive ``lam = 0``.
    subgradient : callable
        ``(w, lam) -> (g_w, g_lam)``.
    dim : int
        Length of ``w``.
    coupling_lip : float or None
        Enforce ``lam >= coupling_lip * dual_norm(p, w)``.
    p : {1, 2, inf}
        Input norm; the coupling uses its dual.
    w0 : array, optional
        Starting point (default zeros).
    """

    objective: Callable[[np.ndarray, float], float]
    subgradient: Callable[[np.ndarray, float], tuple]
    dim: int
    coupling_lip: float | None = None
    p: float = 2.0
    w0: np.ndarray | None = None

    @property
    def has_lambda(self) -> bool:
        return self.coupling_lip is not None


@dataclass
class CompositeResult:
    w: np.ndarray
    lam: float
    value: float
    iterations: int
    converged: bool
    gap: float
    trace: np.ndarray = field(repr=False)

    def __iter__(self):
        yield self.w
        yield self.lam
        yield self.value


def project_norm_cone(w0, lam0, lip, p):
    """Euclidean projection of ``(w0, lam0)`` onto ``{lam >= lip * ||w||_q}``.

    ``q`` is conjugate to ``p``. For fixed ``t = lam / lip`` the optimal ``w``
    is the projection of ``w0`` onto the ``q``-ball of radius ``t``; the
    remaining scalar problem in ``t`` is convex and its derivative is found
    by bracketing root search.
    """
    w0 = np.asarray(w0, dtype=float)
    q = conjugate_exponent(p)
    if lip <= 0:
        return w0.copy(), max(float(lam0), 0.0)
    if lip * pnorm(w0, q) <= lam0:
        return w0.copy(), float(lam0)

    def dphi(t):
        return lip * (lip * t - lam0) - pnorm(w0 - project_ball(w0, t, q), parse_p(p))

    lo = max(0.0, lam0 / lip)
    hi = pnorm(w0, q)
    if dphi(lo) >= 0:
        t = lo
    elif dphi(hi) <= 0:
        t = hi
    else:
        t = brentq(dphi, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return project_ball(w0, t, q), lip * t


class _Oracle:
    """Joint-vector view ``z = (w, lam)`` of a composite problem."""

    def __init__(self, prob: CompositeProblem):
        self.prob = prob
        self.n = prob.dim
        self.d = prob.dim + (1 if prob.has_lambda else 0)
        self.q = conjugate_exponent(prob.p)
        self.calls = 0

    def split(self, z):
        if self.prob.has_lambda:
            return z[: self.n], float(z[self.n])
        return z, 0.0

    def value(self, z):
        w, lam = self.split(z)
        self.calls += 1
        return float(self.prob.objective(w, lam))

    def grad(self, z):
        w, lam = self.split(z)
        gw, gl = self.prob.subgradient(w, lam)
        gw = np.asarray(gw, dtype=float).ravel()
        if self.prob.has_lambda:
            return np.concatenate([gw, [float(gl)]])
        return gw

    def violation(self, z):
        """Constraint value ``lip * ||w||_q - lam`` and one subgradient."""
        if not self.prob.has_lambda:
            return -np.inf, None
        w, lam = self.split(z)
        lip = self.prob.coupling_lip
        h = lip * pnorm(w, self.q) - lam
        a = np.concatenate([lip * norm_subgradient(w, self.q), [-1.0]])
        return h, a

    def project(self, z):
        if not self.prob.has_lambda:
            return z
        w, lam = project_norm_cone(z[: self.n], z[self.n], self.prob.coupling_lip, self.prob.p)
        return np.concatenate([w, [lam]])


def _subgradient_phase(orc: _Oracle, z0, opts: SolveOptions, budget: int):
    z = orc.project(z0)
    fz = orc.value(z)
    best_z, best_f = z.copy(), fz
    trace = [best_f]
    k = 0
    for k in range(1, budget + 1):
        g = orc.grad(z)
        gn = np.linalg.norm(g)
        if gn == 0.0 or not np.isfinite(gn):
            break
        z = orc.project(z - (opts.step0 / np.sqrt(k)) * g / gn)
        fz = orc.value(z)
        if fz < best_f:
            best_z, best_f = z.copy(), fz
        trace.append(best_f)
        if k >= opts.window:
            old = trace[-opts.window - 1]
            if old - best_f <= opts.tolerance * max(1.0, abs(best_f)):
                break
    return best_z, best_f, trace, k


def _ellipsoid_phase(orc: _Oracle, center, radius, best_z, best_f, tol, budget):
    """Deep-cut ellipsoid method on the ball ``B(center, radius)``.

    Returns the best feasible point, its value, a lower bound valid for the
    ball-constrained problem and the number of iterations used.
    """
    d = orc.d
    c = center.astype(float).copy()
    P = np.eye(d) * radius**2
    lb = -np.inf
    lo = hi = None
    if d == 1:
        lo, hi = c[0] - radius, c[0] + radius
    it = 0
    trace = []
    while it < budget:
        it += 1
        h, a = orc.violation(c)
        if h > 0:
            b = h
        else:
            f = orc.value(c)
            a = orc.grad(c)
            if f < best_f:
                best_z, best_f = c.copy(), f
            trace.append(best_f)
            spread = np.sqrt(max(a @ P @ a, 0.0)) if d > 1 else abs(a[0]) * (hi - lo) / 2
            lb = max(lb, f - spread)
            b = f - best_f
            if best_f - lb <= tol * max(1.0, abs(best_f)):
                break
        if not np.all(np.isfinite(a)) or not np.any(a):
            if h > 0:
                break
            lb = best_f  # zero subgradient at a feasible point: optimal
            break
        if d == 1:
            # keep {z : a (z - c) + b <= 0}
            bound = c[0] - b / a[0]
            if a[0] > 0:
                hi = min(hi, bound)
            else:
                lo = max(lo, bound)
            if hi <= lo:
                lb = best_f if h <= 0 else lb
                break
            c = np.array([(lo + hi) / 2])
            P = np.array([[((hi - lo) / 2) ** 2]])
            if (hi - lo) < 1e-15 * max(1.0, abs(c[0])):
                break
            continue
        Pa = P @ a
        aPa = a @ Pa
        if aPa <= 0 or not np.isfinite(aPa):
            break
        s = np.sqrt(aPa)
        alpha = b / s
        if alpha >= 1.0:
            if h <= 0:
                lb = best_f  # no better point left in the ellipsoid
            break
        at = Pa / s
        c = c - (1 + d * alpha) / (d + 1) * at
        P = (d * d / (d * d - 1.0)) * (1 - alpha * alpha) * (
            P - (2 * (1 + d * alpha) / ((d + 1) * (1 + alpha))) * np.outer(at, at))
        P = 0.5 * (P + P.T)
    return best_z, best_f, lb, it, trace


def solve_composite(problem: CompositeProblem, opts: SolveOptions | None = None,
                    *, max_restarts: int = 8) -> CompositeResult:
    """Minimize a composite problem.

    Returns
    -------
    CompositeResult
        Unpacks as ``(w, lam, value)``. ``converged`` is False when the
        iteration budget ran out before the relative gap dropped below
        ``opts.tolerance``; a :class:`RuntimeWarning` is emitted in that case
        and the best iterate found is returned.
    """
    opts = opts or SolveOptions()
    orc = _Oracle(problem)
    w0 = np.zeros(problem.dim) if problem.w0 is None else np.asarray(problem.w0, float).ravel()
    if problem.has_lambda:
        z0 = np.concatenate([w0, [problem.coupling_lip * pnorm(w0, orc.q)]])
    else:
        z0 = w0.copy()

    budget = opts.max_iterations
    sub_budget = min(budget // 10, 20 * opts.window)
    best_z, best_f, trace, used = _subgradient_phase(orc, z0, opts, sub_budget)
    budget -= used

    # the ellipsoid must contain a minimizer: enlarge and recenter until the
    # ball-constrained optimum is interior
    radius = 2.0 * max(1.0, np.linalg.norm(best_z), np.linalg.norm(best_z - z0))
    gap = np.inf
    converged = False
    gap_tol = min(opts.tolerance, 1e-9)
    for _ in range(max_restarts + 1):
        center = best_z.copy()
        best_z, best_f, lb, used, etrace = _ellipsoid_phase(
            orc, center, radius, best_z, best_f, gap_tol, budget)
        trace.extend(etrace)
        budget -= used
        gap = best_f - lb
        interior = np.linalg.norm(best_z - center) <= 0.75 * radius
        if interior and gap <= gap_tol * max(1.0, abs(best_f)) * 10:
            converged = True
            break
        if budget <= 0:
            break
        radius *= 4.0 if not interior else 1.0
    if not converged:
        warnings.warn(f"composite solver stopped with relative gap {gap:.2e}",
                      RuntimeWarning, stacklevel=2)
    w, lam = orc.split(best_z)
    return CompositeResult(w=np.array(w, float), lam=float(lam), value=float(best_f),
                           iterations=opts.max_iterations - budget, converged=converged,
                           gap=float(gap), trace=np.array(trace))
