"""Dense two-phase simplex method.

The solver targets desk-scale problems (a few thousand variables at most).
It converts an LP with general bounds into equality form with nonnegative
variables, finds a feasible basis with artificial variables and then runs the
primal simplex method with Bland's anti-cycling rule on a dense tableau.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import IO

import numpy as np

from ..errors import DimensionMismatch, InputError, MaxIterations, SolverDefect
from .options import SolveOptions

__all__ = [
    "LPStatus",
    "StandardFormLP",
    "LPSolution",
    "LPBuilder",
    "solve_lp",
    "dump_lp",
]

_RC_TOL = 1e-9  # reduced-cost optimality tolerance
_PIV_TOL = 1e-9  # smallest admissible pivot magnitude


class LPStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


def _as_matrix(a, ncols, what):
    if a is None:
        return np.zeros((0, ncols))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, ncols))
    if a.shape[1] != ncols:
        raise DimensionMismatch(f"{what} has {a.shape[1]} columns, expected {ncols}")
    return a


def _as_vector(v, size, what, fill=0.0):
    if v is None:
        return np.full(size, fill)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 1 and size != 1:
        v = np.full(size, v[0])
    if v.size != size:
        raise DimensionMismatch(f"{what} has length {v.size}, expected {size}")
    return v


@dataclass
class StandardFormLP:
    """Linear program ``opt c.x  s.t.  A_ub x <= b_ub, A_eq x = b_eq, lower <= x <= upper``.

    Bounds default to ``0 <= x < inf``; either side may be infinite.
    ``names`` maps block names to slices of ``x`` and is used by
    :meth:`LPSolution.get`.
    """

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    sense: str = "min"
    names: dict[str, slice] = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.size
        self.A_ub = _as_matrix(self.A_ub, n, "A_ub")
        self.b_ub = _as_vector(self.b_ub, self.A_ub.shape[0], "b_ub")
        self.A_eq = _as_matrix(self.A_eq, n, "A_eq")
        self.b_eq = _as_vector(self.b_eq, self.A_eq.shape[0], "b_eq")
        self.lower = _as_vector(self.lower, n, "lower", 0.0)
        self.upper = _as_vector(self.upper, n, "upper", np.inf)
        if self.sense not in ("min", "max"):
            raise InputError(f"unknown sense {self.sense!r}")
        for name, arr in (("c", self.c), ("A_ub", self.A_ub), ("b_ub", self.b_ub),
                          ("A_eq", self.A_eq), ("b_eq", self.b_eq)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"{name} has non-finite entries")
        if np.any(self.lower > self.upper):
            raise InputError("a lower bound exceeds its upper bound")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise InputError("bounds must admit a finite value")

    @property
    def num_vars(self) -> int:
        return self.c.size


@dataclass
class LPSolution:
    status: LPStatus
    value: float
    primal: np.ndarray | None
    iterations: int
    names: dict[str, slice] = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is LPStatus.OPTIMAL

    def get(self, name: str) -> np.ndarray:
        """Return the block of the primal vector registered under ``name``."""
        return self.primal[self.names[name]]


class LPBuilder:
    """Incremental construction of a :class:`StandardFormLP`.

    Variables are registered in named blocks; constraint rows are given as
    sparse (index, coefficient) pairs and densified by :meth:`build`.
    """

    def __init__(self, sense="min"):
        self.sense = sense
        self._lower: list[float] = []
        self._upper: list[float] = []
        self._names: dict[str, slice] = {}
        self._cost: dict[int, float] = {}
        self._ub: list[tuple[np.ndarray, np.ndarray, float]] = []
        self._eq: list[tuple[np.ndarray, np.ndarray, float]] = []

    @property
    def num_vars(self):
        return len(self._lower)

    def add_var(self, name=None, shape=(), lower=0.0, upper=np.inf) -> np.ndarray:
        """Register a block of variables and return its index array.

        Scalar blocks (``shape=()``) return a plain integer index. Anonymous
        blocks get a generated name.
        """
        if name is None:
            name = f"_aux{len(self._names)}"
        size = int(np.prod(shape)) if shape != () else 1
        start = self.num_vars
        self._lower.extend(np.broadcast_to(np.asarray(lower, float), (size,)).tolist())
        self._upper.extend(np.broadcast_to(np.asarray(upper, float), (size,)).tolist())
        self._names[name] = slice(start, start + size)
        idx = np.arange(start, start + size)
        return idx.reshape(shape) if shape != () else idx[0]

    def add_cost(self, idx, coef):
        for i, v in zip(np.atleast_1d(idx).ravel(), np.broadcast_to(coef, np.shape(np.atleast_1d(idx))).ravel()):
            self._cost[int(i)] = self._cost.get(int(i), 0.0) + float(v)

    @staticmethod
    def _row(terms):
        idx = [np.zeros(0, int)]
        val = [np.zeros(0)]
        for i, v in terms:
            i = np.atleast_1d(i).ravel()
            idx.append(i)
            val.append(np.broadcast_to(np.asarray(v, float), i.shape).ravel())
        return np.concatenate(idx).astype(int), np.concatenate(val)

    def add_le(self, terms, rhs):
        """Add ``sum(coef * x[idx] for idx, coef in terms) <= rhs``."""
        idx, val = self._row(terms)
        self._ub.append((idx, val, float(rhs)))

    def add_ge(self, terms, rhs):
        idx, val = self._row(terms)
        self._ub.append((idx, -val, -float(rhs)))

    def add_eq(self, terms, rhs):
        idx, val = self._row(terms)
        self._eq.append((idx, val, float(rhs)))

    def build(self) -> StandardFormLP:
        n = self.num_vars
        c = np.zeros(n)
        for i, v in self._cost.items():
            c[i] = v

        def dense(rows):
            a = np.zeros((len(rows), n))
            b = np.zeros(len(rows))
            for k, (idx, val, rhs) in enumerate(rows):
                np.add.at(a[k], idx, val)
                b[k] = rhs
            return a, b

        a_ub, b_ub = dense(self._ub)
        a_eq, b_eq = dense(self._eq)
        return StandardFormLP(c=c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                              lower=np.array(self._lower), upper=np.array(self._upper),
                              sense=self.sense, names=dict(self._names))


# ---------------------------------------------------------------------------
# conversion to equality form with nonnegative variables


@dataclass
class _EqualityForm:
    A: np.ndarray  # rows x cols, b >= 0
    b: np.ndarray
    c: np.ndarray
    const: float
    start_basis: np.ndarray  # per row: column of a unit slack or -1
    back: np.ndarray  # x = back @ z[:nz] + offset
    offset: np.ndarray
    nz: int


def _to_equality_form(lp: StandardFormLP) -> _EqualityForm:
    n = lp.num_vars
    lo, up = lp.lower, lp.upper
    cols = []  # (original index, sign)
    offset = np.zeros(n)
    extra_ub = []  # (column position, bound)
    for j in range(n):
        if np.isfinite(lo[j]):
            offset[j] = lo[j]
            cols.append((j, 1.0))
            if np.isfinite(up[j]):
                extra_ub.append((len(cols) - 1, up[j] - lo[j]))
        elif np.isfinite(up[j]):
            offset[j] = up[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nz = len(cols)
    back = np.zeros((n, nz))
    for k, (j, s) in enumerate(cols):
        back[j, k] = s

    a_ub = lp.A_ub @ back
    b_ub = lp.b_ub - lp.A_ub @ offset
    if extra_ub:
        rows = np.zeros((len(extra_ub), nz))
        for r, (k, _) in enumerate(extra_ub):
            rows[r, k] = 1.0
        a_ub = np.vstack([a_ub, rows])
        b_ub = np.concatenate([b_ub, [u for _, u in extra_ub]])
    a_eq = lp.A_eq @ back
    b_eq = lp.b_eq - lp.A_eq @ offset

    m_ub, m_eq = a_ub.shape[0], a_eq.shape[0]
    A = np.zeros((m_ub + m_eq, nz + m_ub))
    A[:m_ub, :nz] = a_ub
    A[:m_ub, nz:] = np.eye(m_ub)
    A[m_ub:, :nz] = a_eq
    b = np.concatenate([b_ub, b_eq])
    start = np.full(m_ub + m_eq, -1)
    start[:m_ub] = nz + np.arange(m_ub)
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    start[neg] = -1

    sign = 1.0 if lp.sense == "min" else -1.0
    c = np.zeros(nz + m_ub)
    c[:nz] = sign * (lp.c @ back)
    const = sign * float(lp.c @ offset)
    return _EqualityForm(A, b, c, const, start, back, offset, nz)


# ---------------------------------------------------------------------------
# tableau simplex


class _Tableau:
    def __init__(self, A, b, basis):
        m, n = A.shape
        self.T = np.empty((m, n + 1))
        self.T[:, :n] = A
        self.T[:, n] = b
        self.basis = np.array(basis, dtype=int)
        self.obj = np.zeros(n + 1)
        self.iterations = 0

    def set_cost(self, c):
        n = self.T.shape[1] - 1
        self.obj[:n] = c
        self.obj[n] = 0.0
        cb = c[self.basis]
        self.obj -= cb @ self.T

    def pivot(self, r, e):
        T = self.T
        T[r] /= T[r, e]
        col = T[:, e].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.obj -= self.obj[e] * T[r]
        self.basis[r] = e
        self.iterations += 1

    def run(self, allowed, max_iter, rule):
        """Primal simplex on the current basis.  Returns 'optimal' or 'unbounded'."""
        T = self.T
        rhs = T[:, -1]
        degenerate = 0
        while True:
            rc = self.obj[:-1]
            cand = np.flatnonzero((rc < -_RC_TOL) & allowed)
            if cand.size == 0:
                return "optimal"
            if self.iterations >= max_iter:
                raise MaxIterations(f"simplex exceeded {max_iter} pivots")
            if rule == "bland" or degenerate > 50:
                e = cand[0]
            else:
                e = cand[np.argmin(rc[cand])]
            col = T[:, e]
            pos = np.flatnonzero(col > _PIV_TOL)
            if pos.size == 0:
                return "unbounded"
            ratios = rhs[pos] / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = ties[np.argmin(self.basis[ties])]
            degenerate = degenerate + 1 if best <= 1e-12 else 0
            self.pivot(r, e)


def _simplex_equality(form: _EqualityForm, max_iter: int, rule: str):
    A, b, c = form.A, form.b, form.c
    m, n = A.shape
    need_art = np.flatnonzero(form.start_basis < 0)
    n_art = need_art.size
    A1 = np.zeros((m, n + n_art))
    A1[:, :n] = A
    basis = form.start_basis.copy()
    for k, r in enumerate(need_art):
        A1[r, n + k] = 1.0
        basis[r] = n + k
    tab = _Tableau(A1, b, basis)

    if n_art:
        c1 = np.zeros(n + n_art)
        c1[n:] = 1.0
        tab.set_cost(c1)
        tab.run(np.ones(n + n_art, bool), max_iter, rule)
        if -tab.obj[-1] > 1e-8 * (1.0 + np.abs(b).max(initial=0.0)):
            return "infeasible", None, tab.iterations
        # drive artificial variables out of the basis
        keep = np.ones(m, bool)
        for r in range(m):
            if tab.basis[r] >= n:
                row = tab.T[r, :n]
                cand = np.flatnonzero(np.abs(row) > 1e-7)
                if cand.size:
                    tab.pivot(r, cand[np.argmax(np.abs(row[cand]))])
                else:
                    keep[r] = False  # redundant equality
        T = tab.T[keep][:, list(range(n)) + [n + n_art]]
        tab2 = _Tableau(T[:, :n], T[:, n], tab.basis[keep])
        tab2.iterations = tab.iterations
        tab = tab2
        A_kept = A[keep]
        b_kept = b[keep]
    else:
        A_kept, b_kept = A, b

    tab.set_cost(c)
    status = tab.run(np.ones(n, bool), max_iter, rule)
    if status == "unbounded":
        return "unbounded", None, tab.iterations

    z = np.zeros(n)
    z[tab.basis] = tab.T[:, -1]
    # polish the basic solution against the original matrix
    B = A_kept[:, tab.basis]
    try:
        zb = np.linalg.solve(B, b_kept)
        if np.all(zb >= -1e-9) and (np.abs(B @ zb - b_kept).max(initial=0.0)
                                     <= np.abs(B @ z[tab.basis] - b_kept).max(initial=0.0)):
            z[tab.basis] = np.maximum(zb, 0.0)
    except np.linalg.LinAlgError:
        pass
    z = np.maximum(z, 0.0)
    return "optimal", z, tab.iterations


def _check_primal(lp: StandardFormLP, x: np.ndarray):
    scale = 1.0 + max(np.abs(lp.b_ub).max(initial=0.0), np.abs(lp.b_eq).max(initial=0.0))
    viol = 0.0
    if lp.A_ub.shape[0]:
        viol = max(viol, (lp.A_ub @ x - lp.b_ub).max())
    if lp.A_eq.shape[0]:
        viol = max(viol, np.abs(lp.A_eq @ x - lp.b_eq).max())
    viol = max(viol, (lp.lower - x).max(initial=0.0), (x - lp.upper).max(initial=0.0))
    if viol > 1e-7 * scale:
        raise SolverDefect(f"simplex solution violates constraints by {viol:.3e}")


def _solve_highs(lp: StandardFormLP) -> LPSolution:
    from scipy.optimize import linprog

    sign = 1.0 if lp.sense == "min" else -1.0
    res = linprog(
        sign * lp.c,
        A_ub=lp.A_ub if lp.A_ub.shape[0] else None,
        b_ub=lp.b_ub if lp.A_ub.shape[0] else None,
        A_eq=lp.A_eq if lp.A_eq.shape[0] else None,
        b_eq=lp.b_eq if lp.A_eq.shape[0] else None,
        bounds=list(zip(np.where(np.isfinite(lp.lower), lp.lower, None),
                        np.where(np.isfinite(lp.upper), lp.upper, None))),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9},
    )
    if res.status == 2:
        return LPSolution(LPStatus.INFEASIBLE, np.nan, None, int(res.nit), lp.names)
    if res.status == 3:
        return LPSolution(LPStatus.UNBOUNDED, -sign * np.inf, None, int(res.nit), lp.names)
    if res.status == 1:
        raise MaxIterations("HiGHS iteration limit reached")
    if res.status != 0:
        raise SolverDefect(f"HiGHS failed: {res.message}")
    x = np.asarray(res.x, float)
    return LPSolution(LPStatus.OPTIMAL, float(lp.c @ x), x, int(res.nit), lp.names)


def solve_lp(lp: StandardFormLP, opts: SolveOptions | None = None, *,
             method: str = "simplex", rule: str = "bland") -> LPSolution:
    """Solve a linear program.

    Parameters
    ----------
    lp : StandardFormLP
    opts : SolveOptions, optional
        Only ``max_iterations`` is used (pivot cap per phase).
    method : {"simplex", "highs"}
        ``"simplex"`` runs the embedded dense simplex method. ``"highs"``
        delegates to SciPy's HiGHS interface, which is meant for problems too
        large for a dense tableau.
    rule : {"bland", "dantzig"}
        Entering-variable rule for the embedded simplex. ``"dantzig"`` falls
        back to Bland's rule after a run of degenerate pivots.

    Returns
    -------
    LPSolution
        For infeasible problems ``value`` is NaN; for unbounded problems it is
        ``-inf`` (minimization) or ``+inf`` (maximization).
    """
    opts = opts or SolveOptions()
    if method == "highs":
        return _solve_highs(lp)
    if method != "simplex":
        raise InputError(f"unknown LP method {method!r}")
    if rule not in ("bland", "dantzig"):
        raise InputError(f"unknown pivot rule {rule!r}")
    form = _to_equality_form(lp)
    status, z, iters = _simplex_equality(form, opts.max_iterations, rule)
    if status == "infeasible":
        return LPSolution(LPStatus.INFEASIBLE, np.nan, None, iters, lp.names)
    if status == "unbounded":
        inf = -np.inf if lp.sense == "min" else np.inf
        return LPSolution(LPStatus.UNBOUNDED, inf, None, iters, lp.names)
    x = form.back @ z[: form.nz] + form.offset
    _check_primal(lp, x)
    return LPSolution(LPStatus.OPTIMAL, float(lp.c @ x), x, iters, lp.names)


def dump_lp(lp: StandardFormLP, out: IO[str]) -> None:
    """Write ``lp`` in a plain-text block format for external cross-checks."""

    def vec(v):
        return " ".join(repr(float(t)) for t in v)

    out.write(f"sense {lp.sense}\n")
    out.write(f"vars {lp.num_vars}\n")
    out.write(f"c {vec(lp.c)}\n")
    out.write(f"lower {vec(lp.lower)}\n")
    out.write(f"upper {vec(lp.upper)}\n")
    out.write(f"A {lp.A_ub.shape[0]}\n")
    for row, rhs in zip(lp.A_ub, lp.b_ub):
        out.write(f"{vec(row)} | {float(rhs)!r}\n")
    out.write(f"E {lp.A_eq.shape[0]}\n")
    for row, rhs in zip(lp.A_eq, lp.b_eq):
        out.write(f"{vec(row)} | {float(rhs)!r}\n")
