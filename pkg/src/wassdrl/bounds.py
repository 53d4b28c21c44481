"""Generalization radii and error/risk intervals for fixed hypotheses."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .core import Dataset, Task
from .errors import (
    DimensionMismatch,
    InputError,
    SampleSizeTooSmall,
    SolverDefect,
    UnsupportedDimension,
)
from .solver.lp import LPBuilder, solve_lp
from .solver.norms import conjugate_exponent, parse_p, pnorm

__all__ = [
    "LightTailParams",
    "HypothesisBox",
    "ImprovedRadius",
    "IntervalReport",
    "radius_basic",
    "radius_improved",
    "confidence_radius",
    "error_interval",
    "risk_interval",
]


@dataclass(frozen=True)
class LightTailParams:
    """Constants of the light-tail and concentration assumptions.

    The defaults only make the formulas well posed; they carry no
    information about any particular distribution.
    """

    a: float = 2.0
    A: float = math.e
    c1: float = math.e
    c2: float = 1.0
    c3: float = math.e
    c4: float = 1.0

    def __post_init__(self):
        if not self.a > 1:
            raise InputError("a must exceed 1")
        if not self.A > 0:
            raise InputError("A must be positive")
        if not (self.c1 >= 1 and self.c3 >= 1):
            raise InputError("c1 and c3 must be at least 1")
        if not (self.c2 > 0 and self.c4 > 0):
            raise InputError("c2 and c4 must be positive")


@dataclass(frozen=True)
class HypothesisBox:
    """Bounds ``omega_lower <= ||w||_* <= omega_upper`` on the hypothesis space.

    ``M_n`` is the largest dual norm of a standard basis vector, which is 1
    for every p-norm.
    """

    omega_lower: float
    omega_upper: float
    M_n: float = 1.0

    def __post_init__(self):
        if not self.omega_lower > 0:
            raise InputError("omega_lower must be positive")
        if not self.omega_upper >= 0:
            raise InputError("omega_upper must be nonnegative")
        if not self.M_n > 0:
            raise InputError("M_n must be positive")


class ImprovedRadius(NamedTuple):
    value: float
    precondition_ok: bool
    required_N: int


def _check_eta(eta):
    if not 0 < eta <= 1:
        raise InputError("eta must lie in (0, 1]")


def radius_basic(N: int, n: int, eta: float, params: LightTailParams | None = None) -> float:
    """Radius that contains the data-generating distribution with probability ``1 - eta``.

    Raises
    ------
    UnsupportedDimension
        For ``n = 1``, where the underlying concentration inequality takes a
        different form.
    """
    params = params or LightTailParams()
    _check_eta(eta)
    if N < 1 or n < 1:
        raise InputError("N and n must be positive")
    if n == 1:
        raise UnsupportedDimension("the basic radius is not available for n = 1")
    logc = math.log(params.c1 / eta)
    base = logc / (params.c2 * N)
    if N >= logc / params.c2:
        return base ** (1.0 / max(n + 1, 2))
    return base ** (1.0 / params.a)


def radius_improved(N: int, n: int, eta: float, params: LightTailParams | None = None,
                    box: HypothesisBox | None = None, *, strict: bool = True) -> ImprovedRadius:
    """Dimension-robust radius for bounded hypothesis spaces.

    Parameters
    ----------
    strict : bool
        Raise :class:`SampleSizeTooSmall` when ``N`` is below the sample-size
        threshold. With ``strict=False`` the formula value is returned with
        ``precondition_ok=False``.
    """
    params = params or LightTailParams()
    box = box or HypothesisBox(1.0, 1.0)
    _check_eta(eta)
    if N < 1 or n < 1:
        raise InputError("N and n must be positive")
    logc = math.log(params.c3 / eta)
    need = max((16 * n / params.c4) ** 2, 16 * logc / params.c4)
    required = int(math.ceil(need - 1e-9))
    ok = N >= need
    if strict and not ok:
        raise SampleSizeTooSmall(f"N = {N} is below the required {required}", required)
    inner = box.M_n * n * params.A + math.sqrt((n * math.log(math.sqrt(N)) + logc) / params.c4)
    value = 2 * box.omega_upper / (math.sqrt(N) * box.omega_lower) * inner
    return ImprovedRadius(value, ok, required)


def confidence_radius(N: int, n: int, eta: float, params: LightTailParams | None = None) -> float:
    """Radius to use for a two-sided interval at significance level ``eta``."""
    return radius_basic(N, n, eta / 2, params)


def _fixed_w(dataset: Dataset, w, task: Task):
    if dataset.task is not task:
        raise InputError(f"{task.value} dataset required")
    w = np.asarray(getattr(w, "w", w), float).ravel()
    if w.size != dataset.n:
        raise DimensionMismatch(f"hypothesis has {w.size} weights, data has {dataset.n} features")
    return w


def error_interval(dataset: Dataset, w, rho: float, p=2.0) -> tuple[float, float]:
    """Best- and worst-case mean absolute error over the Wasserstein ball."""
    w = _fixed_w(dataset, w, Task.REGRESSION)
    if rho < 0:
        raise InputError("rho must be nonnegative")
    q = conjugate_exponent(parse_p(p))
    mae = float(np.mean(np.abs(dataset.outputs - dataset.inputs @ w)))
    shift = rho * pnorm(np.append(w, -1.0), q)
    return max(mae - shift, 0.0), mae + shift


def _risk_lp(margins, wnorm, rho, kappa):
    lp = LPBuilder()
    N = margins.size
    lam = lp.add_var("lam")
    s = lp.add_var("s", (N,))
    r = lp.add_var("r", (N,))
    lp.add_cost(lam, rho)
    lp.add_cost(s, 1.0 / N)
    flip = np.isfinite(kappa)
    if flip:
        t = lp.add_var("t", (N,))
    for i in range(N):
        # 1 - r m <= s
        lp.add_le([(r[i], -margins[i]), (s[i], -1.0)], -1.0)
        lp.add_le([(r[i], wnorm), (lam, -1.0)], 0.0)
        if flip:
            # 1 + t m - kappa lam <= s
            lp.add_le([(t[i], margins[i]), (lam, -kappa), (s[i], -1.0)], -1.0)
            lp.add_le([(t[i], wnorm), (lam, -1.0)], 0.0)
    sol = solve_lp(lp.build())
    if not sol.optimal:
        raise SolverDefect(f"risk LP is {sol.status.value}")
    return sol.value


def risk_interval(dataset: Dataset, w, rho: float, kappa: float = np.inf, p=2.0) -> tuple[float, float]:
    """Best- and worst-case misclassification probability over the Wasserstein ball.

    A sample with zero margin counts as misclassified in the worst case and
    as correctly classified in the best case, matching the strict
    inequalities of the underlying indicator representations.
    """
    w = _fixed_w(dataset, w, Task.CLASSIFICATION)
    if rho < 0:
        raise InputError("rho must be nonnegative")
    if not kappa >= 0:
        raise InputError("kappa must be nonnegative")
    q = conjugate_exponent(parse_p(p))
    m = dataset.outputs * (dataset.inputs @ w)
    if rho == 0:
        # the ball is a single point; skip the LPs to avoid round-off in 1 - value
        return float(np.mean(m < 0)), float(np.mean(m <= 0))
    wnorm = pnorm(w, q)
    upper = _risk_lp(m, wnorm, rho, kappa)
    lower = 1.0 - _risk_lp(-m, wnorm, rho, kappa)
    upper = min(max(upper, 0.0), 1.0)
    lower = min(max(lower, 0.0), upper)
    return lower, upper


@dataclass(frozen=True)
class IntervalReport:
    rho: float
    kappa: float | None
    lower: float
    upper: float
    radius_source: str = "user"

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["kappa"] is not None and not np.isfinite(d["kappa"]):
            d["kappa"] = "inf"
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)
