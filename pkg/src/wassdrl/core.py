"""Domain types: datasets, losses, transport costs and polyhedral support sets."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InfeasibleSupport, InputError, LabelError, NoSlaterPoint, NotPWL, ParseError
from .solver.lp import LPBuilder, solve_lp
from .solver.norms import conjugate_exponent, dual_norm, parse_p, pnorm

__all__ = [
    "Task",
    "Dataset",
    "CostKind",
    "TransportCost",
    "LossKind",
    "LossSpec",
    "SupportPolytope",
    "LinearHypothesis",
    "loss_eval",
    "loss_derivative",
    "loss_lipschitz",
    "pwl_pieces",
    "dual_norm",
    "steepest_slope_attained",
    "load_dataset",
    "save_dataset",
    "asymptotic_slopes",
    "FitResult",
]


class Task(str, Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"

    @classmethod
    def parse(cls, value) -> "Task":
        if isinstance(value, Task):
            return value
        key = str(value).lower()
        if key in ("reg", "regression"):
            return cls.REGRESSION
        if key in ("cls", "classification"):
            return cls.CLASSIFICATION
        raise InputError(f"unknown task {value!r}")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Training samples ``(x_i, y_i)``, i = 1..N.

    Parameters
    ----------
    inputs : (N, n) array_like
    outputs : (N,) array_like
        Real responses, or labels in {-1, +1} for classification.
    task : Task or str
    """

    inputs: np.ndarray
    outputs: np.ndarray
    task: Task = Task.REGRESSION

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        y = np.asarray(self.outputs, dtype=float).reshape(-1)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DimensionMismatch("inputs must be a non-empty N x n matrix")
        if y.size != x.shape[0]:
            raise DimensionMismatch(f"{x.shape[0]} inputs but {y.size} outputs")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InputError("dataset contains NaN or Inf")
        task = Task.parse(self.task)
        if task is Task.CLASSIFICATION and not np.all(np.isin(y, (-1.0, 1.0))):
            bad = y[~np.isin(y, (-1.0, 1.0))][0]
            raise LabelError(f"classification label {bad} is not -1 or +1")
        object.__setattr__(self, "inputs", _frozen(x))
        object.__setattr__(self, "outputs", _frozen(y))
        object.__setattr__(self, "task", task)

    @property
    def N(self) -> int:
        return self.inputs.shape[0]

    @property
    def n(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.inputs[idx], self.outputs[idx], self.task)


# ---------------------------------------------------------------------------
# transport costs


class CostKind(str, Enum):
    SEPARABLE_CLASSIFICATION = "separable_classification"
    SEPARABLE_REGRESSION = "separable_regression"
    JOINT_REGRESSION = "joint_regression"


@dataclass(frozen=True)
class TransportCost:
    """Ground metric on the input-output space.

    ``SEPARABLE_CLASSIFICATION``: ``||x - x'||_p + kappa * 1[y != y']``.
    ``SEPARABLE_REGRESSION``: ``||x - x'||_p + kappa * |y - y'|``.
    ``JOINT_REGRESSION``: ``||(x - x', y - y')||_p``.

    ``kappa`` may be ``inf``. Zero is accepted for classification, where it
    makes label flips free.
    """

    p: float = 2.0
    kind: CostKind = CostKind.JOINT_REGRESSION
    kappa: float = np.inf

    def __post_init__(self):
        object.__setattr__(self, "p", parse_p(self.p))
        object.__setattr__(self, "kind", CostKind(self.kind))
        kappa = float(self.kappa)
        if np.isnan(kappa) or kappa < 0:
            raise InputError("kappa must be nonnegative")
        if kappa == 0 and self.kind is CostKind.SEPARABLE_REGRESSION:
            raise InputError("kappa must be positive for the separable regression metric")
        object.__setattr__(self, "kappa", kappa)

    @classmethod
    def joint(cls, p=2.0):
        return cls(p, CostKind.JOINT_REGRESSION)

    @classmethod
    def separable_regression(cls, p=2.0, kappa=np.inf):
        return cls(p, CostKind.SEPARABLE_REGRESSION, kappa)

    @classmethod
    def classification(cls, p=2.0, kappa=np.inf):
        return cls(p, CostKind.SEPARABLE_CLASSIFICATION, kappa)

    @property
    def q(self) -> float:
        return conjugate_exponent(self.p)

    def cost(self, x, y, x2, y2) -> float:
        """Transport cost between ``(x, y)`` and ``(x2, y2)``."""
        dx = np.asarray(x, float) - np.asarray(x2, float)
        if self.kind is CostKind.JOINT_REGRESSION:
            return pnorm(np.append(dx, float(y) - float(y2)), self.p)
        base = pnorm(dx, self.p)
        if self.kind is CostKind.SEPARABLE_CLASSIFICATION:
            flip = float(y) != float(y2)
        else:
            flip = abs(float(y) - float(y2))
        if flip == 0:
            return base
        return base + self.kappa * flip

    def regression_dual(self, w) -> float:
        """Dual norm of ``(w, -1)``, the slope of the worst-case loss in the radius."""
        w = np.asarray(w, float).ravel()
        if self.kind is CostKind.JOINT_REGRESSION:
            return dual_norm(self.p, np.append(w, -1.0))
        if self.kind is CostKind.SEPARABLE_REGRESSION:
            return max(dual_norm(self.p, w), 1.0 / self.kappa)
        raise InputError("classification metric has no regression dual")


# ---------------------------------------------------------------------------
# losses


class LossKind(str, Enum):
    HINGE = "hinge"
    SMOOTH_HINGE = "smooth_hinge"
    LOGLOSS = "logloss"
    HUBER = "huber"
    EPS_INSENSITIVE = "eps_insensitive"
    PINBALL = "pinball"
    ABSOLUTE = "absolute"
    PWL = "pwl"


@dataclass(frozen=True)
class LossSpec:
    """Univariate convex loss ``L``.

    Use the constructors (``LossSpec.hinge()``, ``LossSpec.huber(1.0)``, ...)
    rather than the raw fields. ``param`` holds delta, epsilon or tau;
    ``pieces`` holds the ``(a_j, b_j)`` pairs of a generic PWL loss.
    """

    kind: LossKind
    param: float = 0.0
    pieces: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        kind = LossKind(self.kind)
        object.__setattr__(self, "kind", kind)
        par = float(self.param)
        if kind is LossKind.HUBER and not par > 0:
            raise InputError("Huber threshold must be positive")
        if kind is LossKind.EPS_INSENSITIVE and not par >= 0:
            raise InputError("epsilon must be nonnegative")
        if kind is LossKind.PINBALL and not 0 <= par <= 1:
            raise InputError("tau must lie in [0, 1]")
        if kind is LossKind.PWL:
            pcs = tuple((float(a), float(b)) for a, b in self.pieces)
            if not pcs:
                raise InputError("a PWL loss needs at least one piece")
            if not np.all(np.isfinite(pcs)):
                raise InputError("PWL pieces must be finite")
            object.__setattr__(self, "pieces", pcs)
        object.__setattr__(self, "param", par)

    @classmethod
    def hinge(cls):
        return cls(LossKind.HINGE)

    @classmethod
    def smooth_hinge(cls):
        return cls(LossKind.SMOOTH_HINGE)

    @classmethod
    def logloss(cls):
        return cls(LossKind.LOGLOSS)

    @classmethod
    def huber(cls, delta):
        return cls(LossKind.HUBER, delta)

    @classmethod
    def eps_insensitive(cls, eps):
        return cls(LossKind.EPS_INSENSITIVE, eps)

    @classmethod
    def pinball(cls, tau):
        return cls(LossKind.PINBALL, tau)

    @classmethod
    def absolute(cls):
        return cls(LossKind.ABSOLUTE)

    @classmethod
    def pwl(cls, pieces):
        return cls(LossKind.PWL, 0.0, tuple(pieces))

    @classmethod
    def parse(cls, name: str, param: float | None = None) -> "LossSpec":
        """Build a loss from a CLI-style name such as ``"huber"`` or ``"pinball"``."""
        key = name.lower().replace("-", "_")
        aliases = {"eps": "eps_insensitive", "epsilon_insensitive": "eps_insensitive",
                   "svr": "eps_insensitive", "quantile": "pinball", "abs": "absolute",
                   "logistic": "logloss", "smoothhinge": "smooth_hinge"}
        key = aliases.get(key, key)
        defaults = {"huber": 1.0, "eps_insensitive": 0.1, "pinball": 0.5}
        if key in defaults:
            return cls(LossKind(key), defaults[key] if param is None else param)
        try:
            return cls(LossKind(key))
        except ValueError:
            raise InputError(f"unknown loss {name!r}") from None

    @property
    def is_pwl(self) -> bool:
        return self.kind not in (LossKind.HUBER, LossKind.SMOOTH_HINGE, LossKind.LOGLOSS)

    def __call__(self, z):
        return loss_eval(self, z)

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kind in (LossKind.HUBER, LossKind.EPS_INSENSITIVE, LossKind.PINBALL):
            out["param"] = self.param
        if self.kind is LossKind.PWL:
            out["pieces"] = [list(p) for p in self.pieces]
        return out

    @classmethod
    def from_dict(cls, d) -> "LossSpec":
        return cls(LossKind(d["kind"]), d.get("param", 0.0), tuple(map(tuple, d.get("pieces", ()))))


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def loss_eval(loss: LossSpec, z):
    """Evaluate ``L(z)``; vectorized over array ``z``."""
    z = np.asarray(z, dtype=float)
    k = loss.kind
    if k is LossKind.HINGE:
        out = np.maximum(0.0, 1.0 - z)
    elif k is LossKind.SMOOTH_HINGE:
        out = np.where(z <= 0, 0.5 - z, np.where(z < 1, 0.5 * (1 - z) ** 2, 0.0))
    elif k is LossKind.LOGLOSS:
        out = _softplus(-z)
    elif k is LossKind.HUBER:
        d = loss.param
        a = np.abs(z)
        out = np.where(a <= d, 0.5 * z * z, d * (a - 0.5 * d))
    elif k is LossKind.EPS_INSENSITIVE:
        out = np.maximum(0.0, np.abs(z) - loss.param)
    elif k is LossKind.PINBALL:
        t = loss.param
        out = np.maximum(-t * z, (1 - t) * z)
    elif k is LossKind.ABSOLUTE:
        out = np.abs(z)
    else:
        a, b = _pieces_array(loss.pieces)
        out = np.max(np.multiply.outer(z, a) + b, axis=-1)
    return float(out) if out.ndim == 0 else out


def loss_derivative(loss: LossSpec, z):
    """A subgradient of ``L`` at ``z`` (vectorized).

    At kinks of PWL losses the slope of the first active piece is returned.
    """
    z = np.asarray(z, dtype=float)
    k = loss.kind
    if k is LossKind.HINGE:
        out = np.where(z < 1, -1.0, 0.0)
    elif k is LossKind.SMOOTH_HINGE:
        out = np.where(z <= 0, -1.0, np.where(z < 1, z - 1.0, 0.0))
    elif k is LossKind.LOGLOSS:
        out = -np.exp(-_softplus(z))  # -1 / (1 + e^z)
    elif k is LossKind.HUBER:
        out = np.clip(z, -loss.param, loss.param)
    elif k is LossKind.EPS_INSENSITIVE:
        out = np.where(np.abs(z) > loss.param, np.sign(z), 0.0)
    elif k is LossKind.PINBALL:
        out = np.where(z < 0, -loss.param, np.where(z > 0, 1 - loss.param, 0.0))
    elif k is LossKind.ABSOLUTE:
        out = np.sign(z)
    else:
        a, b = _pieces_array(loss.pieces)
        out = a[np.argmax(np.multiply.outer(z, a) + b, axis=-1)]
    return float(out) if np.ndim(out) == 0 else out


def loss_lipschitz(loss: LossSpec) -> float:
    """Lipschitz modulus of ``L``."""
    k = loss.kind
    if k is LossKind.HUBER:
        return loss.param
    if k is LossKind.PINBALL:
        return max(loss.param, 1 - loss.param)
    if k is LossKind.PWL:
        return float(max(abs(a) for a, _ in loss.pieces))
    return 1.0


def pwl_pieces(loss: LossSpec) -> list[tuple[float, float]]:
    """Affine pieces ``(a_j, b_j)`` with ``L(z) = max_j a_j z + b_j``.

    Raises
    ------
    NotPWL
        For Huber, smooth hinge and logloss.
    """
    k = loss.kind
    if k is LossKind.HINGE:
        return [(0.0, 0.0), (-1.0, 1.0)]
    if k is LossKind.EPS_INSENSITIVE:
        e = loss.param
        return [(0.0, 0.0), (1.0, -e), (-1.0, -e)]
    if k is LossKind.PINBALL:
        t = loss.param
        return [(-t, 0.0), (1.0 - t, 0.0)]
    if k is LossKind.ABSOLUTE:
        return [(1.0, 0.0), (-1.0, 0.0)]
    if k is LossKind.PWL:
        return list(loss.pieces)
    raise NotPWL(f"{k.value} loss is not piecewise linear")


def _pieces_array(pieces):
    arr = np.asarray(pieces, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def asymptotic_slopes(loss: LossSpec) -> tuple[float, float]:
    """Limits of ``L(z)/|z|`` as ``z -> -inf`` and ``z -> +inf``."""
    k = loss.kind
    if k in (LossKind.HINGE, LossKind.SMOOTH_HINGE, LossKind.LOGLOSS):
        return 1.0, 0.0
    if k is LossKind.HUBER:
        return loss.param, loss.param
    if k is LossKind.PINBALL:
        return loss.param, 1 - loss.param
    if k in (LossKind.EPS_INSENSITIVE, LossKind.ABSOLUTE):
        return 1.0, 1.0
    a, _ = _pieces_array(loss.pieces)
    return max(0.0, -a.min()), max(0.0, a.max())


def steepest_slope_attained(loss: LossSpec, z, *, tol=1e-12) -> np.ndarray:
    """Whether ``L`` is differentiable at ``z`` with ``|L'(z)| = lip(L)``.

    This is the sample-wise test behind the dispersion and non-separability
    conditions under which robust and distributionally robust losses agree.
    """
    z = np.asarray(z, dtype=float)
    lip = loss_lipschitz(loss)
    k = loss.kind
    if k is LossKind.LOGLOSS:
        return np.zeros(z.shape, bool)
    if k is LossKind.SMOOTH_HINGE:
        return z <= 0
    if k is LossKind.HUBER:
        return np.abs(z) >= loss.param
    # PWL: derivative exists iff all active pieces share one slope
    a, b = _pieces_array(pwl_pieces(loss))
    vals = np.multiply.outer(z, a) + b
    top = vals.max(axis=-1, keepdims=True)
    active = vals >= top - tol * np.maximum(1.0, np.abs(top))
    slopes_hi = np.where(active, a, -np.inf).max(axis=-1)
    slopes_lo = np.where(active, a, np.inf).min(axis=-1)
    differentiable = slopes_hi - slopes_lo <= tol
    return differentiable & (np.abs(slopes_hi) >= lip - tol)


# ---------------------------------------------------------------------------
# support sets


@dataclass(frozen=True, eq=False)
class SupportPolytope:
    """Polyhedral support ``{(x, y) : C1 x + c2 y <= d}`` or ``{x : C1 x <= d}``.

    ``c2`` is None for input-only supports (classification). An empty
    constraint set (``m = 0``) denotes the unbounded support; use
    :meth:`unbounded`. A strictly feasible Slater point is stored on
    construction; when none is supplied it is computed with an LP that
    maximizes the smallest constraint slack.

    Raises
    ------
    InfeasibleSupport
        If the polytope is empty.
    NoSlaterPoint
        If it is nonempty but has no interior.
    """

    C1: np.ndarray
    c2: np.ndarray | None
    d: np.ndarray
    slater: np.ndarray | None = field(default=None)

    def __post_init__(self):
        C1 = np.atleast_2d(np.asarray(self.C1, dtype=float))
        d = np.asarray(self.d, dtype=float).reshape(-1)
        if C1.size == 0:
            C1 = np.zeros((0, C1.shape[1] if C1.ndim == 2 else 0))
        if C1.shape[0] != d.size:
            raise DimensionMismatch("C1 and d have different row counts")
        c2 = None
        if self.c2 is not None:
            c2 = np.asarray(self.c2, dtype=float).reshape(-1)
            if c2.size != d.size:
                raise DimensionMismatch("c2 and d have different lengths")
        if not (np.all(np.isfinite(C1)) and np.all(np.isfinite(d))
                and (c2 is None or np.all(np.isfinite(c2)))):
            raise InputError("support data must be finite")
        object.__setattr__(self, "C1", _frozen(C1))
        object.__setattr__(self, "c2", None if c2 is None else _frozen(c2))
        object.__setattr__(self, "d", _frozen(d))
        if self.slater is not None:
            pt = np.asarray(self.slater, dtype=float).reshape(-1)
            if pt.size != self.dim or np.any(self.slack(pt) <= 0):
                raise NoSlaterPoint("supplied point is not strictly feasible")
        else:
            pt = self._find_slater()
        object.__setattr__(self, "slater", _frozen(pt))

    @classmethod
    def unbounded(cls, n_inputs: int, with_output: bool = True) -> "SupportPolytope":
        return cls(np.zeros((0, n_inputs)), np.zeros(0) if with_output else None, np.zeros(0))

    @classmethod
    def box(cls, lower, upper, with_output: bool | None = None) -> "SupportPolytope":
        """Axis-aligned box. For regression pass bounds on ``(x, y)`` and
        ``with_output=True`` (the last coordinate is the output)."""
        lower = np.asarray(lower, float).ravel()
        upper = np.asarray(upper, float).ravel()
        k = lower.size
        eye = np.eye(k)
        G = np.vstack([eye, -eye])
        h = np.concatenate([upper, -lower])
        if with_output:
            return cls(G[:, :-1], G[:, -1], h)
        return cls(G, None, h)

    @property
    def is_unbounded(self) -> bool:
        return self.d.size == 0

    @property
    def has_output(self) -> bool:
        return self.c2 is not None

    @property
    def n_inputs(self) -> int:
        return self.C1.shape[1]

    @property
    def dim(self) -> int:
        return self.n_inputs + (1 if self.has_output else 0)

    @property
    def G(self) -> np.ndarray:
        """Constraint matrix acting on the full point ``(x, y)`` or ``x``."""
        if self.has_output:
            return np.column_stack([self.C1, self.c2])
        return np.asarray(self.C1)

    def slack(self, point) -> np.ndarray:
        return self.d - self.G @ np.asarray(point, float).reshape(-1)

    def contains(self, point, tol: float = 1e-9) -> bool:
        if self.is_unbounded:
            return True
        return bool(np.all(self.slack(point) >= -tol * (1 + np.abs(self.d))))

    def _find_slater(self) -> np.ndarray:
        if self.is_unbounded:
            return np.zeros(self.dim)
        G = self.G
        lp = LPBuilder("max")
        z = lp.add_var("z", (self.dim,), lower=-np.inf)
        t = lp.add_var("t", lower=-np.inf, upper=1.0)
        lp.add_cost(t, 1.0)
        for r in range(G.shape[0]):
            lp.add_le([(z, G[r]), (t, 1.0)], self.d[r])
        sol = solve_lp(lp.build())
        if not sol.optimal:
            raise InfeasibleSupport("support polytope is empty")
        if sol.get("t")[0] <= 1e-9:
            if sol.get("t")[0] < -1e-9:
                raise InfeasibleSupport("support polytope is empty")
            raise NoSlaterPoint("support polytope has empty interior")
        return sol.get("z")

    def to_dict(self) -> dict:
        out = {"C1": self.C1.tolist(), "d": self.d.tolist()}
        if self.has_output:
            out["c2"] = self.c2.tolist()
        return out

    @classmethod
    def from_dict(cls, d, n_inputs: int | None = None, with_output: bool = True) -> "SupportPolytope":
        C1 = np.asarray(d.get("C1", []), float)
        if C1.size == 0 and n_inputs is not None:
            C1 = np.zeros((0, n_inputs))
        c2 = d.get("c2")
        if c2 is None and with_output:
            c2 = np.zeros(len(d.get("d", [])))
        return cls(C1, c2 if with_output else None, d.get("d", []))


@dataclass(frozen=True, eq=False)
class LinearHypothesis:
    """Linear hypothesis ``h(x) = <w, x>``."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise InputError("weights must be finite")
        object.__setattr__(self, "w", _frozen(w))

    def __call__(self, x):
        return np.asarray(x, float) @ self.w

    def to_dict(self) -> dict:
        return {"type": "linear", "w": self.w.tolist()}


# ---------------------------------------------------------------------------
# CSV io


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load_dataset(path, task="regression", *, delimiter: str = ",") -> Dataset:
    """Read a CSV file whose last column is the output.

    A first row containing any non-numeric field is treated as a header.

    Raises
    ------
    ParseError
        Missing or empty file, ragged rows, non-numeric fields.
    LabelError
        Classification labels other than -1 and +1.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in csv.reader(text.splitlines(), delimiter=delimiter)
            if r and any(tok.strip() for tok in r)]
    if rows and not all(_is_number(tok.strip()) for tok in rows[0]):
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path} contains no data rows")
    width = len(rows[0])
    if width < 2:
        raise ParseError("need at least one input column and one output column")
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"row {i + 1} has {len(row)} fields, expected {width}")
        try:
            data[i] = [float(tok) for tok in row]
        except ValueError:
            raise ParseError(f"row {i + 1} has a non-numeric field") from None
    if not np.all(np.isfinite(data)):
        raise ParseError("dataset contains NaN or Inf")
    return Dataset(data[:, :-1], data[:, -1], task)


def save_dataset(dataset: Dataset, path, *, header: bool = True) -> None:
    """Write ``dataset`` in the format read by :func:`load_dataset`."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        if header:
            wr.writerow([f"x{j + 1}" for j in range(dataset.n)] + ["y"])
        for x, y in zip(dataset.inputs, dataset.outputs):
            wr.writerow([repr(float(v)) for v in x] + [repr(float(y))])


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of a training routine; unpacks as ``(hypothesis, value)``.

    ``route`` names the reformulation that was solved ("lp" or
    "composite"); ``converged`` is False when an iterative solver hit its
    budget.
    """

    hypothesis: object
    value: float
    lam: float | None = None
    route: str = "lp"
    converged: bool = True

    def __iter__(self):
        yield self.hypothesis
        yield self.value
