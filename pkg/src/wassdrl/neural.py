"""Feed-forward networks with Lipschitz-product regularization.

Networks map ``x`` through ``x_{m+1} = sigma_m(W_m x_m)`` and end in a single
scalar output. The regularizers bound the network's Lipschitz modulus by the
product (or, convexly, the sum) of induced matrix norms, and training uses
stochastic proximal gradient steps with the matching proximal operators.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import Dataset, LossSpec, Task, loss_derivative, loss_eval, loss_lipschitz
from .errors import DimensionMismatch, DivergenceDetected, InputError
from .solver.norms import parse_p, project_l1_ball

__all__ = [
    "Activation",
    "MLPSpec",
    "SPGDOptions",
    "SPGDResult",
    "init_weights",
    "nn_forward",
    "nn_predict",
    "nn_backprop",
    "operator_norm",
    "lipschitz_upper",
    "drnn_objective",
    "drnn_convex_objective",
    "prox_macs",
    "prox_spectral",
    "singular_value_threshold",
    "prox_mars",
    "prox_operator_norm",
    "train_spgd",
    "weights_to_dict",
    "weights_from_dict",
    "weights_to_json",
]

DIVERGENCE_LIMIT = 1e12


class Activation(str, Enum):
    TANH = "tanh"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"
    RELU = "relu"
    ELU = "elu"
    IDENTITY = "identity"


BOUNDED = {Activation.TANH, Activation.SIGMOID, Activation.SOFTMAX}


@dataclass(frozen=True)
class MLPSpec:
    """Network architecture.

    Parameters
    ----------
    sizes : sequence of int
        Layer widths ``(n_1, ..., n_M, 1)``; the first entry is the input
        dimension and the last must be 1.
    activations : sequence of str
        One activation per weight matrix.
    p : float
        Norm used on every feature space (1, 2 or inf).
    elu_alpha : float
        Slope parameter of the ELU activation.
    """

    sizes: tuple
    activations: tuple
    p: float = 2.0
    elu_alpha: float = 1.0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        acts = tuple(Activation(a) for a in self.activations)
        if len(sizes) < 2:
            raise InputError("a network needs at least one layer")
        if any(s < 1 for s in sizes):
            raise InputError("layer sizes must be positive")
        if sizes[-1] != 1:
            raise InputError("the output layer must have width 1")
        if len(acts) != len(sizes) - 1:
            raise InputError("one activation per layer is required")
        for m, a in enumerate(acts):
            if a is Activation.SOFTMAX and (m == len(acts) - 1 or sizes[m + 1] < 2):
                raise InputError("softmax is only allowed on hidden layers of width >= 2")
        if not self.elu_alpha > 0:
            raise InputError("elu_alpha must be positive")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "activations", acts)
        object.__setattr__(self, "p", parse_p(self.p))

    @property
    def depth(self) -> int:
        return len(self.activations)

    def shapes(self) -> list[tuple[int, int]]:
        return [(self.sizes[m + 1], self.sizes[m]) for m in range(self.depth)]

    def activation_lipschitz(self, m: int) -> float:
        if self.activations[m] is Activation.ELU:
            return max(1.0, self.elu_alpha)
        return 1.0

    def check_weights(self, weights) -> list[np.ndarray]:
        ws = [np.asarray(W, float) for W in weights]
        if len(ws) != self.depth:
            raise DimensionMismatch(f"expected {self.depth} weight matrices, got {len(ws)}")
        for m, (W, shape) in enumerate(zip(ws, self.shapes())):
            if W.shape != shape:
                raise DimensionMismatch(f"layer {m} has shape {W.shape}, expected {shape}")
            if not np.all(np.isfinite(W)):
                raise InputError(f"layer {m} has non-finite weights")
        return ws


def init_weights(spec: MLPSpec, seed: int = 0) -> list[np.ndarray]:
    """Glorot-uniform initialization."""
    rng = np.random.default_rng(seed)
    out = []
    for rows, cols in spec.shapes():
        lim = math.sqrt(6.0 / (rows + cols))
        out.append(rng.uniform(-lim, lim, size=(rows, cols)))
    return out


def _act(spec: MLPSpec, m: int, z: np.ndarray) -> np.ndarray:
    a = spec.activations[m]
    if a is Activation.TANH:
        return np.tanh(z)
    if a is Activation.SIGMOID:
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if a is Activation.RELU:
        return np.maximum(z, 0.0)
    if a is Activation.ELU:
        return np.where(z > 0, z, spec.elu_alpha * np.expm1(np.minimum(z, 0.0)))
    if a is Activation.SOFTMAX:
        e = np.exp(z - z.max(axis=0, keepdims=True))
        return e / e.sum(axis=0, keepdims=True)
    return z


def _act_backward(spec: MLPSpec, m: int, z, out, g):
    """Vector-Jacobian product of the activation at ``z`` with ``g``."""
    a = spec.activations[m]
    if a is Activation.TANH:
        return g * (1.0 - out * out)
    if a is Activation.SIGMOID:
        return g * out * (1.0 - out)
    if a is Activation.RELU:
        return g * (z > 0)
    if a is Activation.ELU:
        return g * np.where(z > 0, 1.0, spec.elu_alpha * np.exp(np.minimum(z, 0.0)))
    if a is Activation.SOFTMAX:
        return out * (g - (out * g).sum(axis=0, keepdims=True))
    return g


def _forward(spec, ws, X):
    """Column-batched forward pass; returns pre-activations and layer outputs."""
    xs, zs = [X], []
    for m, W in enumerate(ws):
        z = W @ xs[-1]
        zs.append(z)
        xs.append(_act(spec, m, z))
    return zs, xs


def nn_forward(spec: MLPSpec, weights, x, *, return_cache: bool = False):
    """Network output at a single input.

    With ``return_cache=True`` also returns ``(pre_activations, layer_outputs)``.
    """
    ws = spec.check_weights(weights)
    x = np.asarray(x, float).ravel()
    if x.size != spec.sizes[0]:
        raise DimensionMismatch(f"input has {x.size} entries, network expects {spec.sizes[0]}")
    zs, xs = _forward(spec, ws, x[:, None])
    value = float(xs[-1][0, 0])
    return (value, (zs, xs)) if return_cache else value


def nn_predict(spec: MLPSpec, weights, X) -> np.ndarray:
    """Network outputs at the rows of ``X``."""
    ws = spec.check_weights(weights)
    X = np.atleast_2d(np.asarray(X, float))
    if X.shape[1] != spec.sizes[0]:
        raise DimensionMismatch(f"inputs have {X.shape[1]} features, network expects {spec.sizes[0]}")
    return _forward(spec, ws, X.T)[1][-1][0]


def _loss_arg(task: Task, h, y):
    return y * h if task is Task.CLASSIFICATION else h - y


def _dloss_dh(task: Task, loss, h, y):
    d = loss_derivative(loss, _loss_arg(task, h, y))
    return d * y if task is Task.CLASSIFICATION else d


def _backward(spec, ws, zs, xs, g_out):
    grads = [None] * len(ws)
    g = g_out
    for m in range(len(ws) - 1, -1, -1):
        gz = _act_backward(spec, m, zs[m], xs[m + 1], g)
        grads[m] = gz @ xs[m].T
        if m:
            g = ws[m].T @ gz
    return grads


def nn_backprop(spec: MLPSpec, weights, x, y, loss: LossSpec, task="regression") -> list[np.ndarray]:
    """Gradients of ``loss`` at one sample with respect to every weight matrix.

    The loss argument is ``h(x) - y`` for regression and ``y h(x)`` for
    classification. ReLU uses the subgradient 0 at its kink.
    """
    task = Task.parse(task)
    h, (zs, xs) = nn_forward(spec, weights, x, return_cache=True)
    ws = spec.check_weights(weights)
    g = np.array([[_dloss_dh(task, loss, h, float(y))]])
    return _backward(spec, ws, zs, xs, g)


def _batch_grad(spec, ws, X, y, loss, task):
    zs, xs = _forward(spec, ws, X.T)
    h = xs[-1][0]
    g = (_dloss_dh(task, loss, h, y) / len(y))[None, :]
    return _backward(spec, ws, zs, xs, g)


def operator_norm(W, p) -> float:
    """Norm of ``W`` induced by the vector p-norm on both spaces."""
    W = np.atleast_2d(np.asarray(W, float))
    p = parse_p(p)
    if p == 1.0:
        return float(np.abs(W).sum(axis=0).max())
    if p == np.inf:
        return float(np.abs(W).sum(axis=1).max())
    return float(np.linalg.norm(W, 2))


def lipschitz_upper(spec: MLPSpec, weights) -> float:
    """Product of activation moduli and induced weight norms."""
    ws = spec.check_weights(weights)
    out = 1.0
    for m, W in enumerate(ws):
        out *= spec.activation_lipschitz(m) * operator_norm(W, spec.p)
    return out


def _empirical(spec, ws, dataset, loss):
    h = _forward(spec, ws, dataset.inputs.T)[1][-1][0]
    return float(np.mean(loss_eval(loss, _loss_arg(dataset.task, h, dataset.outputs))))


def _check_data(spec, dataset):
    if dataset.n != spec.sizes[0]:
        raise DimensionMismatch(f"data has {dataset.n} features, network expects {spec.sizes[0]}")


def drnn_objective(spec: MLPSpec, weights, dataset: Dataset, loss: LossSpec, rho: float,
                   kappa: float = np.inf, c_const: float | None = None) -> float:
    """Empirical loss plus ``rho lip(L) max{prod lip(sigma_m) ||W_m||, c / kappa}``.

    ``c_const`` defaults to 1 for regression. For classification with a
    finite ``kappa`` it defaults to 2 when the last activation is bounded
    and must be supplied otherwise.
    """
    ws = spec.check_weights(weights)
    _check_data(spec, dataset)
    if c_const is None:
        if dataset.task is Task.REGRESSION:
            c_const = 1.0
        elif spec.activations[-1] in BOUNDED:
            c_const = 2.0
        elif np.isfinite(kappa):
            raise InputError("c_const is required for unbounded output activations")
        else:
            c_const = 0.0
    flip = c_const / kappa if np.isfinite(kappa) else 0.0
    reg = max(lipschitz_upper(spec, ws), flip)
    return _empirical(spec, ws, dataset, loss) + rho * loss_lipschitz(loss) * reg


def drnn_convex_objective(spec: MLPSpec, weights, dataset: Dataset, loss: LossSpec, rho_bar: float) -> float:
    """Empirical loss plus ``rho_bar`` times the sum of induced weight norms."""
    ws = spec.check_weights(weights)
    _check_data(spec, dataset)
    reg = sum(operator_norm(W, spec.p) for W in ws)
    return _empirical(spec, ws, dataset, loss) + rho_bar * reg


def prox_spectral(W, eta: float) -> np.ndarray:
    """Prox of ``eta`` times the spectral norm.

    The map acts on the singular values only: by the Moreau decomposition
    the prox of ``eta ||s||_inf`` is ``s - P(s)`` with ``P`` the projection
    onto the l1 ball of radius ``eta``. Large singular values are clipped to
    a common level; when ``sum(s) <= eta`` the result is zero.

    Note this differs from :func:`singular_value_threshold`, which is the
    prox of the nuclear norm.
    """
    W = np.atleast_2d(np.asarray(W, float))
    if eta < 0:
        raise InputError("eta must be nonnegative")
    if eta == 0:
        return W.copy()
    U, S, Vt = np.linalg.svd(W, full_matrices=False)
    return (U * (S - project_l1_ball(S, eta))) @ Vt


def singular_value_threshold(W, eta: float) -> np.ndarray:
    """``U max(S - eta, 0) V^T``, the prox of ``eta`` times the nuclear norm."""
    W = np.atleast_2d(np.asarray(W, float))
    if eta < 0:
        raise InputError("eta must be nonnegative")
    U, S, Vt = np.linalg.svd(W, full_matrices=False)
    return (U * np.maximum(S - eta, 0.0)) @ Vt


def _project_columns(W, u):
    return np.column_stack([project_l1_ball(W[:, j], u) for j in range(W.shape[1])])


def prox_macs(W, eta: float, *, tol: float = 1e-12) -> np.ndarray:
    """Prox of ``eta`` times the max absolute column sum.

    Solves ``min_u eta u + 1/2 sum_j dist(W_j, B_1(u))^2`` by golden-section
    search (the function is convex in ``u``) and projects every column on the
    resulting l1 ball.
    """
    W = np.atleast_2d(np.asarray(W, float))
    if eta < 0:
        raise InputError("eta must be nonnegative")
    if eta == 0:
        return W.copy()

    def f(u):
        P = _project_columns(W, u)
        return eta * u + 0.5 * float(np.sum((P - W) ** 2))

    lo, hi = 0.0, float(np.abs(W).sum(axis=0).max())
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol * (1.0 + hi):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    u = 0.5 * (a + b)
    # the endpoints are candidates too when the minimum sits on the boundary
    u = min((lo, u, hi), key=f)
    return _project_columns(W, u)


def prox_mars(W, eta: float) -> np.ndarray:
    """Prox of ``eta`` times the max absolute row sum (MACS of the transpose)."""
    return prox_macs(np.atleast_2d(np.asarray(W, float)).T, eta).T


def prox_operator_norm(W, eta: float, p) -> np.ndarray:
    p = parse_p(p)
    if p == 1.0:
        return prox_macs(W, eta)
    if p == np.inf:
        return prox_mars(W, eta)
    return prox_spectral(W, eta)


@dataclass(frozen=True)
class SPGDOptions:
    """Settings for stochastic proximal gradient descent.

    The step at iteration ``k`` is ``eta0 / (1 + k / decay)``; ``decay=None``
    keeps it constant. ``batch_size`` samples are drawn per step without
    replacement within an epoch.
    """

    epochs: int = 100
    eta0: float = 1e-3
    decay: float | None = None
    momentum: float = 0.9
    batch_size: int = 1
    tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InputError("epochs and batch_size must be positive")
        if not self.eta0 > 0:
            raise InputError("eta0 must be positive")
        if not 0 <= self.momentum < 1:
            raise InputError("momentum must lie in [0, 1)")
        if self.decay is not None and not self.decay > 0:
            raise InputError("decay must be positive")


@dataclass
class SPGDResult:
    weights: list
    trace: list = field(default_factory=list)
    converged: bool = False

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["epoch", "objective", "reg_term"])
            wr.writerows(self.trace)


def train_spgd(spec: MLPSpec, dataset: Dataset, loss: LossSpec, rho_bar: float,
               opts: SPGDOptions | None = None, *, init=None) -> SPGDResult:
    """Minimize the convex-regularizer objective by stochastic proximal gradient.

    Each step takes a momentum step on a minibatch gradient and then applies
    the prox of ``eta_k rho_bar ||W_m||`` layer by layer. Training stops when
    the epoch-over-epoch change of the objective falls below
    ``tol * max(1, |objective|)``.

    Raises
    ------
    DivergenceDetected
        If the objective becomes non-finite or exceeds 1e12.
    """
    opts = opts or SPGDOptions()
    _check_data(spec, dataset)
    if rho_bar < 0:
        raise InputError("rho_bar must be nonnegative")
    ws = [W.copy() for W in spec.check_weights(init if init is not None else init_weights(spec, opts.seed))]
    vel = [np.zeros_like(W) for W in ws]
    rng = np.random.default_rng(opts.seed)
    X, y, task = dataset.inputs, dataset.outputs, dataset.task
    N = dataset.N
    decay = opts.decay
    result = SPGDResult(ws)
    prev = None
    k = 0
    for epoch in range(1, opts.epochs + 1):
        order = rng.permutation(N)
        for start in range(0, N, opts.batch_size):
            idx = order[start:start + opts.batch_size]
            step = opts.eta0 / (1.0 + k / decay) if decay else opts.eta0
            grads = _batch_grad(spec, ws, X[idx], y[idx], loss, task)
            for m in range(len(ws)):
                vel[m] = opts.momentum * vel[m] - step * grads[m]
                ws[m] = prox_operator_norm(ws[m] + vel[m], step * rho_bar, spec.p)
            k += 1
        reg = sum(operator_norm(W, spec.p) for W in ws)
        obj = _empirical(spec, ws, dataset, loss) + rho_bar * reg
        if not np.isfinite(obj) or obj > DIVERGENCE_LIMIT:
            raise DivergenceDetected(f"objective reached {obj:.3g} in epoch {epoch}")
        result.trace.append((epoch, obj, reg))
        if prev is not None and abs(prev - obj) < opts.tol * max(1.0, abs(prev)):
            result.converged = True
            break
        prev = obj
    result.weights = ws
    return result


def weights_to_dict(spec: MLPSpec, weights) -> dict:
    ws = spec.check_weights(weights)
    layers = [{"rows": W.shape[0], "cols": W.shape[1], "data": W.ravel().tolist(),
               "activation": a.value} for W, a in zip(ws, spec.activations)]
    p = "inf" if spec.p == np.inf else spec.p
    return {"layers": layers, "p": p, "elu_alpha": spec.elu_alpha}


def weights_from_dict(d) -> tuple[MLPSpec, list[np.ndarray]]:
    layers = d["layers"]
    if not layers:
        raise InputError("no layers")
    ws = [np.asarray(L["data"], float).reshape(L["rows"], L["cols"]) for L in layers]
    sizes = [ws[0].shape[1]] + [W.shape[0] for W in ws]
    spec = MLPSpec(tuple(sizes), tuple(L["activation"] for L in layers), d.get("p", 2.0), d.get("elu_alpha", 1.0))
    return spec, spec.check_weights(ws)


def weights_to_json(spec: MLPSpec, weights, **kw) -> str:
    return json.dumps(weights_to_dict(spec, weights), **kw)

