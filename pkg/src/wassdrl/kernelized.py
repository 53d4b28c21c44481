"""Kernel hypotheses, growth functions and kernelized robust training.

A kernel hypothesis is ``h(x) = sum_i beta_i k(x, x_i)``. Writing
``alpha = K^{1/2} beta`` turns the kernelized problems into linear ones with
feature matrix ``K^{1/2}`` and the Euclidean metric, so the linear trainers
do the work; ``beta`` is recovered with a pseudo-inverse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist

from .classification import ClassificationProblem, train_lipschitz_classification
from .core import Dataset, FitResult, LossSpec, Task, TransportCost
from .errors import DimensionMismatch, InputError, RadiusViolation
from .regression import RegressionProblem, train_lipschitz_regression
from .solver.linalg import sym_eig_sqrt
from .solver.options import SolveOptions

__all__ = [
    "KernelKind",
    "KernelSpec",
    "KernelHypothesis",
    "kernel_eval",
    "kernel_matrix",
    "growth_function",
    "lifted_radius",
    "train_kernel_regression",
    "train_kernel_classification",
    "kernel_predict",
]


class KernelKind(str, Enum):
    LINEAR = "linear"
    GAUSSIAN = "gaussian"
    LAPLACIAN = "laplacian"
    POLYNOMIAL = "polynomial"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel definition.

    * linear: ``<x, x'>``
    * gaussian: ``exp(-gamma ||x - x'||_2^2)``
    * laplacian: ``exp(-gamma ||x - x'||_1)``
    * polynomial: ``(gamma <x, x'> + 1)^degree`` on inputs with ``||x||_2 <= R``

    ``R = None`` for a polynomial kernel means "set from the training inputs"
    (see :meth:`with_radius_from`).
    """

    kind: KernelKind = KernelKind.LINEAR
    gamma: float = 1.0
    degree: int = 2
    R: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.kind is not KernelKind.LINEAR and not self.gamma > 0:
            raise InputError("kernel gamma must be positive")
        if self.kind is KernelKind.POLYNOMIAL:
            if int(self.degree) != self.degree or self.degree < 1:
                raise InputError("polynomial degree must be a positive integer")
            object.__setattr__(self, "degree", int(self.degree))
            if self.R is not None and not self.R > 0:
                raise InputError("polynomial radius R must be positive")

    @classmethod
    def linear(cls):
        return cls(KernelKind.LINEAR)

    @classmethod
    def gaussian(cls, gamma):
        return cls(KernelKind.GAUSSIAN, gamma)

    @classmethod
    def laplacian(cls, gamma):
        return cls(KernelKind.LAPLACIAN, gamma)

    @classmethod
    def polynomial(cls, gamma, degree, R=None):
        return cls(KernelKind.POLYNOMIAL, gamma, degree, R)

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """Parse ``"linear"``, ``"gaussian:0.5"``, ``"laplacian:1"`` or
        ``"polynomial:GAMMA:DEGREE[:R]"``."""
        parts = text.strip().lower().split(":")
        try:
            kind = KernelKind(parts[0])
        except ValueError:
            raise InputError(f"unknown kernel {parts[0]!r}") from None
        try:
            nums = [float(t) for t in parts[1:]]
        except ValueError:
            raise InputError(f"malformed kernel spec {text!r}") from None
        if kind is KernelKind.LINEAR:
            return cls.linear()
        if kind is KernelKind.POLYNOMIAL:
            if len(nums) < 2:
                raise InputError("polynomial kernel needs gamma and degree")
            return cls.polynomial(nums[0], nums[1], nums[2] if len(nums) > 2 else None)
        if len(nums) != 1:
            raise InputError(f"{kind.value} kernel needs gamma")
        return cls(kind, nums[0])

    def with_radius_from(self, inputs) -> "KernelSpec":
        """Fill in ``R`` as the largest input 2-norm times ``1 + 1e-9``."""
        if self.kind is not KernelKind.POLYNOMIAL or self.R is not None:
            return self
        r = float(np.max(np.linalg.norm(np.atleast_2d(inputs), axis=1)))
        return KernelSpec(self.kind, self.gamma, self.degree, max(r, 1e-12) * (1 + 1e-9))

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kind is not KernelKind.LINEAR:
            out["gamma"] = self.gamma
        if self.kind is KernelKind.POLYNOMIAL:
            out["degree"] = self.degree
            out["R"] = self.R
        return out

    @classmethod
    def from_dict(cls, d) -> "KernelSpec":
        return cls(KernelKind(d["kind"]), d.get("gamma", 1.0), d.get("degree", 2), d.get("R"))


def _check_radius(spec: KernelSpec, *arrays):
    if spec.kind is not KernelKind.POLYNOMIAL or spec.R is None:
        return
    for a in arrays:
        norms = np.linalg.norm(np.atleast_2d(a), axis=1)
        if np.any(norms > spec.R):
            raise RadiusViolation(f"input norm {norms.max():.6g} exceeds R = {spec.R:.6g}")


def _cross(spec: KernelSpec, A, B) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, float))
    B = np.atleast_2d(np.asarray(B, float))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch("kernel arguments have different dimensions")
    _check_radius(spec, A, B)
    k = spec.kind
    if k is KernelKind.LINEAR:
        return A @ B.T
    if k is KernelKind.GAUSSIAN:
        return np.exp(-spec.gamma * cdist(A, B, "sqeuclidean"))
    if k is KernelKind.LAPLACIAN:
        return np.exp(-spec.gamma * cdist(A, B, "cityblock"))
    return (spec.gamma * (A @ B.T) + 1.0) ** spec.degree


def kernel_eval(spec: KernelSpec, x1, x2) -> float:
    """``k(x1, x2)``.

    Raises
    ------
    RadiusViolation
        Polynomial kernel with an input outside the radius ``R``.
    """
    return float(_cross(spec, np.ravel(x1)[None, :], np.ravel(x2)[None, :])[0, 0])


def kernel_matrix(data, spec: KernelSpec, other=None) -> np.ndarray:
    """Kernel matrix of the training inputs (or the cross matrix with ``other``)."""
    X = data.inputs if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, float))
    if other is None:
        K = _cross(spec, X, X)
        return 0.5 * (K + K.T)
    Y = other.inputs if isinstance(other, Dataset) else other
    return _cross(spec, X, Y)


def growth_function(spec: KernelSpec, z: float, n: int | None = None) -> float:
    """Concave growth function ``g`` with ``||phi(x) - phi(x')|| <= g(||x - x'||_2)``.

    ``n`` (input dimension) is required for the Laplacian kernel, ``R`` for
    the polynomial kernel.
    """
    if z < 0:
        raise InputError("growth functions are defined for z >= 0")
    k = spec.kind
    if k is KernelKind.LINEAR:
        return float(z)
    if k is KernelKind.GAUSSIAN:
        return max(np.sqrt(2 * spec.gamma), 1.0) * z
    if k is KernelKind.LAPLACIAN:
        if n is None:
            raise InputError("the Laplacian growth function needs the input dimension n")
        knee = spec.gamma * np.sqrt(n) / 2
        if z <= knee:
            return float(np.sqrt(2 * spec.gamma * z * np.sqrt(n)))
        return float(z + knee)
    if spec.R is None:
        raise InputError("the polynomial growth function needs the radius R")
    g, d, R = spec.gamma, spec.degree, spec.R
    if d % 2 == 0:
        c = np.sqrt(2 * (g * R * R + 1) ** d) / (2 * R)
    else:
        c = np.sqrt(2 * (g * R * R + 1) ** d - 2 * (1 - g * R * R) ** d) / (2 * R)
    # The chord constant above only controls antipodal pairs. Nearby pairs
    # are governed by the feature-map Jacobian, whose norm on the ball peaks
    # at ||x|| = R along x.
    jac = np.sqrt(g * d * (g * R * R + 1) ** (d - 2) * (g * d * R * R + 1))
    return max(c, jac, 1.0) * z


def lifted_radius(rho: float, spec: KernelSpec, task, n: int | None = None) -> float:
    """Radius of the feature-space ball that contains the lifted input-space ball."""
    g = growth_function(spec, rho, n)
    return np.sqrt(2.0) * g if Task.parse(task) is Task.REGRESSION else g


@dataclass(frozen=True, eq=False)
class KernelHypothesis:
    """``h(x) = sum_i beta_i k(x, anchor_i)``."""

    beta: np.ndarray
    anchors: np.ndarray
    kernel: KernelSpec

    def __post_init__(self):
        beta = np.asarray(self.beta, float).ravel()
        anchors = np.atleast_2d(np.asarray(self.anchors, float))
        if beta.size != anchors.shape[0]:
            raise DimensionMismatch("one coefficient per anchor is required")
        if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(anchors))):
            raise InputError("kernel hypothesis must be finite")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "anchors", anchors)

    def __call__(self, x):
        return kernel_predict(self, x)

    def to_dict(self) -> dict:
        return {"type": "kernel", "kernel": self.kernel.to_dict(), "beta": self.beta.tolist(),
                "anchors": self.anchors.tolist()}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d) -> "KernelHypothesis":
        return cls(np.asarray(d["beta"], float), np.asarray(d["anchors"], float), KernelSpec.from_dict(d["kernel"]))


def kernel_predict(h: KernelHypothesis, x):
    """Evaluate ``h`` at one input or at the rows of a matrix."""
    x = np.asarray(x, float)
    if x.shape[-1] != h.anchors.shape[1]:
        raise DimensionMismatch(f"input has {x.shape[-1]} features, anchors have {h.anchors.shape[1]}")
    out = kernel_matrix(np.atleast_2d(x), h.kernel, h.anchors) @ h.beta
    return float(out[0]) if x.ndim == 1 else out


def _lift(dataset: Dataset, spec: KernelSpec):
    spec = spec.with_radius_from(dataset.inputs)
    K = kernel_matrix(dataset, spec)
    S = sym_eig_sqrt(K)
    return spec, S


def train_kernel_regression(dataset: Dataset, spec: KernelSpec, loss: LossSpec, rho: float,
                            *, opts: SolveOptions | None = None) -> FitResult:
    """Minimize ``mean L((K beta)_i - y_i) + rho lip(L) ||(K^{1/2} beta, 1)||_2``.

    ``rho`` is the feature-space radius; use :func:`lifted_radius` to
    convert an input-space radius.
    """
    spec, S = _lift(dataset, spec)
    lifted = Dataset(S, dataset.outputs, Task.REGRESSION)
    res = train_lipschitz_regression(RegressionProblem(lifted, loss, None, TransportCost.joint(2), rho), opts=opts)
    beta = np.linalg.pinv(S, rcond=1e-10, hermitian=True) @ res.hypothesis.w
    h = KernelHypothesis(beta, dataset.inputs, spec)
    return FitResult(h, res.value, None, "composite", res.converged)


def train_kernel_classification(dataset: Dataset, spec: KernelSpec, loss: LossSpec, rho: float,
                                kappa: float = np.inf, *, opts: SolveOptions | None = None) -> FitResult:
    """Minimize ``lam rho + mean max{L(y_i (K beta)_i), L(-y_i (K beta)_i) - kappa lam}``
    subject to ``lam >= lip(L) ||K^{1/2} beta||_2``."""
    spec, S = _lift(dataset, spec)
    lifted = Dataset(S, dataset.outputs, Task.CLASSIFICATION)
    prob = ClassificationProblem(lifted, loss, None, TransportCost.classification(2, kappa), rho)
    res = train_lipschitz_classification(prob, opts=opts)
    beta = np.linalg.pinv(S, rcond=1e-10, hermitian=True) @ res.hypothesis.w
    h = KernelHypothesis(beta, dataset.inputs, spec)
    return FitResult(h, res.value, res.lam, "composite", res.converged)
