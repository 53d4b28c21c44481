"""Vector norms, their duals, subgradients and ball projections for p in {1, 2, inf}."""

import numpy as np

from ..errors import UnsupportedNorm

__all__ = [
    "parse_p",
    "conjugate_exponent",
    "pnorm",
    "dual_norm",
    "norm_subgradient",
    "project_l1_ball",
    "project_ball",
]


def parse_p(p) -> float:
    """Normalize a norm exponent given as a number or string to 1.0, 2.0 or inf."""
    if isinstance(p, str):
        key = p.strip().lower()
        table = {"1": 1.0, "2": 2.0, "inf": np.inf, "infinity": np.inf, "∞": np.inf}
        if key not in table:
            raise UnsupportedNorm(f"unsupported norm {p!r}")
        return table[key]
    p = float(p)
    if p not in (1.0, 2.0, np.inf):
        raise UnsupportedNorm(f"unsupported norm p={p}")
    return p


def conjugate_exponent(p) -> float:
    p = parse_p(p)
    return {1.0: np.inf, 2.0: 2.0, np.inf: 1.0}[p]


def pnorm(v, p) -> float:
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        return 0.0
    p = parse_p(p)
    if p == 1.0:
        return float(np.abs(v).sum())
    if p == 2.0:
        return float(np.linalg.norm(v))
    return float(np.abs(v).max())


def dual_norm(p, v) -> float:
    """Norm dual to the ``p``-norm, i.e. ``||v||_q`` with ``1/p + 1/q = 1``."""
    return pnorm(v, conjugate_exponent(p))


def norm_subgradient(v, p) -> np.ndarray:
    """One subgradient of ``x -> ||x||_p`` at ``v`` (zero at the origin)."""
    v = np.asarray(v, dtype=float).ravel()
    p = parse_p(p)
    if p == 1.0:
        return np.sign(v)
    if p == 2.0:
        n = np.linalg.norm(v)
        return v / n if n > 0 else np.zeros_like(v)
    g = np.zeros_like(v)
    if v.size:
        k = int(np.argmax(np.abs(v)))
        g[k] = np.sign(v[k])
    return g


def project_l1_ball(v, radius: float) -> np.ndarray:
    """Euclidean projection onto ``{x : ||x||_1 <= radius}`` by sorting."""
    v = np.asarray(v, dtype=float)
    if radius <= 0:
        return np.zeros_like(v)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a.ravel())[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = np.flatnonzero(u * k > css - radius)[-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def project_ball(v, radius: float, p) -> np.ndarray:
    """Euclidean projection onto the ``p``-norm ball of the given radius."""
    v = np.asarray(v, dtype=float)
    p = parse_p(p)
    radius = max(float(radius), 0.0)
    if p == 1.0:
        return project_l1_ball(v, radius)
    if p == 2.0:
        n = np.linalg.norm(v)
        return v.copy() if n <= radius else v * (radius / n)
    return np.clip(v, -radius, radius)
