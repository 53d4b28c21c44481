import numpy as np

from ..errors import IndefiniteBeyondTolerance, NotSymmetric

__all__ = ["sym_eig_sqrt"]

JITTER = 1e-10


def sym_eig_sqrt(K, *, jitter: float = JITTER) -> np.ndarray:
    """Principal square root of a symmetric positive semidefinite matrix.

    Eigenvalues in ``[-1e-8 * ||K||, 0)`` are treated as round-off and
    clipped to zero; eigenvalues below ``jitter * ||K||`` are also zeroed.

    Parameters
    ----------
    K : (N, N) array_like
    jitter : float
        Relative eigenvalue floor.

    Returns
    -------
    ndarray
        Symmetric PSD matrix ``S`` with ``S @ S ~= K``.

    Raises
    ------
    NotSymmetric
        If ``K`` is not square or not symmetric to ``1e-10`` relative.
    IndefiniteBeyondTolerance
        If an eigenvalue is below ``-1e-8 * ||K||``.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise NotSymmetric("matrix must be square")
    scale = max(np.abs(K).max(initial=0.0), 1e-300)
    if np.abs(K - K.T).max(initial=0.0) > 1e-10 * scale:
        raise NotSymmetric("matrix is not symmetric")
    K = 0.5 * (K + K.T)
    vals, vecs = np.linalg.eigh(K)
    norm = max(np.abs(vals).max(initial=0.0), 1e-300)
    if vals.size and vals.min() < -1e-8 * norm:
        raise IndefiniteBeyondTolerance(f"eigenvalue {vals.min():.3e} is negative")
    vals = np.where(vals > jitter * norm, vals, 0.0)
    S = (vecs * np.sqrt(vals)) @ vecs.T
    return 0.5 * (S + S.T)
