"""Shared pieces for assembling the reformulation LPs."""

import numpy as np

from .errors import UnsupportedNorm
from .solver.lp import LPBuilder


def neg(terms):
    return [(i, -np.asarray(c, dtype=float)) for i, c in terms]


def add_norm_le(lp: LPBuilder, comps, bound, q):
    """Add ``||v||_q <= bound`` for an affine vector ``v``.

    Parameters
    ----------
    comps : list of (terms, const)
        Component ``k`` of ``v`` is ``sum(terms_k) + const_k``.
    bound : list of terms
        Affine right-hand side without constant.
    q : float
        1 or inf; the 2-norm is not LP-representable.
    """
    if q == np.inf:
        for terms, const in comps:
            lp.add_le(terms + neg(bound), -const)
            lp.add_le(neg(terms) + neg(bound), const)
    elif q == 1.0:
        t = lp.add_var(None, (len(comps),))
        for k, (terms, const) in enumerate(comps):
            lp.add_le(terms + [(t[k], -1.0)], -const)
            lp.add_le(neg(terms) + [(t[k], -1.0)], const)
        lp.add_le([(t, 1.0)] + neg(bound), 0.0)
    else:
        raise UnsupportedNorm("dual-norm constraints are linear only for p in {1, inf}")


def add_abs_le(lp: LPBuilder, terms, const, bound):
    """Add ``|sum(terms) + const| <= bound``."""
    lp.add_le(terms + neg(bound), -const)
    lp.add_le(neg(terms) + neg(bound), const)
