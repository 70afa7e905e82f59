"""Small symmetric linear-algebra kernels shared by the fitting code."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

RANK_TOL = 1e-10


def independent_columns(gram, ref_diag=None, tol=RANK_TOL):
    """Greedy in-order selection of linearly independent columns.

    Column ``i`` is kept when its squared residual after projection on the
    previously kept columns exceeds ``tol * ref_diag[i]``. ``ref_diag``
    defaults to ``diag(gram)``; pass the diagonal of an undowndated Gram
    matrix to judge a downdated one on the original scale.

    Returns a boolean mask.
    """
    gram = np.asarray(gram, dtype=float)
    k = gram.shape[0]
    ref = np.diag(gram).copy() if ref_diag is None else np.asarray(ref_diag, float)
    keep = np.zeros(k, dtype=bool)
    idx: list[int] = []
    chol = np.zeros((0, 0))
    for i in range(k):
        if not ref[i] > 0:
            continue
        if idx:
            v = solve_triangular(chol, gram[idx, i], lower=True, check_finite=False)
            resid = gram[i, i] - v @ v
        else:
            v = np.zeros(0)
            resid = gram[i, i]
        if resid <= tol * ref[i]:
            continue
        m = len(idx)
        new = np.zeros((m + 1, m + 1))
        new[:m, :m] = chol
        new[m, :m] = v
        new[m, m] = np.sqrt(resid)
        chol = new
        idx.append(i)
        keep[i] = True
    return keep


def invsym(gram, ref_diag=None, tol=RANK_TOL):
    """Generalized inverse of a symmetric PSD matrix with zeroed dropped rows.

    Dependent columns (in order) get all-zero rows and columns in the result,
    so coefficients solved with it are exactly zero where not identified.

    Returns ``(inverse, kept_mask)``.
    """
    gram = np.asarray(gram, dtype=float)
    keep = independent_columns(gram, ref_diag, tol)
    inv = np.zeros_like(gram)
    if keep.any():
        sub = gram[np.ix_(keep, keep)]
        c = cho_factor(sub, lower=True, check_finite=False)
        inv[np.ix_(keep, keep)] = cho_solve(c, np.eye(int(keep.sum())), check_finite=False)
    return inv, keep


def spd_inverse(gram):
    """Inverse of a symmetric positive-definite matrix via Cholesky."""
    c = cho_factor(gram, lower=True, check_finite=False)
    inv = cho_solve(c, np.eye(gram.shape[0]), check_finite=False)
    return 0.5 * (inv + inv.T)


def spd_solve(gram, rhs):
    c = cho_factor(gram, lower=True, check_finite=False)
    return cho_solve(c, rhs, check_finite=False)
