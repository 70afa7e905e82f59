"""Student t distribution helpers.

The CDF is evaluated through the regularized incomplete beta function,
``P(|T| > t) = I_x(dof/2, 1/2)`` with ``x = dof / (dof + t**2)``, which keeps
full relative accuracy in the tails. Quantiles are found by bisection on the
CDF.
"""

from __future__ import annotations

import numpy as np
from scipy.special import betainc


def _check_dof(dof):
    dof = np.asarray(dof, dtype=float)
    if np.any(~(dof > 0)):
        raise ValueError("degrees of freedom must be positive")
    return dof


def t_two_sided_pvalue(t, dof):
    """Two-sided p-value ``P(|T| >= |t|)`` for ``T ~ t(dof)``.

    Accepts scalars or arrays. Infinite ``|t|`` gives 0 and ``t = 0`` gives 1.
    """
    dof = _check_dof(dof)
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        x = dof / (dof + t * t)
    x = np.where(np.isinf(t), 0.0, x)
    p = betainc(dof / 2.0, 0.5, x)
    p = np.where(np.isnan(t), np.nan, p)
    return float(p) if p.ndim == 0 else p


def t_cdf(t, dof):
    """Cumulative distribution function of the t distribution."""
    t = np.asarray(t, dtype=float)
    half_tail = 0.5 * np.asarray(t_two_sided_pvalue(t, dof))
    out = np.where(t >= 0, 1.0 - half_tail, half_tail)
    return float(out) if out.ndim == 0 else out


def t_ppf(q, dof, *, tol=1e-13, max_iter=400):
    """Quantile function of the t distribution, by bisection on :func:`t_cdf`."""
    q = float(q)
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie strictly between 0 and 1")
    _check_dof(dof)
    if q == 0.5:
        return 0.0
    # solve in the upper tail and reflect
    upper = q > 0.5
    target = q if upper else 1.0 - q
    lo, hi = 0.0, 1.0
    while t_cdf(hi, dof) < target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            return np.inf if upper else -np.inf
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, dof) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    root = 0.5 * (lo + hi)
    return root if upper else -root


def t_critical(level, dof):
    """Two-sided critical value ``c`` with ``P(|T| <= c) = level``."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    return t_ppf(0.5 + level / 2.0, dof)
