"""OLS from per-cluster blocks, empirical scores, CV1 and t(G-1) inference."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import LinAlgError

from ._linalg import spd_inverse
from .exceptions import DesignError
from .tdist import t_critical, t_two_sided_pvalue

# residual vectors this small relative to y are an exact fit
_EXACT_FIT_TOL = 1e-12


@dataclass(frozen=True)
class FittedModel:
    """OLS fit of a :class:`~clustdiag.data.PreparedDesign`.

    ``scores`` has one row per cluster, ``s_g = X_g' u_g``. ``df_k`` is the
    coefficient count used for the CV1 correction; it adds any absorbed fixed
    effects to ``k``.
    """

    beta_hat: np.ndarray
    inv_gram: np.ndarray
    residuals: np.ndarray
    scores: np.ndarray
    N: int
    G: int
    k: int
    j: int
    df_k: int


class TInference(NamedTuple):
    t: float
    p: float
    ci: tuple


def cluster_sums(values, cluster_ids, G):
    """Per-cluster column sums of an (N,) or (N, m) array, fixed summation order."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.bincount(cluster_ids, weights=values, minlength=G)
    out = np.empty((G, values.shape[1]))
    for c in range(values.shape[1]):
        out[:, c] = np.bincount(cluster_ids, weights=values[:, c], minlength=G)
    return out


def fit_ols(design):
    """Fit OLS from the accumulated Gram and moment blocks."""
    gram = design.gram
    try:
        inv_gram = spd_inverse(gram)
    except LinAlgError as exc:
        raise DesignError("X'X is singular; run the rank check first") from exc
    beta = inv_gram @ design.moment
    resid = design.y - design.X @ beta
    scale = np.max(np.abs(design.y), initial=0.0)
    if np.max(np.abs(resid), initial=0.0) <= _EXACT_FIT_TOL * scale:
        resid = np.zeros_like(resid)
    scores = cluster_sums(design.X * resid[:, None], design.cluster_ids, design.G)
    return FittedModel(
        beta_hat=beta,
        inv_gram=inv_gram,
        residuals=resid,
        scores=scores,
        N=design.N,
        G=design.G,
        k=design.k,
        j=design.j,
        df_k=design.k + design.n_absorbed,
    )


def t_inference(beta_j, se_j, beta_0j=0.0, dof=1, level=0.95, *, scale=None):
    """t-statistic, two-sided p-value and confidence interval under t(dof).

    A zero standard error is degenerate rather than an error: ``t`` is 0 when
    the estimate equals the null value (to ``1e-12`` relative to ``scale``)
    and infinite otherwise.
    """
    if dof < 1:
        raise ValueError("dof must be at least 1")
    if se_j < 0 or not np.isfinite(se_j):
        raise ValueError("standard error must be finite and nonnegative")
    diff = beta_j - beta_0j
    if se_j == 0:
        ref = max(abs(beta_j), abs(beta_0j)) if scale is None else scale
        t = 0.0 if abs(diff) <= 1e-12 * ref else float(np.copysign(np.inf, diff))
    else:
        t = diff / se_j
    p = t_two_sided_pvalue(t, dof)
    half = t_critical(level, dof) * se_j
    return TInference(t=t, p=p, ci=(beta_j - half, beta_j + half))


@dataclass
class VarianceEstimate:
    """A k x k variance matrix with inference for coefficient ``j``."""

    kind: str
    matrix: np.ndarray
    beta_hat: np.ndarray
    j: int
    dof: int
    level: float = 0.95
    beta_0j: float = 0.0
    se_j: float = field(init=False)
    t_j: float = field(init=False)
    p_j: float = field(init=False)
    ci_j: tuple = field(init=False)

    def __post_init__(self):
        self.matrix = 0.5 * (self.matrix + self.matrix.T)
        self.se_j = float(np.sqrt(max(self.matrix[self.j, self.j], 0.0)))
        scale = float(np.max(np.abs(self.beta_hat), initial=0.0))
        res = t_inference(
            float(self.beta_hat[self.j]), self.se_j, self.beta_0j, self.dof,
            self.level, scale=scale,
        )
        self.t_j, self.p_j, self.ci_j = res.t, res.p, res.ci

    @property
    def se(self):
        return np.sqrt(np.clip(np.diag(self.matrix), 0.0, None))


def cv1(model, *, level=0.95, beta_0j=0.0):
    """CV1 cluster-robust variance estimate with the G(N-1)/((G-1)(N-k)) factor."""
    G, N = model.G, model.N
    if G < 2:
        raise DesignError("CV1 needs at least two clusters")
    if N <= model.df_k:
        raise DesignError("CV1 needs N greater than the number of coefficients")
    factor = G * (N - 1) / ((G - 1) * (N - model.df_k))
    half = model.inv_gram @ model.scores.T
    matrix = factor * (half @ half.T)
    return VarianceEstimate(
        "CV1", matrix, model.beta_hat, model.j, G - 1, level=level, beta_0j=beta_0j
    )
