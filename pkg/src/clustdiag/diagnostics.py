"""Cluster leverage, partial leverage, summary statistics and effective clusters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import spd_inverse
from .exceptions import DesignError, NotIdentifiedError
from .ols import cluster_sums

_PARTIAL_TOL = 1e-10

SUMMARY_ROWS = ("min", "q1", "median", "mean", "q3", "max", "coefvar")


def _inv_gram(design, model):
    return model.inv_gram if model is not None else spd_inverse(design.gram)


def leverage(design, model=None):
    """Cluster leverages ``L_g = tr(X_g'X_g (X'X)^-1)``.

    Built from the Gram blocks; the hat matrix is never formed.
    """
    W = _inv_gram(design, model)
    return np.einsum("gab,ba->g", design.gram_blocks, W)


def partial_leverage(design, j=None):
    """Partial leverages of column ``j``: each cluster's share of ``x_j'x_j``
    after the other regressors have been partialed out."""
    if design.absorbed and not design.absorb_nested:
        raise DesignError(
            "partial leverage is not available when absorbed fixed effects "
            "are not nested within clusters"
        )
    j = design.j if j is None else j
    xj = design.X[:, j]
    others = np.delete(design.X, j, axis=1)
    if others.shape[1]:
        coef, *_ = np.linalg.lstsq(others, xj, rcond=None)
        resid = xj - others @ coef
    else:
        resid = xj.copy()
    total = resid @ resid
    if not total > _PARTIAL_TOL * (xj @ xj):
        raise NotIdentifiedError("coefficient not identified")
    return cluster_sums(resid * resid, design.cluster_ids, design.G) / total


def scaled_variance(values, ddof=1):
    """Variance of ``values`` divided by their squared mean.

    ``ddof=1`` gives ``sum (a_g - a)^2 / ((G-1) a^2)``; ``ddof=0`` divides by
    ``G`` instead. Returns NaN when the mean is zero.
    """
    a = np.asarray(values, dtype=float)
    G = a.size
    if G - ddof <= 0:
        raise ValueError("not enough values for the scaled variance")
    mean = a.mean()
    if mean == 0:
        return np.nan
    return float(((a - mean) ** 2).sum() / ((G - ddof) * mean * mean))


@dataclass
class Summary:
    min: float
    q1: float
    median: float
    mean: float
    q3: float
    max: float
    coefvar: float

    def as_dict(self):
        return {name: getattr(self, name) for name in SUMMARY_ROWS}


def summarize(values):
    """Order statistics, mean and coefficient of variation of a per-cluster column.

    Quartiles average the two straddling order statistics when ``G p`` is an
    integer (the empirical-CDF convention used by Stata's ``summarize``).
    """
    a = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(a, [25, 50, 75], method="averaged_inverted_cdf")
    vs = scaled_variance(a) if a.size >= 2 else np.nan
    return Summary(
        min=float(a.min()),
        q1=float(q1),
        median=float(med),
        mean=float(a.mean()),
        q3=float(q3),
        max=float(a.max()),
        coefvar=float(np.sqrt(vs)) if np.isfinite(vs) else np.nan,
    )


@dataclass
class AlternativeMeans:
    """Harmonic, geometric and quadratic means and their ratios to the mean.

    Harmonic and geometric means are NaN for columns with nonpositive values.
    """

    harmonic: float
    harmonic_ratio: float
    geometric: float
    geometric_ratio: float
    quadratic: float
    quadratic_ratio: float

    def as_dict(self):
        return dict(self.__dict__)


def alternative_means(values):
    a = np.asarray(values, dtype=float)
    mean = a.mean()
    positive = bool(np.all(a > 0))
    harm = float(a.size / np.sum(1.0 / a)) if positive else np.nan
    geo = float(np.exp(np.mean(np.log(a)))) if positive else np.nan
    quad = float(np.sqrt(np.mean(a * a)))

    def ratio(x):
        return x / mean if mean != 0 else np.nan

    return AlternativeMeans(harm, ratio(harm), geo, ratio(geo), quad, ratio(quad))


@dataclass
class EffectiveClusters:
    """Effective numbers of clusters ``G / (1 + Gamma(rho))``.

    Entries for ``rho > 0`` are None when the design has fixed effects nested
    within clusters, which absorb the intra-cluster correlation.
    """

    gamma0: np.ndarray
    gamma1: np.ndarray | None
    gstar0: float
    gstar1: float | None
    gstar_rho: float | None = None
    rho: float | None = None
    fe_nested: bool = False


def check_rho(rho):
    if rho is None:
        return None
    rho = float(rho)
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must be in [0,1]")
    return rho


def effective_clusters(design, model=None, j=None, rho=None, *, ddof=1):
    """Effective number of clusters for coefficient ``j``.

    ``gamma_g(0) = w'X_g'X_g w`` and ``gamma_g(1) = (1'X_g w)^2`` with ``w``
    the ``j``-th column of ``(X'X)^-1``; intermediate ``rho`` values
    interpolate linearly between them. ``Gamma(rho)`` is the scaled variance
    of the ``gamma_g(rho)`` with the given ``ddof`` (``ddof=0`` normalizes by
    ``G``).
    """
    rho = check_rho(rho)
    j = design.j if j is None else j
    G = design.G
    w = _inv_gram(design, model)[:, j]
    gamma0 = np.einsum("gab,a,b->g", design.gram_blocks, w, w)

    def gstar(gam):
        return G / (1.0 + scaled_variance(gam, ddof))

    gstar0 = gstar(gamma0)
    if design.fe_nested:
        gstar_rho = gstar0 if rho == 0.0 else None
        return EffectiveClusters(gamma0, None, gstar0, None, gstar_rho, rho, True)
    gamma1 = (design.sum_blocks @ w) ** 2
    gstar1 = gstar(gamma1)
    gstar_rho = None
    if rho is not None:
        gstar_rho = gstar(rho * gamma1 + (1.0 - rho) * gamma0)
    return EffectiveClusters(gamma0, gamma1, gstar0, gstar1, gstar_rho, rho, False)


@dataclass
class ClusterDiagnostics:
    """Per-cluster diagnostics for one coefficient, with column summaries.

    ``Lpart`` and ``beta_del_j`` are None when delete-one-cluster quantities
    are unavailable (absorbed effects not nested within clusters).
    """

    labels: list
    Ng: np.ndarray
    L: np.ndarray
    Lpart: np.ndarray | None
    beta_del_j: np.ndarray | None

    def columns(self):
        cols = {"Ng": self.Ng.astype(float), "Leverage": self.L}
        if self.Lpart is not None:
            cols["Partial L."] = self.Lpart
        if self.beta_del_j is not None:
            cols["beta no g"] = self.beta_del_j
        return cols

    def summaries(self):
        return {name: summarize(col) for name, col in self.columns().items()}

    def alt_means(self):
        return {name: alternative_means(col) for name, col in self.columns().items()}
