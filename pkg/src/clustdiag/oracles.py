"""Closed-form leverage and influence results for simple designs.

These are independent checks on the general-purpose routines in
:mod:`clustdiag.diagnostics` and :mod:`clustdiag.jackknife`. Within-cluster
variances and covariances use the ``1/N_g`` convention, which the exact
identities require.

Design kinds
------------
``mean_only``
    Intercept only.
``single_regressor_const``
    One regressor plus a constant.
``single_regressor_fe``
    One regressor with cluster fixed effects partialed out.
``treatment_const``
    A treatment dummy plus a constant.
``treatment_fe``
    An individually assigned treatment dummy with cluster fixed effects.
``cluster_level_treatment``
    A treatment dummy constant within clusters, plus a constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import DesignError

KINDS = (
    "mean_only",
    "single_regressor_const",
    "single_regressor_fe",
    "treatment_const",
    "treatment_fe",
    "cluster_level_treatment",
)

_TREATMENT_KINDS = ("treatment_const", "treatment_fe", "cluster_level_treatment")


@dataclass
class ExampleDesign:
    """Per-cluster moments of a simple design.

    For treatment kinds the regressor is the dummy, so ``xbar_g`` is the
    treated share ``dbar_g``.
    """

    kind: str
    Ng: np.ndarray
    xbar_g: np.ndarray | None = None
    s2x_g: np.ndarray | None = None
    ybar_g: np.ndarray | None = None
    sxy_g: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}")
        self.Ng = np.asarray(self.Ng, dtype=float)
        for name in ("xbar_g", "s2x_g", "ybar_g", "sxy_g"):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, np.asarray(val, dtype=float))
        if self.s2x_g is not None and np.any(self.s2x_g < 0):
            raise ValueError("within-cluster variances must be nonnegative")
        if self.kind in _TREATMENT_KINDS and self.xbar_g is not None:
            if np.any((self.xbar_g < 0) | (self.xbar_g > 1)):
                raise ValueError("treated shares must lie in [0, 1]")
            if self.s2x_g is None:
                self.s2x_g = self.xbar_g * (1.0 - self.xbar_g)

    @classmethod
    def from_data(cls, kind, clusters, x=None, y=None):
        """Compute the per-cluster moments from raw observations."""
        codes, _ = pd.factorize(np.asarray(clusters), sort=False)
        G = codes.max() + 1
        Ng = np.bincount(codes, minlength=G).astype(float)

        def cmean(v):
            return np.bincount(codes, weights=v, minlength=G) / Ng

        xbar = s2x = ybar = sxy = None
        if y is not None:
            y = np.asarray(y, dtype=float)
            ybar = cmean(y)
        if x is not None:
            x = np.asarray(x, dtype=float)
            xbar = cmean(x)
            xd = x - xbar[codes]
            s2x = cmean(xd * xd)
            if y is not None:
                sxy = cmean(xd * (y - ybar[codes]))
        return cls(kind, Ng, xbar, s2x, ybar, sxy)

    @property
    def N(self) -> float:
        return float(self.Ng.sum())

    @property
    def xbar(self) -> float:
        return float(self.Ng @ self.xbar_g / self.N)

    @property
    def s2x(self) -> float:
        """Full-sample variance of x (1/N), rebuilt from the cluster moments."""
        return float(self.Ng @ (self.s2x_g + (self.xbar_g - self.xbar) ** 2) / self.N)

    @property
    def dbar(self) -> float:
        return self.xbar


def _nonzero(value, what):
    if not value > 0:
        raise DesignError(f"degenerate design: {what} is zero")
    return value


def _dbar(design):
    d = design.dbar
    if not 0.0 < d < 1.0:
        raise DesignError("degenerate design: treated share must be strictly between 0 and 1")
    return d


def oracle_leverage(design):
    """Closed-form cluster leverages ``L_g``."""
    kind, Ng, N = design.kind, design.Ng, design.N
    if kind == "mean_only":
        return Ng / N
    if kind == "single_regressor_const":
        s2 = _nonzero(design.s2x, "variance of x")
        return Ng / (N * s2) * (s2 + design.s2x_g + (design.xbar_g - design.xbar) ** 2)
    if kind in ("single_regressor_fe", "treatment_fe"):
        within = Ng * design.s2x_g
        return within / _nonzero(within.sum(), "within-cluster variation of x")
    if kind == "treatment_const":
        d, dg = _dbar(design), design.xbar_g
        return Ng / N * (dg / d + (1.0 - dg) / (1.0 - d))
    # cluster_level_treatment
    d, dg = _dbar(design), design.xbar_g
    if not np.all((dg == 0) | (dg == 1)):
        raise DesignError("cluster-level treatment needs shares of exactly 0 or 1")
    return np.where(dg == 1, Ng / N / d, Ng / N / (1.0 - d))


def oracle_partial_leverage(design):
    """Closed-form partial leverages for the (non-constant) regressor."""
    kind, Ng, N = design.kind, design.Ng, design.N
    if kind == "mean_only":
        return Ng / N
    if kind == "single_regressor_const":
        s2 = _nonzero(design.s2x, "variance of x")
        return Ng * (design.s2x_g + (design.xbar_g - design.xbar) ** 2) / (N * s2)
    if kind in ("single_regressor_fe", "treatment_fe"):
        return oracle_leverage(design)
    if kind == "treatment_const":
        d, dg = _dbar(design), design.xbar_g
        return Ng / N * (dg / d + (d - dg) / (1.0 - d))
    d, dg = _dbar(design), design.xbar_g
    if not np.all((dg == 0) | (dg == 1)):
        raise DesignError("cluster-level treatment needs shares of exactly 0 or 1")
    # treated clusters: (1 - d)/d, the value the general treatment formula
    # takes at dbar_g = 1; control clusters: d/(1 - d)
    return np.where(dg == 1, Ng / N * (1.0 - d) / d, Ng / N * d / (1.0 - d))


def _require_influence_kind(design):
    if design.kind not in ("mean_only", "single_regressor_fe"):
        raise ValueError("influence identities exist only for mean_only and single_regressor_fe")


def oracle_cluster_estimates(design):
    """Estimates from each cluster alone: ``ybar_g`` or ``s_xy,g / s2_x,g``."""
    _require_influence_kind(design)
    if design.kind == "mean_only":
        return design.ybar_g.copy()
    return design.sxy_g / design.s2x_g


def oracle_beta_hat(design):
    """Full-sample estimate from the cluster moments."""
    _require_influence_kind(design)
    if design.kind == "mean_only":
        return float(design.Ng @ design.ybar_g / design.N)
    return float((design.Ng @ design.sxy_g) / (design.Ng @ design.s2x_g))


def oracle_delete_one(design):
    """Delete-one-cluster estimates as leverage-weighted averages of the others."""
    _require_influence_kind(design)
    L = oracle_leverage(design)
    b = oracle_cluster_estimates(design)
    total = L @ b
    return (total - L * b) / (L.sum() - L)


def oracle_influence_identity(design, beta_hat_g, beta_del, beta_hat=None):
    """Residuals of ``b^(g) - b = L_g (b^(g) - b_g)``; zero when the identity holds."""
    _require_influence_kind(design)
    if beta_hat is None:
        beta_hat = oracle_beta_hat(design)
    L = oracle_leverage(design)
    beta_hat_g = np.asarray(beta_hat_g, dtype=float)
    beta_del = np.asarray(beta_del, dtype=float)
    return beta_del - beta_hat - L * (beta_del - beta_hat_g)
