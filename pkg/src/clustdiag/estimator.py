"""Scikit-learn style front end for the cluster diagnostics."""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .bootstrap import BootstrapConfig, wcr_ci, wcr_pvalue
from .data import prepare_design
from .diagnostics import ClusterDiagnostics, check_rho, effective_clusters, leverage, partial_leverage
from .exceptions import ClusterDiagnosticWarning, NestingWarning, NotIdentifiedError
from .jackknife import jackknife
from .ols import cv1, fit_ols


class ClusterSummary(BaseEstimator):
    """OLS with cluster-robust inference and cluster-level diagnostics for one
    coefficient.

    Parameters
    ----------
    coef : int
        Column of ``X`` holding the coefficient of interest.
    jackknife : bool
        Also report CV3J, the jackknife variance centred at the mean of the
        delete-one-cluster estimates.
    rho : float or None
        Intra-cluster correlation for the extra effective-cluster count.
    level : float
        Confidence level for intervals.
    gstar_ddof : int
        1 normalizes the scaled variance behind ``G*`` by ``G - 1``, 0 by ``G``.
    wcr : bool
        Run the wild cluster restricted bootstrap (p-value and interval).
    boot_reps, seed : int
        Bootstrap replications and seed.
    beta_0j : float
        Null value for t-tests and the bootstrap.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        OLS coefficients in the input column order; collinear columns get 0.
    cv1_, cv3_, cv3j_ : VarianceEstimate or None
    leverage_, partial_leverage_, beta_del_ : ndarray of shape (n_clusters,)
        ``partial_leverage_`` and ``beta_del_`` are None when absorbed fixed
        effects are not nested within clusters.
    effective_clusters_ : EffectiveClusters
    diagnostics_ : ClusterDiagnostics
    wcr_ : BootstrapResult or None
    warnings_ : list of str
    """

    def __init__(self, coef=0, jackknife=False, rho=None, level=0.95, gstar_ddof=1,
                 wcr=False, boot_reps=999, seed=None, beta_0j=0.0):
        self.coef = coef
        self.jackknife = jackknife
        self.rho = rho
        self.level = level
        self.gstar_ddof = gstar_ddof
        self.wcr = wcr
        self.boot_reps = boot_reps
        self.seed = seed
        self.beta_0j = beta_0j

    def fit(self, X, y, clusters, absorb=None, column_names=None):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        clusters = np.asarray(clusters)
        if clusters.shape[0] != X.shape[0]:
            raise ValueError("clusters must have one label per row of X")
        if not 0 <= self.coef < X.shape[1]:
            raise ValueError(f"coef={self.coef} is out of range for {X.shape[1]} columns")
        if column_names is None:
            column_names = [f"x{i}" for i in range(X.shape[1])]
        elif len(column_names) != X.shape[1]:
            raise ValueError("column_names must name every column of X")
        design = prepare_design(y, X, clusters, j=self.coef, column_names=column_names,
                                absorb=absorb)
        return self._fit_prepared(design, list(column_names))

    def fit_design(self, design):
        """Fit on an already prepared design."""
        return self._fit_prepared(design, list(design.column_names))

    def _fit_prepared(self, design, feature_names):
        self.feature_names_ = feature_names
        self.n_features_in_ = len(feature_names)
        check_rho(self.rho)
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        self.design_ = design
        self.warnings_ = []
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            self._fit(design)
        for w in caught:
            self.warnings_.append(str(w.message))
            warnings.warn(w.message, w.category, stacklevel=2)
        return self

    def _fit(self, design):
        if design.dropped_columns:
            warnings.warn(
                f"omitted collinear columns: {', '.join(design.dropped_columns)}",
                ClusterDiagnosticWarning,
            )
        model = fit_ols(design)
        self.model_ = model
        self.n_clusters_ = design.G
        self.coef_ = self._full_coef(design, model.beta_hat)
        self.cv1_ = cv1(model, level=self.level, beta_0j=self.beta_0j)

        self.leverage_ = leverage(design, model)
        self.partial_leverage_ = self.beta_del_ = None
        self.cv3_ = self.cv3j_ = self.jackknife_ = None
        if design.absorbed and not design.absorb_nested:
            warnings.warn(
                "absorbed fixed effects are not nested within clusters; partial "
                "leverage, delete-one-cluster estimates, CV3 and CV3J are not reported",
                NestingWarning,
            )
        else:
            try:
                self.partial_leverage_ = partial_leverage(design)
            except NotIdentifiedError:
                pass
            jk = jackknife(design, model, cv3j=self.jackknife, level=self.level,
                           beta_0j=self.beta_0j)
            self.jackknife_ = jk
            self.beta_del_ = jk.beta_del[:, design.j]
            self.cv3_ = jk.cv3
            self.cv3j_ = jk.cv3j

        self.effective_clusters_ = effective_clusters(
            design, model, rho=self.rho, ddof=self.gstar_ddof
        )
        self.diagnostics_ = ClusterDiagnostics(
            labels=design.cluster_labels,
            Ng=design.Ng,
            L=self.leverage_,
            Lpart=self.partial_leverage_,
            beta_del_j=self.beta_del_,
        )

        self.wcr_ = None
        if self.wcr:
            config = BootstrapConfig(B=self.boot_reps, seed=self.seed, beta_0j=self.beta_0j,
                                     level=self.level)
            self.wcr_ = wcr_pvalue(design, model, config)
            self.wcr_.ci = wcr_ci(design, model, config)

    def _full_coef(self, design, beta):
        """Coefficients in input column order, 0 for omitted columns."""
        fitted = dict(zip(design.column_names, beta))
        return np.array([fitted.get(n, 0.0) for n in self.feature_names_])

    @property
    def coef_name_(self):
        check_is_fitted(self, "model_")
        return self.design_.column_names[self.design_.j]

    def predict(self, X):
        """Linear predictor from the included columns (absorbed effects excluded)."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        return X @ self.coef_
