"""Wild cluster restricted (WCR) bootstrap for one coefficient.

The null ``beta_j = beta_0j`` is imposed by regressing ``y - beta_0j x_j`` on
the other columns. Bootstrap samples flip the sign of each cluster's
restricted residuals with Rademacher weights and the CV1 t-statistic is
recomputed for every sample.

Because ``X`` is fixed, a bootstrap t-statistic is a closed-form function of
the weight vector ``v``: with restricted scores ``s_h``, ``w`` the ``j``-th
column of ``(X'X)^-1`` and ``r_g = (X'X)^-1 X_g'X_g w``, the numerator is
``sum_h (w's_h) v_h`` and the score of cluster ``g`` projected on ``w`` is
``(w's_g) v_g - sum_h (r_g's_h) v_h``. Each batch of draws therefore costs
``O(G^2 B)`` after an ``O(Nk)`` pass over the data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ._linalg import spd_inverse
from .exceptions import DesignError

# relative slack when comparing |t*| with |t|, so ties count as exceedances
_TIE_TOL = 1e-10
_EXACT_FIT_TOL = 1e-12


@dataclass
class BootstrapConfig:
    """Settings for :func:`wcr_pvalue` and :func:`wcr_ci`.

    ``enumerate`` may be ``"auto"`` (use all ``2**G`` sign patterns when
    ``2**G <= B``), True or False. ``ci_tol`` is the bisection tolerance for
    confidence bounds in units of the CV1 standard error.
    """

    B: int = 999
    weight_kind: str = "rademacher"
    seed: int | None = None
    beta_0j: float = 0.0
    ci: bool = False
    ci_tol: float = 1e-4
    level: float = 0.95
    enumerate: bool | str = "auto"

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if self.weight_kind != "rademacher":
            raise ValueError("only Rademacher weights are supported")


@dataclass
class BootstrapResult:
    p_value: float
    t_stats: np.ndarray
    t_hat: float
    B: int
    enumerated: bool = False
    n_degenerate: int = 0
    ci: tuple | None = None
    extra: dict = field(default_factory=dict)


def rademacher_weights(G, B, rng):
    """A (G, B) matrix of independent +/-1 weights."""
    return rng.integers(0, 2, size=(G, B), dtype=np.int8).astype(float) * 2.0 - 1.0


def all_sign_patterns(G):
    """All ``2**G`` Rademacher weight vectors as a (G, 2**G) matrix."""
    return np.array(list(product((1.0, -1.0), repeat=G))).T


def bootstrap_pvalue(t_hat, t_stats):
    """Symmetric p-value: share of ``|t*|`` at least as large as ``|t|``."""
    thresh = np.abs(np.asarray(t_hat, dtype=float))[..., None] * (1.0 - _TIE_TOL)
    p = np.mean(np.abs(np.asarray(t_stats)) >= thresh, axis=-1)
    return float(p) if p.ndim == 0 else p


def _safe_t(num, var):
    """``num / sqrt(var)`` with 0/0 -> 0 and x/0 -> +/-inf."""
    var = np.maximum(var, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / np.sqrt(var)
    t = np.where(num == 0, 0.0, t)
    return np.where((var == 0) & (num != 0), np.copysign(np.inf, num), t)


class WildClusterKernel:
    """Precomputed pieces of the WCR bootstrap for a fixed design and column.

    Works on batches: ``Y`` may be (N,) or (N, R) for ``R`` outcome vectors
    sharing the same design.
    """

    def __init__(self, design, j=None, inv_gram=None):
        if design.G < 2:
            raise DesignError("the bootstrap needs at least two clusters")
        self.design = design
        self.j = design.j if j is None else j
        X = design.X
        k = X.shape[1]
        self.G, self.N = design.G, design.N
        W = spd_inverse(design.gram) if inv_gram is None else inv_gram
        self.W = W
        self.w = W[:, self.j]
        # r_g = W X_g'X_g w, one row per cluster
        self.r = (design.gram_blocks @ self.w) @ W
        others = [c for c in range(k) if c != self.j]
        self._Xr = X[:, others]
        self._Wr = spd_inverse(design.gram[np.ix_(others, others)]) if others else None
        self._rows = design.cluster_rows()
        df_k = k + design.n_absorbed
        self.factor = self.G * (self.N - 1) / ((self.G - 1) * (self.N - df_k))

    def cluster_scores(self, U):
        """Per-cluster scores ``X_g'U_g`` as an (R, G, k) array."""
        U = U.reshape(self.N, -1)
        X = self.design.X
        out = np.empty((U.shape[1], self.G, X.shape[1]))
        for g, rows in enumerate(self._rows):
            out[:, g, :] = U[rows].T @ X[rows]
        return out

    def restrict(self, Y):
        """Residuals from regressing ``Y`` on every column except ``j``."""
        Y = np.asarray(Y, dtype=float).reshape(self.N, -1)
        if self._Wr is None:
            U = Y.copy()
        else:
            U = Y - self._Xr @ (self._Wr @ (self._Xr.T @ Y))
        scale = np.max(np.abs(Y), axis=0)
        exact = np.max(np.abs(U), axis=0) <= _EXACT_FIT_TOL * scale
        U[:, exact] = 0.0
        return U

    def restricted_scores(self, Y, beta_0j=0.0):
        xj = self.design.X[:, self.j]
        Y = np.asarray(Y, dtype=float).reshape(self.N, -1)
        return self.cluster_scores(self.restrict(Y - beta_0j * xj[:, None]))

    def t_stat(self, Y, beta_0j=0.0):
        """CV1 t-statistics (and beta_j, se_j) for each column of ``Y``."""
        Y = np.asarray(Y, dtype=float).reshape(self.N, -1)
        X = self.design.X
        beta = self.W @ (X.T @ Y)
        U = Y - X @ beta
        scale = np.max(np.abs(Y), axis=0)
        exact = np.max(np.abs(U), axis=0) <= _EXACT_FIT_TOL * scale
        U[:, exact] = 0.0
        S = self.cluster_scores(U)
        proj = S @ self.w
        var = self.factor * np.sum(proj * proj, axis=1)
        num = beta[self.j] - beta_0j
        ref = np.max(np.abs(beta), axis=0)
        num = np.where(np.abs(num) <= 1e-12 * ref, 0.0, num)
        return _safe_t(num, var), beta[self.j], np.sqrt(var)

    def bootstrap_t(self, S, V):
        """Bootstrap t-statistics for restricted scores ``S`` (R, G, k).

        ``V`` is (G, B) shared by all batches or (R, G, B).
        """
        a = S @ self.w
        C = np.einsum("gk,rhk->rgh", self.r, S)
        if V.ndim == 2:
            num = a @ V
            Q = a[:, :, None] * V[None] - C @ V
        else:
            num = np.einsum("rg,rgb->rb", a, V)
            Q = a[:, :, None] * V - C @ V
        var = self.factor * np.sum(Q * Q, axis=1)
        return _safe_t(num, var)


def _weights(G, config, rng):
    use_enum = config.enumerate
    if use_enum == "auto":
        use_enum = 2**G <= config.B
    if use_enum:
        if G > 20:
            raise ValueError("enumeration is limited to G <= 20")
        return all_sign_patterns(G), True
    return rademacher_weights(G, config.B, rng), False


def wcr_pvalue(design, model=None, config=None):
    """WCR bootstrap p-value for ``beta_j = config.beta_0j`` using CV1 t-statistics."""
    config = config or BootstrapConfig()
    kernel = WildClusterKernel(design, inv_gram=None if model is None else model.inv_gram)
    rng = np.random.default_rng(config.seed)
    V, enumerated = _weights(design.G, config, rng)
    t_hat = float(kernel.t_stat(design.y, config.beta_0j)[0][0])
    S = kernel.restricted_scores(design.y, config.beta_0j)
    t_star = kernel.bootstrap_t(S, V)[0]
    p = float(bootstrap_pvalue(t_hat, t_star))
    result = BootstrapResult(
        p_value=p,
        t_stats=t_star,
        t_hat=t_hat,
        B=V.shape[1],
        enumerated=enumerated,
        n_degenerate=int(np.sum(np.isinf(t_star))),
    )
    if config.ci:
        result.ci = _invert(kernel, design, V, config)
    return result


def _pvalue_fn(kernel, design, V):
    y = design.y
    xj = design.X[:, kernel.j]
    t_all, beta_j, se = kernel.t_stat(y, 0.0)
    beta_j, se = float(beta_j[0]), float(se[0])
    # restricted scores are affine in the null value
    S_y = kernel.cluster_scores(kernel.restrict(y))
    S_x = kernel.cluster_scores(kernel.restrict(xj))

    def p_at(b0):
        diff = beta_j - b0
        if se == 0:
            t_hat = 0.0 if diff == 0 else np.copysign(np.inf, diff)
        else:
            t_hat = diff / se
        t_star = kernel.bootstrap_t(S_y - b0 * S_x, V)[0]
        return float(bootstrap_pvalue(t_hat, t_star))

    return p_at, beta_j, se


def wcr_ci(design, model=None, config=None):
    """Confidence interval by inverting the WCR bootstrap test.

    Bounds are located by stepping outward from ``beta_j`` in half standard
    errors until the test rejects, then bisecting; the same weights are used
    at every trial value. A side with no rejection within 20 standard errors
    is returned as infinite.
    """
    config = config or BootstrapConfig()
    kernel = WildClusterKernel(design, inv_gram=None if model is None else model.inv_gram)
    rng = np.random.default_rng(config.seed)
    V, _ = _weights(design.G, config, rng)
    return _invert(kernel, design, V, config)


def _invert(kernel, design, V, config):
    p_at, beta_j, se = _pvalue_fn(kernel, design, V)
    alpha = 1.0 - config.level
    if se == 0:
        return (beta_j, beta_j)

    def rejects(b0):
        return p_at(b0) <= alpha

    bounds = []
    for direction in (-1.0, 1.0):
        inside = beta_j
        outside = None
        step = 0.5
        while step <= 20.0 + 1e-12:
            trial = beta_j + direction * step * se
            if rejects(trial):
                outside = trial
                break
            inside = trial
            step += 0.5
        if outside is None:
            bounds.append(direction * np.inf)
            continue
        while abs(outside - inside) > config.ci_tol * se:
            mid = 0.5 * (inside + outside)
            if rejects(mid):
                outside = mid
            else:
                inside = mid
        bounds.append(0.5 * (inside + outside))
    return (bounds[0], bounds[1])
