"""Delete-one-cluster estimates and the CV3 / CV3J jackknife variance matrices."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._linalg import invsym
from .exceptions import DesignError, NotIdentifiedError, ZeroedCoefficientWarning
from .ols import VarianceEstimate


@dataclass
class JackknifeResult:
    """Delete-one-cluster coefficients and the variance estimates built on them.

    ``zeroed_flags[g]`` marks clusters whose removal leaves the coefficient of
    interest unidentified (it is then reported as exactly 0).
    ``singular_flags[g]`` marks clusters whose removal makes any coefficient
    unidentified.
    """

    beta_del: np.ndarray
    beta_bar: np.ndarray
    zeroed_flags: np.ndarray
    singular_flags: np.ndarray
    cv3: VarianceEstimate
    cv3j: VarianceEstimate | None = None

    @property
    def any_zeroed(self) -> bool:
        return bool(self.zeroed_flags.any())


def _require_nested(design):
    if design.absorbed and not design.absorb_nested:
        raise DesignError(
            "absorbed fixed effects are not nested within clusters; "
            "delete-one-cluster quantities are not available"
        )


def delete_one_betas(design, *, return_flags=False, warn=True):
    """Coefficients with each cluster deleted, by downdating the Gram matrix.

    ``beta^(g) = (X'X - X_g'X_g)^- (X'y - X_g'y_g)`` where ``^-`` drops
    dependent columns in order and zeroes their coefficients. Dependence is
    judged against the diagonal of the full ``X'X``.
    """
    _require_nested(design)
    gram = design.gram
    moment = design.moment
    ref = np.diag(gram)
    G, k = design.G, design.k
    betas = np.empty((G, k))
    zeroed = np.zeros(G, dtype=bool)
    singular = np.zeros(G, dtype=bool)
    for g in range(G):
        inv, keep = invsym(gram - design.gram_blocks[g], ref_diag=ref)
        betas[g] = inv @ (moment - design.moment_blocks[g])
        singular[g] = not keep.all()
        zeroed[g] = not keep[design.j]
    if warn and zeroed.any():
        labels = [design.cluster_labels[g] for g in np.flatnonzero(zeroed)]
        warnings.warn(
            f"coefficient {design.column_names[design.j]!r} is not identified when "
            f"cluster(s) {labels} are deleted; those estimates were set to 0",
            ZeroedCoefficientWarning,
            stacklevel=2,
        )
    if return_flags:
        return betas, zeroed, singular
    return betas


def _jackknife_matrix(beta_del, center):
    G = beta_del.shape[0]
    dev = beta_del - center
    return (G - 1) / G * (dev.T @ dev)


def cv3_jackknife(design, model, beta_del=None, *, level=0.95, beta_0j=0.0):
    """CV3 as ``(G-1)/G * sum_g (b^(g) - b)(b^(g) - b)'``."""
    if beta_del is None:
        beta_del = delete_one_betas(design)
    matrix = _jackknife_matrix(beta_del, model.beta_hat)
    return VarianceEstimate(
        "CV3", matrix, model.beta_hat, model.j, model.G - 1, level=level, beta_0j=beta_0j
    )


def cv3j_jackknife(design, model, beta_del=None, *, level=0.95, beta_0j=0.0):
    """CV3J: the jackknife matrix centred at the mean of the ``b^(g)``."""
    if beta_del is None:
        beta_del = delete_one_betas(design)
    matrix = _jackknife_matrix(beta_del, beta_del.mean(axis=0))
    return VarianceEstimate(
        "CV3J", matrix, model.beta_hat, model.j, model.G - 1, level=level, beta_0j=beta_0j
    )


def cv3_direct(design, model):
    """CV3 from modified scores ``X_g' M_gg^{-1} u_g`` (forms N_g x N_g blocks).

    Only practical for small clusters; used to cross-check the jackknife form.
    """
    _require_nested(design)
    W = model.inv_gram
    G, k = design.G, design.k
    mod_scores = np.empty((G, k))
    for g, rows in enumerate(design.cluster_rows()):
        Xg = design.X[rows]
        Mgg = np.eye(len(rows)) - Xg @ W @ Xg.T
        eig = np.linalg.eigvalsh(Mgg)
        if eig.min() <= 1e-12:
            raise NotIdentifiedError(
                f"M_gg is singular for cluster {design.cluster_labels[g]!r}"
            )
        mod_scores[g] = Xg.T @ np.linalg.solve(Mgg, model.residuals[rows])
    half = W @ mod_scores.T
    return (G - 1) / G * (half @ half.T)


def jackknife(design, model, *, cv3j=False, level=0.95, beta_0j=0.0):
    """Run the delete-one-cluster pass once and build CV3 (and optionally CV3J)."""
    beta_del, zeroed, singular = delete_one_betas(design, return_flags=True)
    v3 = cv3_jackknife(design, model, beta_del, level=level, beta_0j=beta_0j)
    v3j = cv3j_jackknife(design, model, beta_del, level=level, beta_0j=beta_0j) if cv3j else None
    return JackknifeResult(
        beta_del=beta_del,
        beta_bar=beta_del.mean(axis=0),
        zeroed_flags=zeroed,
        singular_flags=singular,
        cv3=v3,
        cv3j=v3j,
    )
