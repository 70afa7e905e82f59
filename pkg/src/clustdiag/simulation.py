"""Monte-Carlo rejection-frequency experiments for CV1, CV3 and WCR tests.

Each case fixes one regressor matrix with unbalanced cluster sizes and
cluster-level switching of binary regressors; outcomes are then drawn
repeatedly under the null that every coefficient is zero.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ._linalg import invsym
from .bootstrap import WildClusterKernel, bootstrap_pvalue, rademacher_weights
from .data import prepare_design
from .diagnostics import effective_clusters, leverage, partial_leverage, scaled_variance
from .exceptions import DesignError, NotIdentifiedError
from .tdist import t_two_sided_pvalue

CSV_COLUMNS = (
    "case_id", "G", "N", "gamma", "p_c", "Vs_partial", "gstar0",
    "rej_cv1", "rej_cv3", "rej_wcr", "dropped",
)
ERROR_MODELS = ("iid_normal", "equicorrelated_normal")
THREADS_ENV = "CLUSTDIAG_THREADS"


@dataclass(frozen=True)
class SimConfig:
    """One experimental case.

    ``rho_u`` is the intra-cluster error correlation used by the
    ``equicorrelated_normal`` error model.
    """

    G: int = 20
    N: int = 2000
    gamma: float = 2.0
    p_c: float = 1.0
    n_regressors: int = 5
    reps: int = 1000
    B: int = 399
    level: float = 0.05
    seed: int = 0
    error_model: str = "equicorrelated_normal"
    rho_u: float = 0.5
    batch: int = 250

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if not 0.0 < self.p_c <= 1.0:
            raise ValueError("p_c must lie in (0, 1]")
        if self.reps < 1 or self.B < 1:
            raise ValueError("reps and B must be positive")
        if not 0.0 < self.level <= 1.0:
            raise ValueError("level must lie in (0, 1]")
        if self.error_model not in ERROR_MODELS:
            raise ValueError(f"error_model must be one of {ERROR_MODELS}")
        if not 0.0 <= self.rho_u < 1.0:
            raise ValueError("rho_u must lie in [0, 1)")


@dataclass
class CaseResult:
    case_id: int
    G: int
    N: int
    gamma: float
    p_c: float
    rejection_cv1: float
    rejection_cv3: float
    rejection_wcr: float
    Vs_partial: float
    gstar0: float
    leverage_max_ratio: float
    Vs_leverage: float
    dropped: bool

    def as_row(self):
        return {
            "case_id": self.case_id,
            "G": self.G,
            "N": self.N,
            "gamma": repr(float(self.gamma)),
            "p_c": repr(float(self.p_c)),
            "Vs_partial": repr(float(self.Vs_partial)),
            "gstar0": repr(float(self.gstar0)),
            "rej_cv1": repr(float(self.rejection_cv1)),
            "rej_cv3": repr(float(self.rejection_cv3)),
            "rej_wcr": repr(float(self.rejection_wcr)),
            "dropped": int(self.dropped),
        }


def cluster_sizes(N, G, gamma):
    """Cluster sizes growing geometrically with ``gamma``.

    ``N_g = floor(N exp(gamma g/G) / sum_h exp(gamma h/G))`` for ``g < G``;
    the last cluster takes the remainder.
    """
    if not N >= G >= 1:
        raise ValueError("need N >= G >= 1")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    weights = np.exp(gamma * np.arange(1, G + 1) / G)
    sizes = np.floor(N * weights[:-1] / weights.sum()).astype(np.int64)
    sizes = np.append(sizes, N - sizes.sum())
    if sizes.min() < 1:
        raise ValueError("infeasible cluster sizes: some N_g < 1")
    return sizes


def generate_regressors(sizes, p_c, n_regressors, rng):
    """Binary regressors switched on cluster by cluster.

    Returns ``(X, active)`` where ``active[r, g]`` says whether regressor
    ``r`` varies in cluster ``g``; inactive clusters are all zero.
    """
    sizes = np.asarray(sizes)
    G = sizes.size
    ids = np.repeat(np.arange(G), sizes)
    active = rng.random((n_regressors, G)) < p_c
    draws = rng.integers(0, 2, size=(ids.size, n_regressors)).astype(float)
    X = draws * active.T[ids]
    return X, active


def generate_design(config, rng, *, max_tries=100):
    """Draw a full-rank design: a constant followed by the binary regressors.

    The tested coefficient is the first binary regressor (column 1). Draws
    with collinear columns are discarded and redrawn.
    """
    sizes = cluster_sizes(config.N, config.G, config.gamma)
    ids = np.repeat(np.arange(config.G), sizes)
    names = ["_cons"] + [f"x{r + 1}" for r in range(config.n_regressors)]
    for _ in range(max_tries):
        Xb, _ = generate_regressors(sizes, config.p_c, config.n_regressors, rng)
        X = np.column_stack([np.ones(config.N), Xb])
        try:
            design = prepare_design(np.zeros(config.N), X, ids, j=1, column_names=names)
        except NotIdentifiedError:
            continue
        if not design.dropped_columns:
            return design
    raise DesignError("could not draw a full-rank design; p_c is too small")


def _downdated_inverses(design):
    gram = design.gram
    ref = np.diag(gram)
    invs = np.empty_like(design.gram_blocks)
    singular = False
    for g in range(design.G):
        invs[g], keep = invsym(gram - design.gram_blocks[g], ref_diag=ref)
        singular |= not keep.all()
    return invs, singular


def _draw_errors(config, ids, rng):
    eps = rng.standard_normal(ids.size)
    if config.error_model == "iid_normal":
        return eps
    z = rng.standard_normal(config.G)
    return np.sqrt(config.rho_u) * z[ids] + np.sqrt(1.0 - config.rho_u) * eps


def _rep_rng(seed, case_id, rep):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(case_id, 1, rep)))


def design_rng(seed, case_id):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(case_id, 0)))


def run_case(config, design, case_id=0):
    """Rejection frequencies of the three tests of ``beta_j = 0`` on one design.

    The case is marked dropped (and its CV3 frequency is NaN) when deleting
    some cluster leaves a coefficient unidentified.
    """
    G, N = design.G, design.N
    j = design.j
    kernel = WildClusterKernel(design)
    invs, dropped = _downdated_inverses(design)
    ids = design.cluster_ids

    Lpart = partial_leverage(design)
    L = leverage(design)
    gstar0 = effective_clusters(design).gstar0

    rej1 = rej3 = rejw = 0
    for start in range(0, config.reps, config.batch):
        reps = range(start, min(start + config.batch, config.reps))
        R = len(reps)
        Y = np.empty((N, R))
        V = np.empty((R, G, config.B))
        for i, rep in enumerate(reps):
            rng = _rep_rng(config.seed, case_id, rep)
            Y[:, i] = _draw_errors(config, ids, rng)
            V[i] = rademacher_weights(G, config.B, rng)

        t1, beta_j, _ = kernel.t_stat(Y)
        rej1 += int(np.sum(t_two_sided_pvalue(t1, G - 1) <= config.level))

        if not dropped:
            moments = kernel.cluster_scores(Y)
            total = moments.sum(axis=1)
            beta_del_j = np.einsum("gb,rgb->rg", invs[:, j, :], total[:, None, :] - moments)
            dev = beta_del_j - beta_j[:, None]
            se3 = np.sqrt((G - 1) / G * np.sum(dev * dev, axis=1))
            with np.errstate(divide="ignore", invalid="ignore"):
                t3 = np.where(se3 > 0, beta_j / se3, np.inf)
            rej3 += int(np.sum(t_two_sided_pvalue(t3, G - 1) <= config.level))

        t_star = kernel.bootstrap_t(kernel.restricted_scores(Y), V)
        rejw += int(np.sum(bootstrap_pvalue(t1, t_star) <= config.level))

    reps = config.reps
    return CaseResult(
        case_id=case_id,
        G=G,
        N=N,
        gamma=config.gamma,
        p_c=config.p_c,
        rejection_cv1=rej1 / reps,
        rejection_cv3=np.nan if dropped else rej3 / reps,
        rejection_wcr=rejw / reps,
        Vs_partial=scaled_variance(Lpart),
        gstar0=gstar0,
        leverage_max_ratio=float(L.max() / (design.k / G)),
        Vs_leverage=scaled_variance(L),
        dropped=bool(dropped),
    )


def make_cases(base, n_cases=1, *, gamma_range=None, pc_values=None):
    """Case configurations: ``gamma`` uniform on ``gamma_range`` and ``p_c``
    cycling through ``pc_values`` in equal shares."""
    rng = np.random.default_rng(np.random.SeedSequence(base.seed, spawn_key=(2**31,)))
    configs = []
    for i in range(n_cases):
        changes = {}
        if gamma_range is not None:
            lo, hi = gamma_range
            changes["gamma"] = float(rng.uniform(lo, hi))
        if pc_values:
            changes["p_c"] = float(pc_values[i % len(pc_values)])
        configs.append(replace(base, **changes))
    return configs


def _n_jobs(n_jobs):
    if n_jobs is not None:
        return max(1, int(n_jobs))
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def run_cases(configs, n_jobs=None):
    """Generate each case's design and run it; results keep input order."""

    def one(item):
        case_id, cfg = item
        design = generate_design(cfg, design_rng(cfg.seed, case_id))
        return run_case(cfg, design, case_id=case_id)

    items = list(enumerate(configs))
    jobs = _n_jobs(n_jobs)
    if jobs == 1:
        return [one(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, items))


def results_to_csv(results, stream=None):
    """Write one CSV row per case; returns the text when ``stream`` is None."""
    out = io.StringIO() if stream is None else stream
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for res in results:
        writer.writerow(res.as_row())
    return out.getvalue() if stream is None else None


def summarize_results(results):
    """Mean rejection frequency by method over cases that were not dropped."""
    kept = [r for r in results if not r.dropped]
    if not kept:
        return {"cases": 0, "dropped": len(results)}
    return {
        "cases": len(kept),
        "dropped": len(results) - len(kept),
        "cv1": float(np.mean([r.rejection_cv1 for r in kept])),
        "cv3": float(np.mean([r.rejection_cv3 for r in kept])),
        "wcr": float(np.mean([r.rejection_wcr for r in kept])),
    }
