"""Data loading and design construction.

Turns a CSV file (or in-memory arrays) plus a model description into a
:class:`PreparedDesign`: numeric ``y`` and ``X``, the cluster partition, and
the per-cluster blocks ``X_g'X_g``, ``X_g'y_g`` and ``1'X_g`` from which every
downstream statistic is built.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ._linalg import RANK_TOL, independent_columns
from .exceptions import DesignError, FilterSyntaxError, NotIdentifiedError

# relative norm below which an absorbed column is treated as exactly zero
_ABSORB_ZERO_TOL = 1e-10

_NA_VALUES = ["", " ", ".", "NA", "NaN", "nan"]


@dataclass
class Dataset:
    """Tabular data restricted to the columns a model uses.

    ``dropped`` counts rows removed because a used column was missing.
    """

    frame: pd.DataFrame
    dropped: int = 0

    @property
    def N(self) -> int:
        return len(self.frame)

    @property
    def columns(self) -> list[str]:
        return list(self.frame.columns)

    def __getitem__(self, name):
        return self.frame[name]


def load_csv(path, used_columns, numeric_columns=()):
    """Read ``used_columns`` from a CSV file with a header row.

    Columns listed in ``numeric_columns`` must parse as numbers; the others are
    kept as strings (labels). Rows with a missing value in any used column are
    dropped and counted.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing file: {path}")
    used = list(dict.fromkeys(used_columns))
    header = pd.read_csv(path, nrows=0, encoding="utf-8")
    missing = [c for c in used if c not in header.columns]
    if missing:
        raise DesignError(f"missing column: {', '.join(missing)}")
    frame = pd.read_csv(
        path,
        usecols=used,
        dtype=str,
        keep_default_na=False,
        na_values=_NA_VALUES,
        encoding="utf-8",
    )[used]
    for name in numeric_columns:
        raw = frame[name]
        converted = pd.to_numeric(raw, errors="coerce")
        bad = converted.isna() & raw.notna()
        if bad.any():
            example = raw[bad].iloc[0]
            raise DesignError(
                f"non-numeric value {example!r} in numeric column {name!r}"
            )
        frame[name] = converted.astype(float)
    n_before = len(frame)
    frame = frame.dropna(how="any").reset_index(drop=True)
    return Dataset(frame, dropped=n_before - len(frame))


# ---------------------------------------------------------------------------
# sample filter: conjunctions of ``column OP literal`` joined by ``&``

_OPS = {
    "==": operator.eq,
    "!=": operator.ne,
    "<=": operator.le,
    ">=": operator.ge,
    "<": operator.lt,
    ">": operator.gt,
}
_CLAUSE = re.compile(
    r"^\s*([A-Za-z_][\w.]*|-?\d+(?:\.\d*)?)\s*(==|!=|<=|>=|<|>)\s*([^\s=<>!].*?)\s*$"
)


def _parse_literal(text):
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    try:
        return float(text)
    except ValueError:
        pass
    if re.fullmatch(r"[\w.\-]+", text):
        return text
    raise FilterSyntaxError(f"cannot parse literal {text!r}")


def parse_filter(expr):
    """Parse a filter expression into ``(column, op, literal)`` clauses.

    A number on the left of the operator is allowed so that tautologies such
    as ``1==1`` work.
    """
    if expr is None or not expr.strip():
        raise FilterSyntaxError("empty filter expression")
    clauses = []
    for part in expr.split("&"):
        m = _CLAUSE.match(part)
        if m is None:
            raise FilterSyntaxError(f"parse error in filter clause {part.strip()!r}")
        left, op, lit = m.groups()
        if left[0].isdigit() or left[0] == "-":
            left = float(left)
        clauses.append((left, op, _parse_literal(lit)))
    return clauses


def _clause_mask(frame, left, op, lit):
    col = frame[left]
    if isinstance(lit, float):
        values = pd.to_numeric(col, errors="coerce")
        return _OPS[op](values, lit).to_numpy(dtype=bool)
    return _OPS[op](col.astype(str), lit).to_numpy(dtype=bool)


def apply_sample_filter(data, expr):
    """Keep the rows of ``data`` where ``expr`` holds."""
    frame = data.frame
    mask = np.ones(len(frame), dtype=bool)
    for left, op, lit in parse_filter(expr):
        if isinstance(left, float):
            if not isinstance(lit, float):
                raise FilterSyntaxError("cannot compare a number with a string")
            mask &= bool(_OPS[op](left, lit))
            continue
        if left not in frame.columns:
            raise DesignError(f"unknown column in filter: {left!r}")
        mask &= _clause_mask(frame, left, op, lit)
    return Dataset(frame.loc[mask].reset_index(drop=True), dropped=data.dropped)


def filter_columns(expr):
    """Column names referenced by a filter expression."""
    return [c for c, _, _ in parse_filter(expr) if isinstance(c, str)]


# ---------------------------------------------------------------------------
# model description and prepared design


@dataclass
class ModelSpec:
    """Declarative description of a clustered regression."""

    coef_var: str
    yvar: str
    cluster: str
    xvars: list[str] = field(default_factory=list)
    fevars: list[str] = field(default_factory=list)
    absorb: str | None = None
    sample_filter: str | None = None
    add_constant: bool = True

    def __post_init__(self):
        self.xvars = list(self.xvars)
        self.fevars = list(self.fevars)
        if self.coef_var in self.fevars:
            raise DesignError("the coefficient variable cannot be a factor variable")
        if self.absorb is not None and self.coef_var == self.absorb:
            raise DesignError("the coefficient variable cannot be absorbed")
        if self.fevars:
            # full dummy sets span the intercept
            self.add_constant = False

    @property
    def numeric_columns(self):
        return list(dict.fromkeys([self.yvar, self.coef_var, *self.xvars]))

    @property
    def used_columns(self):
        cols = [*self.numeric_columns, *self.fevars, self.cluster]
        if self.absorb is not None:
            cols.append(self.absorb)
        if self.sample_filter:
            cols.extend(filter_columns(self.sample_filter))
        return list(dict.fromkeys(cols))


@dataclass
class NestingReport:
    """Outcome of checking that absorbed groups sit inside single clusters."""

    ok: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def check_nesting(inner, outer):
    """Check that every level of ``inner`` maps to exactly one level of ``outer``."""
    df = pd.DataFrame({"inner": np.asarray(inner), "outer": np.asarray(outer)})
    counts = df.groupby("inner", sort=False)["outer"].nunique()
    bad = counts[counts > 1].index.tolist()
    return NestingReport(ok=not bad, violations=bad)


def validate_absorb_nesting(data, spec):
    """Check that the cluster variable is constant within each absorb level."""
    if spec.absorb is None:
        raise DesignError("no absorb variable in the model")
    return check_nesting(data[spec.absorb], data[spec.cluster])


def within_transform(values, groups):
    """Deviations from group means (column-wise for 2-D input)."""
    values = np.asarray(values, dtype=float)
    codes, uniques = pd.factorize(np.asarray(groups), sort=False)
    n_groups = len(uniques)
    counts = np.bincount(codes, minlength=n_groups).astype(float)
    if values.ndim == 1:
        means = np.bincount(codes, weights=values, minlength=n_groups) / counts
        return values - means[codes]
    out = np.empty_like(values)
    for c in range(values.shape[1]):
        col = values[:, c]
        means = np.bincount(codes, weights=col, minlength=n_groups) / counts
        out[:, c] = col - means[codes]
    return out


@dataclass
class PreparedDesign:
    """Numeric regression design partitioned into clusters.

    ``gram_blocks[g]`` is ``X_g'X_g``, ``moment_blocks[g]`` is ``X_g'y_g`` and
    ``sum_blocks[g]`` is ``1'X_g`` (the column sums within cluster ``g``).
    ``n_absorbed`` counts fixed-effect levels partialed out before fitting;
    they enter the degrees-of-freedom correction of CV1.
    """

    y: np.ndarray
    X: np.ndarray
    cluster_ids: np.ndarray
    cluster_labels: list
    gram_blocks: np.ndarray
    moment_blocks: np.ndarray
    sum_blocks: np.ndarray
    j: int = 0
    column_names: list = field(default_factory=list)
    dropped_columns: list = field(default_factory=list)
    absorbed: bool = False
    n_absorbed: int = 0
    absorb_nested: bool = True
    fe_nested: bool = False

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def G(self) -> int:
        return len(self.cluster_labels)

    @property
    def Ng(self) -> np.ndarray:
        return np.bincount(self.cluster_ids, minlength=self.G)

    @property
    def gram(self) -> np.ndarray:
        return self.gram_blocks.sum(axis=0)

    @property
    def moment(self) -> np.ndarray:
        return self.moment_blocks.sum(axis=0)

    def cluster_rows(self):
        """Row indices of each cluster, in cluster order."""
        order = np.argsort(self.cluster_ids, kind="stable")
        bounds = np.cumsum(self.Ng)[:-1]
        return np.split(order, bounds)


def _blocks(y, X, codes, G):
    k = X.shape[1]
    order = np.argsort(codes, kind="stable")
    bounds = np.cumsum(np.bincount(codes, minlength=G))[:-1]
    gram = np.empty((G, k, k))
    moment = np.empty((G, k))
    sums = np.empty((G, k))
    for g, rows in enumerate(np.split(order, bounds)):
        Xg = X[rows]
        gram[g] = Xg.T @ Xg
        moment[g] = Xg.T @ y[rows]
        sums[g] = Xg.sum(axis=0)
    return gram, moment, sums


def prepare_design(
    y,
    X,
    clusters,
    j=0,
    *,
    column_names=None,
    absorb=None,
    check_rank=True,
    fe_nested=False,
):
    """Build a :class:`PreparedDesign` from arrays.

    Parameters
    ----------
    y : array-like of shape (N,)
    X : array-like of shape (N, k)
    clusters : array-like of shape (N,)
        Cluster labels; clusters are numbered by first appearance.
    j : int
        Column of the coefficient of interest.
    absorb : array-like of shape (N,), optional
        Group labels whose fixed effects are partialed out of ``y`` and ``X``.
    check_rank : bool
        Drop collinear columns. Columns are examined in order with column
        ``j`` last, so ``j`` is dropped only if it lies in the span of the
        others, which is an error.
    fe_nested : bool
        Marks designs carrying fixed effects nested within clusters.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    N, k = X.shape
    if y.shape[0] != N:
        raise DesignError("y and X have different numbers of rows")
    clusters = np.asarray(clusters)
    if clusters.shape[0] != N:
        raise DesignError("clusters and X have different numbers of rows")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise DesignError("y and X must be finite")
    if not 0 <= j < k:
        raise DesignError(f"column index j={j} out of range for k={k}")
    names = list(column_names) if column_names is not None else [f"x{i}" for i in range(k)]

    codes, labels = pd.factorize(clusters, sort=False)
    G = len(labels)

    absorbed = absorb is not None
    n_absorbed = 0
    nested = True
    if absorbed:
        absorb = np.asarray(absorb)
        n_absorbed = len(pd.unique(absorb))
        nested = check_nesting(absorb, clusters).ok
        raw_norm = np.linalg.norm(X, axis=0)
        y = within_transform(y, absorb)
        X = within_transform(X, absorb)
        tiny = np.linalg.norm(X, axis=0) <= _ABSORB_ZERO_TOL * raw_norm
        X[:, tiny] = 0.0
        fe_nested = True

    dropped = []
    if check_rank:
        gram_full = X.T @ X
        order = [c for c in range(k) if c != j] + [j]
        keep_ordered = independent_columns(gram_full[np.ix_(order, order)], tol=RANK_TOL)
        keep = np.zeros(k, dtype=bool)
        keep[order] = keep_ordered
        if not keep[j]:
            raise NotIdentifiedError(
                f"coefficient of interest {names[j]!r} is collinear with other regressors"
            )
        dropped = [names[c] for c in range(k) if not keep[c]]
        if dropped:
            j = int(np.flatnonzero(keep).tolist().index(j))
            X = X[:, keep]
            names = [n for n, kp in zip(names, keep) if kp]
    if X.shape[1] >= N:
        raise DesignError("need more observations than regressors")

    gram, moment, sums = _blocks(y, X, codes, G)
    return PreparedDesign(
        y=y,
        X=X,
        cluster_ids=codes.astype(np.intp),
        cluster_labels=list(labels),
        gram_blocks=gram,
        moment_blocks=moment,
        sum_blocks=sums,
        j=j,
        column_names=names,
        dropped_columns=dropped,
        absorbed=absorbed,
        n_absorbed=n_absorbed,
        absorb_nested=nested,
        fe_nested=fe_nested,
    )


def _dummies(values, name):
    codes, levels = pd.factorize(np.asarray(values), sort=False)
    D = np.zeros((len(codes), len(levels)))
    D[np.arange(len(codes)), codes] = 1.0
    return D, [f"{name}={lvl}" for lvl in levels]


def build_design(data, spec):
    """Expand ``spec`` against ``data`` into a :class:`PreparedDesign`.

    The coefficient variable is placed in column 0. Factor variables become
    full dummy sets (no constant), the absorb variable (if any) is partialed
    out, and collinear columns are dropped with a report in
    ``dropped_columns``.
    """
    for col in spec.used_columns:
        if col not in data.columns:
            raise DesignError(f"missing column: {col}")
    if spec.sample_filter:
        data = apply_sample_filter(data, spec.sample_filter)
    if data.N == 0:
        raise DesignError("no observations left after filtering")

    cols = [data[spec.coef_var].to_numpy(dtype=float)]
    names = [spec.coef_var]
    if spec.add_constant:
        cols.append(np.ones(data.N))
        names.append("_cons")
    for name in spec.xvars:
        if name == spec.coef_var:
            continue
        cols.append(data[name].to_numpy(dtype=float))
        names.append(name)
    X = np.column_stack(cols)
    for fe in spec.fevars:
        D, dnames = _dummies(data[fe].to_numpy(), fe)
        X = np.column_stack([X, D])
        names.extend(dnames)

    clusters = data[spec.cluster].to_numpy()
    fe_nested = any(check_nesting(data[fe], clusters).ok for fe in spec.fevars)
    absorb = data[spec.absorb].to_numpy() if spec.absorb is not None else None
    # rank check runs with the coefficient column last; it is stored first
    return prepare_design(
        data[spec.yvar].to_numpy(dtype=float),
        X,
        clusters,
        j=0,
        column_names=names,
        absorb=absorb,
        fe_nested=fe_nested,
    )
