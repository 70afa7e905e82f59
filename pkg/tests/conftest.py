import numpy as np
import pandas as pd
import pytest

from clustdiag.data import prepare_design


def random_design_arrays(rng, G=None, k=None, max_ng=20, min_ng=1):
    """Random clustered design: a constant, continuous columns and a dummy."""
    G = int(rng.integers(3, 16)) if G is None else G
    k = int(rng.integers(1, 6)) if k is None else k
    while True:
        sizes = rng.integers(min_ng, max_ng + 1, size=G)
        ids = np.repeat(np.arange(G), sizes)
        N = ids.size
        if N <= k + 1:
            continue
        cols = [np.ones(N)]
        for c in range(1, k):
            if c % 2:
                cols.append(rng.normal(size=N) + rng.normal(size=G)[ids])
            else:
                cols.append((rng.random(N) < 0.4).astype(float))
        X = np.column_stack(cols)
        if np.linalg.matrix_rank(X) < k:
            continue
        y = X @ rng.normal(size=k) + rng.normal(size=N) + rng.normal(size=G)[ids]
        return y, X, ids


def random_design(rng, **kw):
    y, X, ids = random_design_arrays(rng, **kw)
    j = int(rng.integers(0, X.shape[1]))
    return prepare_design(y, X, ids, j=j)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def design_factory():
    return random_design


@pytest.fixture
def panel_csv(tmp_path):
    """Small clustered dataset on disk with a factor and a numeric filter column."""
    rng = np.random.default_rng(7)
    G = 9
    sizes = rng.integers(4, 30, G)
    ids = np.repeat(np.arange(1, G + 1), sizes)
    n = ids.size
    shock = rng.normal(size=G)
    df = pd.DataFrame({
        "firm": ids,
        "x": rng.normal(size=n) + shock[ids - 1],
        "z": rng.integers(0, 2, n),
        "grade": rng.integers(0, 3, n),
        "year": rng.integers(1970, 1990, n),
    })
    df["y"] = 0.4 * df.x - 0.2 * df.z + rng.normal(size=n) + shock[ids - 1]
    path = tmp_path / "panel.csv"
    df.to_csv(path, index=False)
    return path, df
