from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

ROOT = Path(__file__).resolve().parents[1]
ML100K = ROOT / "data" / "ml-100k" / "u.inter"


def random_binary(n_users, n_items, density, seed, min_per_user=1):
    """Binary CSR matrix where every user has at least ``min_per_user`` items."""
    rng = np.random.default_rng(seed)
    M = (rng.random((n_users, n_items)) < density).astype(np.float64)
    for u in range(n_users):
        short = min_per_user - int(M[u].sum())
        if short > 0:
            M[u, rng.choice(np.flatnonzero(M[u] == 0), short, replace=False)] = 1.0
    return sp.csr_matrix(M)


@pytest.fixture
def small_matrix():
    return random_binary(40, 30, 0.3, seed=7, min_per_user=6)


@pytest.fixture(scope="session")
def ml100k_path():
    if not ML100K.exists():
        pytest.skip("MovieLens-100k not present; run scripts/fetch_ml100k.py")
    return ML100K
