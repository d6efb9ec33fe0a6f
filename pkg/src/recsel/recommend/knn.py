"""Item-item and user-user nearest neighbours with cosine similarity."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .base import HyperParamSpace, Param, Recommender

KNN_SPACE = HyperParamSpace((
    Param("nnbrs", "int", 2, 200),
    Param("min_sim", "real", 0.0, 0.1),
))


def normalize_rows(X: sp.csr_matrix) -> sp.csr_matrix:
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    return sp.csr_matrix(sp.diags(inv) @ X)


def cosine_similarity(X: sp.csr_matrix) -> sp.csr_matrix:
    """Row-by-row cosine similarity; rows with no entries get zero similarity."""
    Xn = normalize_rows(sp.csr_matrix(X, dtype=np.float64))
    return sp.csr_matrix(Xn @ Xn.T)


def _top_neighbors(row_vals: np.ndarray, row_idx: np.ndarray, n: int, min_sim: float):
    keep = row_vals > min_sim
    vals, idx = row_vals[keep], row_idx[keep]
    if len(vals) > n:
        order = np.lexsort((idx, -vals))[:n]
        vals, idx = vals[order], idx[order]
    return vals, idx


def truncate_neighbors(S: sp.csr_matrix, n: int, min_sim: float) -> sp.csr_matrix:
    """Keep each row's n most similar columns above ``min_sim``, self excluded."""
    S = sp.csr_matrix(S)
    S.setdiag(0.0)
    S.eliminate_zeros()
    data, indices, indptr = [], [], [0]
    for r in range(S.shape[0]):
        lo, hi = S.indptr[r], S.indptr[r + 1]
        vals, idx = _top_neighbors(S.data[lo:hi], S.indices[lo:hi], n, min_sim)
        data.append(vals)
        indices.append(idx)
        indptr.append(indptr[-1] + len(vals))
    out = sp.csr_matrix((np.concatenate(data), np.concatenate(indices), np.array(indptr)), shape=S.shape)
    out.sort_indices()
    return out


class ItemKNN(Recommender):
    """score(u, i) = sum of sim(i, j) over i's neighbours j that u interacted with."""

    name = "itemknn"
    space = KNN_SPACE
    defaults = {"nnbrs": 20, "min_sim": 0.0}

    def _fit(self, train, rng):
        S = cosine_similarity(train.T.tocsr())
        self.neighbors = truncate_neighbors(S, self.params["nnbrs"], self.params["min_sim"])

    def _raw_scores(self, users):
        return np.asarray((self.train[users] @ self.neighbors.T).todense())


class UserKNN(Recommender):
    """score(u, i) = sum of sim(u, v) over u's neighbours v that interacted with i."""

    name = "userknn"
    space = KNN_SPACE
    defaults = {"nnbrs": 20, "min_sim": 0.0}

    def _fit(self, train, rng):
        self.normalized = normalize_rows(train)
        self._normalized_t = self.normalized.T.tocsr()

    def _raw_scores(self, users):
        n, min_sim = self.params["nnbrs"], self.params["min_sim"]
        sims = np.asarray((self.normalized[users] @ self._normalized_t).todense())
        sims[np.arange(len(users)), users] = 0.0
        W = np.zeros_like(sims)
        cols = np.arange(sims.shape[1])
        for r in range(len(users)):
            vals, idx = _top_neighbors(sims[r], cols, n, min_sim)
            W[r, idx] = vals
        return np.asarray((sp.csr_matrix(W) @ self.train).todense())
