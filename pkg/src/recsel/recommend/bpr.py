"""Bayesian personalised ranking, trained by SGD on sampled triplets."""

from __future__ import annotations

import numpy as np
from numba import njit

from .base import HyperParamSpace, Param, Recommender, check_finite, init_factors


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def bpr_objective(X, Y, triplets, reg):
    """sum_t ln sigmoid(x_u . (y_i - y_j)) - reg * (|X|^2 + |Y|^2)."""
    u, i, j = np.asarray(triplets).T
    z = np.einsum("ij,ij->i", X[u], Y[i] - Y[j])
    return float(np.sum(_log_sigmoid(z)) - reg * (np.sum(X * X) + np.sum(Y * Y)))


def bpr_gradient(X, Y, triplets, reg):
    """Analytic gradient of :func:`bpr_objective` with respect to (X, Y)."""
    u, i, j = np.asarray(triplets).T
    z = np.einsum("ij,ij->i", X[u], Y[i] - Y[j])
    g = 1.0 / (1.0 + np.exp(z))  # d/dz ln sigmoid(z)
    gX = -2.0 * reg * X
    gY = -2.0 * reg * Y
    np.add.at(gX, u, g[:, None] * (Y[i] - Y[j]))
    np.add.at(gY, i, g[:, None] * X[u])
    np.add.at(gY, j, -g[:, None] * X[u])
    return gX, gY


@njit(cache=True)
def _sample_negative(indptr, indices, u, n_items):
    lo, hi = indptr[u], indptr[u + 1]
    while True:
        j = np.random.randint(n_items)
        a, b = lo, hi
        while a < b:
            mid = (a + b) // 2
            if indices[mid] < j:
                a = mid + 1
            else:
                b = mid
        if a == hi or indices[a] != j:
            return j


@njit(cache=True)
def bpr_step(X, Y, u, i, j, lr, reg):
    """One ascent step on ln sigmoid(x_u.(y_i - y_j)) - reg(|x_u|^2 + |y_i|^2 + |y_j|^2)."""
    xu = X[u].copy()
    diff = Y[i] - Y[j]
    z = np.dot(xu, diff)
    g = 1.0 / (1.0 + np.exp(z))
    X[u] += lr * (g * diff - 2.0 * reg * xu)
    Y[i] += lr * (g * xu - 2.0 * reg * Y[i])
    Y[j] += lr * (-g * xu - 2.0 * reg * Y[j])


@njit(cache=True)
def _bpr_epoch(X, Y, indptr, indices, rows, lr, reg, seed):
    np.random.seed(seed)
    n_items = Y.shape[0]
    nnz = len(indices)
    for _ in range(nnz):
        p = np.random.randint(nnz)
        u = rows[p]
        if indptr[u + 1] - indptr[u] >= n_items:
            continue
        j = _sample_negative(indptr, indices, u, n_items)
        bpr_step(X, Y, u, indices[p], j, lr, reg)


class BPR(Recommender):
    name = "bpr"
    space = HyperParamSpace((
        Param("factors", "int", 8, 256),
        Param("lr", "log", 1e-4, 0.5),
        Param("reg", "log", 1e-6, 0.1),
        Param("epochs", "int", 5, 60),
    ))
    defaults = {"factors": 50, "lr": 0.05, "reg": 1e-4, "epochs": 20}

    def _fit(self, train, rng):
        f = self.params["factors"]
        X = init_factors(rng, train.shape[0], f)
        Y = init_factors(rng, train.shape[1], f)
        rows = np.repeat(np.arange(train.shape[0], dtype=np.int64), np.diff(train.indptr))
        indptr = train.indptr.astype(np.int64)
        indices = train.indices.astype(np.int64)
        for _ in range(self.params["epochs"]):
            seed = int(rng.integers(2**31 - 1))
            _bpr_epoch(X, Y, indptr, indices, rows, float(self.params["lr"]), float(self.params["reg"]), seed)
            check_finite(X, Y)
        self.user_factors, self.item_factors = X, Y

    def _raw_scores(self, users):
        return self.user_factors[users] @ self.item_factors.T

    def state_blocks(self):
        return {"user_factors": self.user_factors, "item_factors": self.item_factors}
