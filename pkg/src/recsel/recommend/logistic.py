"""Logistic matrix factorisation with per-user negative sampling."""

from __future__ import annotations

import numpy as np
from numba import njit

from .base import HyperParamSpace, Param, Recommender, check_finite, init_factors
from .bpr import _sample_negative


def logmf_objective(X, Y, bu, bi, pairs, labels, alpha, reg):
    """sum [alpha r s - (1 + alpha r) ln(1 + e^s)] - reg (|X|^2 + |Y|^2).

    ``s = x_u . y_i + b_u + b_i``; biases are not regularised.
    """
    u, i = np.asarray(pairs).T
    r = np.asarray(labels, dtype=np.float64)
    s = np.einsum("ij,ij->i", X[u], Y[i]) + bu[u] + bi[i]
    ll = alpha * r * s - (1.0 + alpha * r) * np.logaddexp(0.0, s)
    return float(ll.sum() - reg * (np.sum(X * X) + np.sum(Y * Y)))


def logmf_gradient(X, Y, bu, bi, pairs, labels, alpha, reg):
    u, i = np.asarray(pairs).T
    r = np.asarray(labels, dtype=np.float64)
    s = np.einsum("ij,ij->i", X[u], Y[i]) + bu[u] + bi[i]
    g = alpha * r - (1.0 + alpha * r) / (1.0 + np.exp(-s))
    gX, gY = -2.0 * reg * X, -2.0 * reg * Y
    gbu, gbi = np.zeros_like(bu), np.zeros_like(bi)
    np.add.at(gX, u, g[:, None] * Y[i])
    np.add.at(gY, i, g[:, None] * X[u])
    np.add.at(gbu, u, g)
    np.add.at(gbi, i, g)
    return gX, gY, gbu, gbi


@njit(cache=True)
def logmf_step(X, Y, bu, bi, u, i, r, alpha, lr, reg):
    xu = X[u].copy()
    s = np.dot(xu, Y[i]) + bu[u] + bi[i]
    g = alpha * r - (1.0 + alpha * r) / (1.0 + np.exp(-s))
    X[u] += lr * (g * Y[i] - 2.0 * reg * xu)
    Y[i] += lr * (g * xu - 2.0 * reg * Y[i])
    bu[u] += lr * g
    bi[i] += lr * g


@njit(cache=True)
def _logmf_epoch(X, Y, bu, bi, indptr, indices, neg_ratio, alpha, lr, reg, seed):
    np.random.seed(seed)
    n_users, n_items = X.shape[0], Y.shape[0]
    users = np.empty(0, np.int64)
    n_total = 0
    for u in range(n_users):
        n_pos = indptr[u + 1] - indptr[u]
        if n_pos < n_items:
            n_total += n_pos * (1 + neg_ratio)
        else:
            n_total += n_pos
    us = np.empty(n_total, np.int64)
    its = np.empty(n_total, np.int64)
    rs = np.empty(n_total, np.float64)
    p = 0
    for u in range(n_users):
        lo, hi = indptr[u], indptr[u + 1]
        for q in range(lo, hi):
            us[p], its[p], rs[p] = u, indices[q], 1.0
            p += 1
        if hi - lo < n_items:
            for _ in range((hi - lo) * neg_ratio):
                us[p], its[p], rs[p] = u, _sample_negative(indptr, indices, u, n_items), 0.0
                p += 1
    order = np.random.permutation(n_total)
    for q in order:
        logmf_step(X, Y, bu, bi, us[q], its[q], rs[q], alpha, lr, reg)


class LogisticMF(Recommender):
    name = "logisticmf"
    space = HyperParamSpace((
        Param("factors", "int", 8, 256),
        Param("lr", "log", 1e-4, 0.5),
        Param("reg", "log", 1e-6, 0.1),
        Param("epochs", "int", 5, 60),
        Param("neg_ratio", "int", 1, 10),
    ))
    defaults = {"factors": 30, "lr": 0.05, "reg": 1e-4, "epochs": 20, "neg_ratio": 3}
    alpha = 1.0

    def _fit(self, train, rng):
        f = self.params["factors"]
        X = init_factors(rng, train.shape[0], f)
        Y = init_factors(rng, train.shape[1], f)
        bu = np.zeros(train.shape[0])
        bi = np.zeros(train.shape[1])
        indptr = train.indptr.astype(np.int64)
        indices = train.indices.astype(np.int64)
        for _ in range(self.params["epochs"]):
            seed = int(rng.integers(2**31 - 1))
            _logmf_epoch(X, Y, bu, bi, indptr, indices, int(self.params["neg_ratio"]), self.alpha,
                         float(self.params["lr"]), float(self.params["reg"]), seed)
            check_finite(X, Y, bu, bi)
        self.user_factors, self.item_factors = X, Y
        self.user_bias, self.item_bias = bu, bi

    def _raw_scores(self, users):
        return self.user_factors[users] @ self.item_factors.T + self.user_bias[users, None] + self.item_bias[None, :]

    def state_blocks(self):
        return {"user_factors": self.user_factors, "item_factors": self.item_factors,
                "user_bias": self.user_bias, "item_bias": self.item_bias}
