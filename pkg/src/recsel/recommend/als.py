"""Confidence-weighted implicit-feedback matrix factorisation.

Both models minimise

    sum_{u,i} c_ui (p_ui - x_u . y_i)^2 + reg * (|X|^2 + |Y|^2),  c_ui = 1 + alpha r_ui

on binary data. :class:`ImplicitMF` solves each ridge subproblem exactly
(Cholesky); :class:`ConjugateGradientALS` runs a few warm-started conjugate
gradient steps per row instead.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from numba import njit

from .base import FitFailure, HyperParamSpace, Param, Recommender, check_finite, init_factors


def als_objective(train: sp.csr_matrix, X: np.ndarray, Y: np.ndarray, alpha: float, reg: float) -> float:
    """Objective value without materialising the dense U x I score matrix."""
    coo = train.tocoo()
    s_obs = np.einsum("ij,ij->i", X[coo.row], Y[coo.col])
    all_sq = float(np.sum((X.T @ X) * (Y.T @ Y)))
    # sum over all cells of (p - s)^2 plus the extra alpha weight on observed cells
    loss = all_sq - 2.0 * s_obs.sum() + len(s_obs) + alpha * np.sum((1.0 - s_obs) ** 2)
    return float(loss + reg * (np.sum(X * X) + np.sum(Y * Y)))


def _solve_exact(M: sp.csr_matrix, other: np.ndarray, alpha: float, reg: float) -> np.ndarray:
    """Row-by-row Cholesky solves; the plain reference for :func:`_solve_rows`."""
    f = other.shape[1]
    G = other.T @ other + reg * np.eye(f)
    out = np.zeros((M.shape[0], f))
    for r in range(M.shape[0]):
        idx = M.indices[M.indptr[r]:M.indptr[r + 1]]
        if len(idx) == 0:
            continue
        Yo = other[idx]
        A = G + alpha * (Yo.T @ Yo)
        b = (1.0 + alpha) * Yo.sum(axis=0)
        try:
            out[r] = sla.cho_solve(sla.cho_factor(A, check_finite=False), b, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise FitFailure(f"ridge solve failed: {e}") from e
    return out


@njit(cache=True)
def _solve_rows(indptr, indices, other, alpha, reg):
    """Exact ridge solve for every row, choosing the cheaper of two identities.

    With G = Y'Y + reg I, row r solves (G + alpha Yo'Yo) x = (1 + alpha) Yo'1.
    For rows with fewer observations than factors the Woodbury form is used:
    with W = Y G^-1 and S = I/alpha + Wo Yo', x = (1 + alpha)/alpha * Wo' S^-1 1.
    """
    n_rows = len(indptr) - 1
    f = other.shape[1]
    G = other.T @ other
    for j in range(f):
        G[j, j] += reg
    W = np.linalg.solve(G, other.T).T.copy()
    out = np.zeros((n_rows, f))
    for r in range(n_rows):
        lo, hi = indptr[r], indptr[r + 1]
        n = hi - lo
        if n == 0:
            continue
        idx = indices[lo:hi]
        Yo = np.empty((n, f))
        for p in range(n):
            Yo[p] = other[idx[p]]
        if n * n * (f + n / 3.0) < n * f * f + f * f * f / 3.0:
            Wo = np.empty((n, f))
            for p in range(n):
                Wo[p] = W[idx[p]]
            S = Wo @ Yo.T
            for p in range(n):
                S[p, p] += 1.0 / alpha
            z = np.linalg.solve(S, np.ones(n))
            out[r] = ((1.0 + alpha) / alpha) * (Wo.T @ z)
        else:
            A = G + alpha * (Yo.T @ Yo)
            b = (1.0 + alpha) * Yo.sum(axis=0)
            out[r] = np.linalg.solve(A, b)
    return out


@njit(cache=True)
def _solve_cg(indptr, indices, this, other, alpha, reg, steps):
    f = other.shape[1]
    G = other.T @ other
    for j in range(f):
        G[j, j] += reg
    for r in range(this.shape[0]):
        lo, hi = indptr[r], indptr[r + 1]
        x = this[r].copy()
        # residual b - A x with A = G + alpha * Yo^T Yo, b = (1 + alpha) * sum Yo
        res = -(G @ x)
        for p in range(lo, hi):
            y = other[indices[p]]
            res += ((1.0 + alpha) - alpha * np.dot(y, x)) * y
        d = res.copy()
        rs = np.dot(res, res)
        for _ in range(steps):
            if rs < 1e-20:
                break
            Ad = G @ d
            for p in range(lo, hi):
                y = other[indices[p]]
                Ad += alpha * np.dot(y, d) * y
            a = rs / np.dot(d, Ad)
            x += a * d
            res -= a * Ad
            rs_new = np.dot(res, res)
            d = res + (rs_new / rs) * d
            rs = rs_new
        this[r] = x


class _ALSBase(Recommender):
    defaults = {"factors": 50, "reg": 0.1, "alpha": 40.0, "sweeps": 15}

    def _fit(self, train, rng):
        f = self.params["factors"]
        self.user_factors = init_factors(rng, train.shape[0], f)
        self.item_factors = init_factors(rng, train.shape[1], f)
        self.objective_history: list[float] = []
        track = getattr(self, "track_objective", False)
        trans = train.T.tocsr()
        if track:
            self.objective_history.append(
                als_objective(train, self.user_factors, self.item_factors, self.params["alpha"], self.params["reg"]))
        for _ in range(self.params["sweeps"]):
            self._sweep(train, trans)
            check_finite(self.user_factors, self.item_factors)
            if track:
                self.objective_history.append(
                    als_objective(train, self.user_factors, self.item_factors, self.params["alpha"], self.params["reg"]))

    def _raw_scores(self, users):
        return self.user_factors[users] @ self.item_factors.T

    def state_blocks(self):
        return {"user_factors": self.user_factors, "item_factors": self.item_factors}


class ImplicitMF(_ALSBase):
    name = "implicitmf_als"
    space = HyperParamSpace((
        Param("factors", "int", 8, 256),
        Param("reg", "log", 1e-4, 1.0),
        Param("alpha", "real", 1.0, 100.0),
        Param("sweeps", "int", 5, 30),
    ))

    def _sweep(self, train, trans):
        a, r = self.params["alpha"], self.params["reg"]
        self.user_factors = _solve_rows(train.indptr, train.indices, self.item_factors, float(a), float(r))
        self.item_factors = _solve_rows(trans.indptr, trans.indices, self.user_factors, float(a), float(r))


class ConjugateGradientALS(_ALSBase):
    name = "als"
    space = HyperParamSpace((
        Param("factors", "int", 8, 256),
        Param("reg", "log", 1e-4, 1.0),
        Param("alpha", "real", 1.0, 100.0),
        Param("sweeps", "int", 5, 30),
        Param("cg_steps", "int", 2, 5),
    ))
    defaults = {**_ALSBase.defaults, "cg_steps": 3}

    def _sweep(self, train, trans):
        a, r, s = float(self.params["alpha"]), float(self.params["reg"]), int(self.params["cg_steps"])
        _solve_cg(train.indptr, train.indices, self.user_factors, self.item_factors, a, r, s)
        _solve_cg(trans.indptr, trans.indices, self.item_factors, self.user_factors, a, r, s)
