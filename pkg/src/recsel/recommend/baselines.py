"""Non-personalised baselines: random scores and item popularity."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .._seeding import derive_seed
from .base import HyperParamSpace, Param, Recommender


class RandomScores(Recommender):
    """Uniform random score per (user, item), reproducible from the fit seed."""

    name = "random"

    def _fit(self, train, rng):
        pass

    def _raw_scores(self, users):
        return np.stack([np.random.default_rng(derive_seed(self.seed, "random", int(u))).random(self.n_items)
                         for u in users])


class PopScore(Recommender):
    name = "popscore"
    space = HyperParamSpace((Param("mode", "cat", choices=("count", "quantile")),))
    defaults = {"mode": "count"}

    def _fit(self, train, rng):
        counts = np.bincount(train.indices, minlength=train.shape[1]).astype(np.float64)
        if self.params["mode"] == "quantile":
            self.item_scores = rankdata(counts, method="max") / len(counts)
        else:
            self.item_scores = counts

    def _raw_scores(self, users):
        return np.broadcast_to(self.item_scores, (len(users), self.n_items))

    def state_blocks(self):
        return {"item_scores": self.item_scores}
