"""
Module holds the random forest surrogate; uncertainty is the spread of per-tree predictions
"""
import numpy as np
from sklearn.ensemble import RandomForestRegressor

from riskbench.surrogates.base import SurrogateSpec, TrainedSurrogate


class ForestSurrogate(TrainedSurrogate):
    """
    Fitted sklearn forest on raw encodings
    """

    def __init__(self, spec: SurrogateSpec, forest: RandomForestRegressor):
        super().__init__(spec, forest.n_features_in_)
        self.forest = forest

    @staticmethod
    def fit(spec: SurrogateSpec, X: np.ndarray, y: np.ndarray, rng_seed: int) -> "ForestSurrogate":
        # Tree sub-seeds derive from random_state, so the fit is deterministic for any n_jobs
        forest = RandomForestRegressor(n_estimators=int(spec["n_estimators"]), max_depth=spec["max_depth"],
                                       random_state=int(rng_seed) % (2 ** 32), n_jobs=1)
        forest.fit(X, y)
        return ForestSurrogate(spec, forest)

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        """ Prediction of every tree

        :param X: n x D rows
        :return: n_trees x n array
        """
        return np.stack([tree.predict(X) for tree in self.forest.estimators_])

    def _predict(self, X: np.ndarray):
        per_tree = self.tree_predictions(X)
        return per_tree.mean(axis=0), per_tree.std(axis=0)
