"""
Module has the per-(landscape, encoding) hyperparameter grid search and its on-disk cache
"""
import json
import logging
import math
import os
import tempfile
import threading
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from riskbench.encodings import EncodingMatrix
from riskbench.errors import BenchmarkError, PreconditionError, SchemaError, SearchFailureError
from riskbench.landscape_store import Landscape, SplitPlan
from riskbench.parallel_iter import iter_threaded
from riskbench.surrogates.base import KERNELS, SurrogateSpec, grid_specs
from riskbench.surrogates.training import prepare_encoding, train

logger = logging.getLogger(__name__)

CacheKey = Tuple[str, str, str]
ScoredPoint = Tuple[float, Tuple[float, int, int], SurrogateSpec]


class GridSearchCache:
    """
    JSON file of winning specs keyed by (landscape digest, encoding id, surrogate kind)

    Writes replace the file atomically; one instance may be shared between threads.
    """

    def __init__(self, path: Optional[str] = None):
        """ Open (or start) a cache

        :param path: JSON file, or None for an in-memory cache
        :raises: SchemaError for an unreadable cache file
        """
        self.path = path
        self._lock = threading.Lock()
        self._entries: Dict[CacheKey, dict] = {}
        if path is not None and os.path.exists(path):
            try:
                with open(path, "r", encoding="utf-8") as handle:
                    records = json.load(handle)["entries"]
                for record in records:
                    key = (record["landscape_digest"], record["encoding"], record["kind"])
                    self._entries[key] = record
            except (ValueError, KeyError, TypeError) as err:
                raise SchemaError("grid-search cache %s is unreadable: %s" % (path, err)) from err

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: CacheKey) -> bool:
        return key in self._entries

    def get(self, landscape_digest: str, encoding_id: str, kind: str) -> Optional[SurrogateSpec]:
        """ Cached winner

        :param landscape_digest: Landscape.digest()
        :param encoding_id: Encoding name
        :param kind: Surrogate kind
        :return: SurrogateSpec or None
        """
        record = self._entries.get((landscape_digest, encoding_id, kind))
        if record is None:
            return None
        return SurrogateSpec(kind, record["hyperparams"])

    def rmse(self, landscape_digest: str, encoding_id: str, kind: str) -> Optional[float]:
        record = self._entries.get((landscape_digest, encoding_id, kind))
        return None if record is None else record["rmse"]

    def put(self, landscape_digest: str, encoding_id: str, spec: SurrogateSpec, rmse: Optional[float]):
        """ Store a winner and persist the cache

        :param landscape_digest: Landscape.digest()
        :param encoding_id: Encoding name
        :param spec: Winning spec
        :param rmse: Test RMSE of the winner (None when no comparison was run)
        """
        record = {"landscape_digest": landscape_digest, "encoding": encoding_id, "kind": spec.kind,
                  "hyperparams": dict(spec.hyperparams), "rmse": rmse}
        with self._lock:
            self._entries[(landscape_digest, encoding_id, spec.kind)] = record
            self._save()

    def _save(self):
        if self.path is None:
            return
        directory = os.path.dirname(os.path.abspath(self.path))
        os.makedirs(directory, exist_ok=True)
        records = [self._entries[key] for key in sorted(self._entries)]
        handle, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
        with os.fdopen(handle, "w", encoding="utf-8") as stream:
            json.dump({"entries": records}, stream, indent=2, sort_keys=True)
        os.replace(tmp_path, self.path)


def _tie_key(spec: SurrogateSpec, position: int) -> Tuple[float, int, int]:
    learning_rate = spec.hyperparams.get("learning_rate", 0.0)
    kernel = spec.hyperparams.get("kernel_type")
    return learning_rate, KERNELS.index(kernel) if kernel in KERNELS else 0, position


def grid_search(kind: str, landscape: Landscape, split: SplitPlan, encoding: EncodingMatrix,
                cache: Optional[GridSearchCache] = None, grid: Optional[Sequence[SurrogateSpec]] = None,
                rng_seed: int = 0, jobs: int = 1) -> SurrogateSpec:
    """ Pick the spec of a surrogate kind with the lowest test RMSE

    Each candidate is trained on hyperparam_train and scored on hyperparam_test. Ties go to the
    smaller learning rate, then to the first-listed kernel. Failing candidates are skipped.

    :param kind: Surrogate kind
    :param landscape: Landscape providing labels
    :param split: Split providing the train/test rows
    :param encoding: Encoding of the landscape
    :param cache: Optional cache consulted first and updated with the winner
    :param grid: Candidate specs, defaults to the full grid of the kind
    :param rng_seed: Training seed shared by all candidates
    :param jobs: Worker threads scoring candidates
    :raises: PreconditionError for empty split parts, SearchFailureError if every candidate fails
    :return: Winning SurrogateSpec
    """
    if len(split.hyperparam_train) < 2 or len(split.hyperparam_test) == 0:
        raise PreconditionError("grid search needs at least 2 training and 1 test rows")
    digest = landscape.digest()
    if cache is not None:
        cached = cache.get(digest, encoding.name, kind)
        if cached is not None:
            logger.debug("Grid search cache hit for %s / %s / %s", landscape.name, encoding.name, kind)
            return cached
    candidates: List[SurrogateSpec] = list(grid) if grid is not None else grid_specs(kind)
    if not candidates:
        raise PreconditionError("grid must contain at least one spec")
    if len(candidates) == 1:
        winner, rmse = candidates[0], None
    else:
        winner, rmse = _score_grid(candidates, landscape, split, encoding, rng_seed, jobs)
    logger.info("Grid search %s / %s / %s: %s (test RMSE %s)", landscape.name, encoding.name, kind,
                json.dumps(winner.hyperparams, sort_keys=True), "n/a" if rmse is None else "%.4f" % rmse)
    if cache is not None:
        cache.put(digest, encoding.name, winner, rmse)
    return winner


def _score_grid(candidates: Sequence[SurrogateSpec], landscape: Landscape, split: SplitPlan,
                encoding: EncodingMatrix, rng_seed: int, jobs: int) -> Tuple[SurrogateSpec, float]:
    y_train = landscape.norm_fitness[split.hyperparam_train]
    y_test = landscape.norm_fitness[split.hyperparam_test]

    def score_point(position: int, spec: SurrogateSpec) -> Optional[ScoredPoint]:
        try:
            inputs = prepare_encoding(spec.kind, encoding, split.hyperparam_train)
            model = train(spec, inputs.rows(split.hyperparam_train), y_train, rng_seed)
            pred = model.predict(inputs.rows(split.hyperparam_test))
        # torch reports numerical failures as RuntimeError
        except (BenchmarkError, ArithmeticError, RuntimeError) as err:
            logger.warning("Grid point %s failed: %s", json.dumps(spec.hyperparams, sort_keys=True), err)
            return None
        rmse = float(np.sqrt(np.mean((pred.mean - y_test) ** 2)))
        logger.debug("Grid point %s: RMSE %.6f", json.dumps(spec.hyperparams, sort_keys=True), rmse)
        if not math.isfinite(rmse):
            return None
        return rmse, _tie_key(spec, position), spec

    runner = iter_threaded(jobs, ignore_types=(None,), position=range(len(candidates)), spec=candidates)(score_point)
    scored = list(runner())
    if not scored:
        raise SearchFailureError("all %d grid points of %s failed" % (len(candidates), candidates[0].kind))
    rmse, _, winner = min(scored, key=lambda item: (item[0], item[1]))
    return winner, rmse
