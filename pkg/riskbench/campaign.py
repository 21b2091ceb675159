"""
Module simulates seeded pool-based optimization campaigns and their paired random baselines
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
from tqdm import tqdm

from riskbench.acquisition import score, select_batch
from riskbench.encodings import EncodingMatrix
from riskbench.errors import BenchmarkError, PoolSizeError, PreconditionError, SchemaError
from riskbench.landscape_store import Landscape, SplitPlan
from riskbench.parallel_iter import iter_threaded
from riskbench.records import BASELINE_ID, COMPLETED, FAILED, ModelSpec, RunRecord
from riskbench.run_store import RunStore
from riskbench.surrogates import GridSearchCache, grid_search, prepare_encoding, train

logger = logging.getLogger(__name__)

# Per-cycle randomness streams mixed into np.random.SeedSequence([seed, cycle, stream])
TRAIN_STREAM = 1
THOMPSON_STREAM = 2
TIE_STREAM = 3
BASELINE_STREAM = 4
NOISE_STREAM = 5


@dataclass(frozen=True)
class CampaignConfig:
    """ Budget and seeding of every campaign in a grid

    observation_noise is the std of Gaussian noise added to the labels the surrogate sees;
    payoffs always use ground truth.
    """
    n_init: int = 96
    batch_size: int = 96
    n_cycles: int = 4
    seeds: Tuple[int, ...] = tuple(range(20))
    observation_noise: float = 0.0
    model: Optional[ModelSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(seed) for seed in self.seeds))
        if self.n_init < 1 or self.batch_size < 1 or self.n_cycles < 0:
            raise SchemaError("campaign needs n_init >= 1, batch_size >= 1 and n_cycles >= 0")
        if any(seed < 0 for seed in self.seeds):
            raise SchemaError("seeds must be nonnegative")
        if self.observation_noise < 0:
            raise SchemaError("observation_noise must be nonnegative")

    @property
    def budget(self) -> int:
        """ Total acquisitions n_init + b * K

        :return: Budget
        """
        return self.n_init + self.batch_size * self.n_cycles

    def validate(self, pool_size: int):
        """ Check the budget fits the campaign pool

        :param pool_size: |campaign_pool|
        :raises: PoolSizeError when it does not
        """
        if self.budget > pool_size:
            raise PoolSizeError("budget %d + %d x %d = %d exceeds campaign pool of %d"
                                % (self.n_init, self.batch_size, self.n_cycles, self.budget, pool_size))

    def digest(self, landscape: Optional[Landscape] = None, split: Optional[SplitPlan] = None) -> str:
        """ Hash of everything a run outcome depends on besides the model and seed

        :param landscape: Landscape folded into the hash
        :param split: Split folded into the hash
        :return: Hex SHA-256 (16 characters)
        """
        payload = {"n_init": self.n_init, "batch_size": self.batch_size, "n_cycles": self.n_cycles,
                   "observation_noise": self.observation_noise,
                   "landscape": None if landscape is None else landscape.digest(),
                   "split": None if split is None else split.digest()}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class CampaignContext:
    """ Everything the grid needs about one landscape

    """
    landscape: Landscape
    split: SplitPlan
    encodings: Dict[str, EncodingMatrix]
    cache: Optional[GridSearchCache] = None


@dataclass(frozen=True)
class _Job:
    context: CampaignContext = field(compare=False)
    seed: int
    model: Optional[ModelSpec] = None


def stream_seed(seed: int, cycle: int, stream: int) -> int:
    """ Independent seed for one (run seed, cycle, purpose) triple

    :param seed: Run seed
    :param cycle: Iteration index
    :param stream: Purpose constant
    :return: 32-bit seed
    """
    return int(np.random.SeedSequence([int(seed), int(cycle), int(stream)]).generate_state(1)[0])


def seed_pool(config: CampaignConfig, split: SplitPlan, seed: int) -> np.ndarray:
    """ Iteration-0 acquisitions, shared by every model and the baseline under the same seed

    :param config: Campaign config
    :param split: Split providing the campaign pool
    :param seed: Run seed
    :return: n_init landscape indices
    """
    rng = np.random.default_rng(seed)
    return rng.choice(np.asarray(split.campaign_pool), size=config.n_init, replace=False)


def _observed_labels(config: CampaignConfig, landscape: Landscape, seed: int) -> np.ndarray:
    if config.observation_noise <= 0:
        return landscape.norm_fitness
    rng = np.random.default_rng(stream_seed(seed, 0, NOISE_STREAM))
    return landscape.norm_fitness + rng.normal(0.0, config.observation_noise, size=len(landscape))


def _payoff_curve(landscape: Landscape, acquired: Sequence[Sequence[int]]) -> Tuple[float, ...]:
    best = np.maximum.accumulate([landscape.norm_fitness[np.asarray(batch, dtype=np.int64)].max()
                                  for batch in acquired])
    return tuple(float(value) for value in best)


def run_campaign(config: CampaignConfig, landscape: Landscape, split: SplitPlan, encoding: EncodingMatrix,
                 seed: int, model: Optional[ModelSpec] = None) -> RunRecord:
    """ One optimization campaign over the campaign pool

    Each cycle retrains the surrogate from scratch on every acquired (encoding, label) pair,
    scores all unacquired pool members and acquires the top batch. A surrogate failure ends the
    run with status "failed" and the iterations completed so far.

    :param config: Campaign config
    :param landscape: Landscape
    :param split: Split providing the campaign pool
    :param encoding: Encoding named by the model
    :param seed: Run seed
    :param model: Model to run, defaults to config.model
    :raises: PoolSizeError for a budget beyond the pool, PreconditionError without a model
    :return: RunRecord
    """
    model = model or config.model
    if model is None:
        raise PreconditionError("run_campaign needs a model")
    if encoding.name != model.encoding:
        raise SchemaError("model %s expects encoding %r, got %r" % (model.model_id, model.encoding, encoding.name))
    pool = np.asarray(split.campaign_pool, dtype=np.int64)
    config.validate(len(pool))
    labels = _observed_labels(config, landscape, seed)
    acquired: List[Tuple[int, ...]] = [tuple(int(i) for i in seed_pool(config, split, seed))]
    taken = np.zeros(len(landscape), dtype=bool)
    taken[list(acquired[0])] = True
    status, diagnostic = COMPLETED, ""
    for cycle in range(1, config.n_cycles + 1):
        fit_rows = np.concatenate([np.asarray(batch, dtype=np.int64) for batch in acquired])
        candidates = pool[~taken[pool]]
        try:
            inputs = prepare_encoding(model.surrogate.kind, encoding, fit_rows)
            surrogate = train(model.surrogate, inputs.rows(fit_rows), labels[fit_rows],
                              stream_seed(seed, cycle, TRAIN_STREAM))
            pred = surrogate.predict(inputs.rows(candidates))
            scores = score(model.acquisition, pred, float(labels[fit_rows].max()),
                           rng_seed=stream_seed(seed, cycle, THOMPSON_STREAM) + model.acquisition.rng_seed)
            chosen = candidates[select_batch(scores, config.batch_size, stream_seed(seed, cycle, TIE_STREAM))]
        # torch reports numerical failures as RuntimeError
        except (BenchmarkError, ArithmeticError, RuntimeError) as err:
            status, diagnostic = FAILED, "cycle %d: %s: %s" % (cycle, type(err).__name__, err)
            logger.warning("Run %s on %s (seed %d) failed at %s", model.model_id, landscape.name, seed, diagnostic)
            break
        taken[chosen] = True
        acquired.append(tuple(int(i) for i in chosen))
        logger.debug("%s seed %d cycle %d: best so far %.4f", model.model_id, seed, cycle,
                     landscape.norm_fitness[taken].max())
    return RunRecord(model_id=model.model_id, landscape=landscape.name, seed=int(seed), acquired=tuple(acquired),
                     payoff_curve=_payoff_curve(landscape, acquired), is_baseline=False, model=model,
                     status=status, diagnostic=diagnostic, config_digest=config.digest(landscape, split))


def run_random_baseline(config: CampaignConfig, landscape: Landscape, split: SplitPlan, seed: int) -> RunRecord:
    """ Uniform random acquisition after the shared seed pool

    :param config: Campaign config
    :param landscape: Landscape
    :param split: Split providing the campaign pool
    :param seed: Run seed
    :raises: PoolSizeError for a budget beyond the pool
    :return: RunRecord with is_baseline set
    """
    pool = np.asarray(split.campaign_pool, dtype=np.int64)
    config.validate(len(pool))
    acquired: List[Tuple[int, ...]] = [tuple(int(i) for i in seed_pool(config, split, seed))]
    taken = np.zeros(len(landscape), dtype=bool)
    taken[list(acquired[0])] = True
    for cycle in range(1, config.n_cycles + 1):
        remaining = pool[~taken[pool]]
        rng = np.random.default_rng(stream_seed(seed, cycle, BASELINE_STREAM))
        chosen = rng.choice(remaining, size=config.batch_size, replace=False)
        taken[chosen] = True
        acquired.append(tuple(int(i) for i in chosen))
    return RunRecord(model_id=BASELINE_ID, landscape=landscape.name, seed=int(seed), acquired=tuple(acquired),
                     payoff_curve=_payoff_curve(landscape, acquired), is_baseline=True, model=None,
                     config_digest=config.digest(landscape, split))


def resolve_model(model: ModelSpec, context: CampaignContext, tune: bool = False, jobs: int = 1) -> ModelSpec:
    """ Replace the model's surrogate spec with the tuned one for a landscape

    :param model: Model with a default or explicit surrogate spec
    :param context: Landscape context holding the grid-search cache
    :param tune: Run the grid search when the cache has no entry
    :param jobs: Worker threads for the grid search
    :return: ModelSpec carrying the tuned spec, or the input unchanged without a cache entry
    """
    if context.cache is None:
        return model
    encoding = context.encodings[model.encoding]
    tuned = context.cache.get(context.landscape.digest(), encoding.name, model.surrogate.kind)
    if tuned is None and tune:
        tuned = grid_search(model.surrogate.kind, context.landscape, context.split, encoding, cache=context.cache,
                            jobs=jobs)
    if tuned is None:
        return model
    return model.with_surrogate(tuned)


def _execute(job: _Job, config: CampaignConfig) -> RunRecord:
    context = job.context
    if job.model is None:
        return run_random_baseline(config, context.landscape, context.split, job.seed)
    return run_campaign(config, context.landscape, context.split, context.encodings[job.model.encoding],
                        job.seed, model=job.model)


def run_grid(models: Sequence[ModelSpec], contexts: Iterable[CampaignContext], config: CampaignConfig,
             store: Optional[RunStore] = None, jobs: int = 1, tune: bool = False,
             progress: bool = False) -> List[RunRecord]:
    """ Every (model, landscape, seed) run plus one paired baseline per (landscape, seed)

    Runs already in the store under the same key are not recomputed. New records are appended to
    the store from the calling thread as workers finish.

    :param models: Models to run
    :param contexts: One context per landscape
    :param config: Campaign config, seeds included
    :param store: Optional persistent store
    :param jobs: Worker threads
    :param tune: Grid-search surrogates missing from a context cache before running
    :param progress: Show a progress bar on standard error
    :return: Records of the grid, stored ones included, sorted by landscape, model and seed
    """
    planned: List[_Job] = []
    existing: Dict[tuple, RunRecord] = {}
    missing_cache = set()
    for context in contexts:
        landscape = context.landscape
        config.validate(len(context.split.campaign_pool))
        digest = config.digest(landscape, context.split)
        stored = {record.key: record for record in store.load(landscape.name)} if store is not None else {}
        resolved = []
        for model in models:
            if model.encoding not in context.encodings:
                logger.warning("Skipping %s on %s: encoding %r not configured", model.model_id, landscape.name,
                               model.encoding)
                continue
            tuned = resolve_model(model, context, tune=tune, jobs=jobs)
            if tuned is model and (model.surrogate.kind, model.encoding) not in missing_cache:
                missing_cache.add((model.surrogate.kind, model.encoding))
                logger.warning("No tuned %s spec for %s / %s; using its defaults", model.surrogate.kind,
                               landscape.name, model.encoding)
            resolved.append(tuned)
        for seed in config.seeds:
            for model in [None] + resolved:
                model_id = BASELINE_ID if model is None else model.model_id
                key = (model_id, landscape.name, seed, model is None, digest)
                if key in stored:
                    existing[key] = stored[key]
                else:
                    planned.append(_Job(context=context, seed=seed, model=model))
    logger.info("Grid: %d runs to compute, %d reused from the store", len(planned), len(existing))

    if jobs > 1:
        torch.set_num_threads(1)
    records = list(existing.values())
    runner = iter_threaded(jobs, ordered=False, job=planned)(_execute)
    with tqdm(total=len(planned), desc="campaigns", disable=not progress) as bar:
        for record in (runner(config=config) if planned else ()):
            if store is not None:
                store.append(record)
            records.append(record)
            bar.update(1)
    failed = sum(1 for record in records if not record.completed)
    if failed:
        logger.warning("%d of %d runs failed", failed, len(records))
    return sorted(records, key=lambda r: (r.landscape, not r.is_baseline, r.model_id, r.seed))
