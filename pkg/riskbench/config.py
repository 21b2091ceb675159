"""
Module holds the experiment configuration: one JSON document describing landscapes, encodings,
the model grid, campaign budget, cost model and analysis settings
"""
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from riskbench.acquisition import ACQUISITION_KINDS, AcquisitionSpec
from riskbench.campaign import CampaignConfig
from riskbench.encodings import ONE_HOT
from riskbench.errors import ConfigError, SchemaError
from riskbench.landscape_store import CANONICAL_ALPHABET, SyntheticSpec
from riskbench.metrics import CostModel, METRICS
from riskbench.records import ModelSpec
from riskbench.surrogates import SURROGATE_KINDS, SurrogateSpec

logger = logging.getLogger(__name__)

GRID_CACHE_NAME = "grid_search.json"
RUNS_DIR_NAME = "runs"


@dataclass(frozen=True)
class LandscapeSource:
    """ A landscape CSV and how to read it

    """
    path: str
    name: Optional[str] = None
    wild_type: Optional[str] = None
    fixed_positions: Mapping[int, str] = field(default_factory=dict)
    sequence_column: str = "sequence"
    fitness_column: str = "fitness"
    alphabet: str = CANONICAL_ALPHABET

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> "LandscapeSource":
        data = dict(data)
        data["fixed_positions"] = {int(k): str(v) for k, v in data.get("fixed_positions", {}).items()}
        return LandscapeSource(**data)


@dataclass(frozen=True)
class ModelFilter:
    """ Which surrogates, acquisitions and encodings enter the grid; None selects all

    """
    surrogates: Optional[Tuple[str, ...]] = None
    acquisitions: Optional[Tuple[str, ...]] = None
    encodings: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        for name in ("surrogates", "acquisitions", "encodings"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(value))


@dataclass(frozen=True)
class AnalysisConfig:
    """ Settings of metric aggregation, ranking and bootstrap

    """
    alpha: float = 0.1
    percentile: float = 99.0
    n_bootstrap: int = 1000
    oob_rank_fraction: float = 0.8
    oob_cap: int = 10000
    confidence_level: float = 0.95
    top: int = 10
    metrics: Tuple[str, ...] = METRICS

    def __post_init__(self):
        object.__setattr__(self, "metrics", tuple(self.metrics))


@dataclass(frozen=True)
class BenchmarkConfig:
    """ Whole experiment in one value

    embeddings maps a landscape name to {encoding id: embedding file}. seed drives the data
    split and every bootstrap; campaign.seeds are the per-run seeds.
    """
    landscapes: Tuple[LandscapeSource, ...] = ()
    synthetic: Tuple[SyntheticSpec, ...] = ()
    embeddings: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    models: ModelFilter = ModelFilter()
    campaign: CampaignConfig = CampaignConfig()
    cost: CostModel = CostModel()
    analysis: AnalysisConfig = AnalysisConfig()
    output_dir: str = "riskbench_out"
    seed: int = 0
    jobs: int = 1

    @property
    def grid_cache_path(self) -> str:
        return os.path.join(self.output_dir, GRID_CACHE_NAME)

    @property
    def runs_dir(self) -> str:
        return os.path.join(self.output_dir, RUNS_DIR_NAME)

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> "BenchmarkConfig":
        """ Build from the JSON document

        :param data: Parsed JSON
        :raises: ConfigError for unknown sections or malformed values
        :return: BenchmarkConfig
        """
        known = {"landscapes", "synthetic", "embeddings", "models", "campaign", "cost", "analysis", "output_dir",
                 "seed", "jobs"}
        unknown = set(data).difference(known)
        if unknown:
            raise ConfigError("unknown config section(s): %s" % ", ".join(sorted(unknown)))
        try:
            campaign = dict(data.get("campaign", {}))
            if "n_seeds" in campaign:
                campaign["seeds"] = tuple(range(int(campaign.pop("n_seeds"))))
            return BenchmarkConfig(
                landscapes=tuple(LandscapeSource.from_dict(item) for item in data.get("landscapes", [])),
                synthetic=tuple(SyntheticSpec(**item) for item in data.get("synthetic", [])),
                embeddings={name: dict(files) for name, files in data.get("embeddings", {}).items()},
                models=ModelFilter(**data.get("models", {})),
                campaign=CampaignConfig(**campaign),
                cost=CostModel(**data.get("cost", {})),
                analysis=AnalysisConfig(**data.get("analysis", {})),
                output_dir=str(data.get("output_dir", "riskbench_out")),
                seed=int(data.get("seed", 0)),
                jobs=int(data.get("jobs", 1)))
        except (TypeError, ValueError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError("invalid config: %s" % err) from err

    @staticmethod
    def load(path: str) -> "BenchmarkConfig":
        """ Read a JSON config file

        :param path: File path
        :raises: ConfigError when missing or not valid JSON
        :return: BenchmarkConfig
        """
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except FileNotFoundError as err:
            raise ConfigError("config file not found: %s" % path) from err
        except ValueError as err:
            raise ConfigError("config file %s is not valid JSON: %s" % (path, err)) from err
        return BenchmarkConfig.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        campaign = {"n_init": self.campaign.n_init, "batch_size": self.campaign.batch_size,
                    "n_cycles": self.campaign.n_cycles, "seeds": list(self.campaign.seeds),
                    "observation_noise": self.campaign.observation_noise}
        landscapes = []
        for source in self.landscapes:
            item = asdict(source)
            item["fixed_positions"] = {str(k): v for k, v in sorted(source.fixed_positions.items())}
            landscapes.append(item)
        return {"landscapes": landscapes,
                "synthetic": [asdict(spec) for spec in self.synthetic],
                "embeddings": {name: dict(sorted(files.items())) for name, files in sorted(self.embeddings.items())},
                "models": {k: None if v is None else list(v) for k, v in asdict(self.models).items()},
                "campaign": campaign, "cost": asdict(self.cost),
                "analysis": {**asdict(self.analysis), "metrics": list(self.analysis.metrics)},
                "output_dir": self.output_dir, "seed": self.seed, "jobs": self.jobs}

    def digest(self) -> str:
        """ SHA-256 of the canonical JSON form, jobs and output_dir excluded

        :return: Hex digest (16 characters)
        """
        payload = self.to_dict()
        del payload["jobs"], payload["output_dir"]
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]

    def with_overrides(self, data: Sequence[str] = (), out: Optional[str] = None, jobs: Optional[int] = None,
                       seed: Optional[int] = None, top: Optional[int] = None) -> "BenchmarkConfig":
        """ Apply command-line switches

        :param data: Extra landscape CSVs
        :param out: Output directory
        :param jobs: Worker threads
        :param seed: Global seed
        :param top: Rows per ranking file
        :return: New BenchmarkConfig
        """
        updated = replace(self, landscapes=self.landscapes + tuple(LandscapeSource(path) for path in data))
        if out is not None:
            updated = replace(updated, output_dir=out)
        if jobs is not None:
            updated = replace(updated, jobs=jobs)
        if seed is not None:
            updated = replace(updated, seed=seed)
        if top is not None:
            updated = replace(updated, analysis=replace(updated.analysis, top=top))
        return updated

    def encoding_ids(self, landscape: Optional[str] = None) -> List[str]:
        """ One-hot plus the embedding ids configured for a landscape (or any landscape)

        :param landscape: Landscape name
        :return: Sorted encoding ids after the model filter, one-hot first
        """
        if landscape is None:
            extra = {eid for files in self.embeddings.values() for eid in files}
        else:
            extra = set(self.embeddings.get(landscape, {}))
        ids = [ONE_HOT] + sorted(extra.difference({ONE_HOT}))
        if self.models.encodings is not None:
            ids = [eid for eid in ids if eid in self.models.encodings]
        return ids

    def enumerate_models(self) -> List[ModelSpec]:
        """ Surrogates x acquisitions x encodings after filtering, with default surrogate specs

        :return: Models ordered by model id
        """
        surrogates = self.models.surrogates if self.models.surrogates is not None else SURROGATE_KINDS
        acquisitions = self.models.acquisitions if self.models.acquisitions is not None else ACQUISITION_KINDS
        models = [ModelSpec(SurrogateSpec(kind), AcquisitionSpec(acq), encoding)
                  for kind in surrogates for acq in acquisitions for encoding in self.encoding_ids()]
        return sorted(models, key=lambda model: model.model_id)

    def validate(self):
        """ Check referenced files exist and the grid selects at least one model

        :raises: ConfigError
        """
        if not self.landscapes and not self.synthetic:
            raise ConfigError("no landscapes configured; pass --data or a config with landscapes/synthetic")
        for source in self.landscapes:
            if not os.path.isfile(source.path):
                raise ConfigError("landscape file not found: %s" % source.path)
        for landscape, files in self.embeddings.items():
            for encoding_id, path in files.items():
                if not os.path.isfile(path):
                    raise ConfigError("embedding file %s for %s/%s not found" % (path, landscape, encoding_id))
        for name, allowed in (("surrogates", SURROGATE_KINDS), ("acquisitions", ACQUISITION_KINDS)):
            chosen = getattr(self.models, name)
            bad = [] if chosen is None else [value for value in chosen if value not in allowed]
            if bad:
                raise ConfigError("unknown %s in model filter: %s" % (name, ", ".join(bad)))
        unknown_metrics = [m for m in self.analysis.metrics if m not in METRICS]
        if unknown_metrics:
            raise ConfigError("unknown metric(s): %s" % ", ".join(unknown_metrics))
        if not self.enumerate_models():
            raise ConfigError("model filters select no model")
        if self.jobs < 1:
            raise ConfigError("jobs must be positive")
        if not 0 < self.analysis.alpha < 1 or not 0 < self.analysis.confidence_level < 1:
            raise ConfigError("alpha and confidence_level must lie in (0, 1)")
        if not 0 < self.analysis.percentile < 100:
            raise ConfigError("percentile must lie in (0, 100)")
        if self.analysis.top < 1:
            raise ConfigError("top must be positive")
        names = [source.name or os.path.splitext(os.path.basename(source.path))[0] for source in self.landscapes]
        names += [spec.label for spec in self.synthetic]
        if len(set(names)) != len(names):
            raise ConfigError("landscape names must be unique: %s" % ", ".join(sorted(names)))
        logger.debug("Config %s valid: %d landscape(s), %d model(s)", self.digest(), len(names),
                     len(self.enumerate_models()))


def load_config(path: Optional[str] = None) -> BenchmarkConfig:
    """ Config from a file, or the defaults when no file is given

    :param path: JSON config path
    :raises: ConfigError
    :return: BenchmarkConfig
    """
    if path is None:
        return BenchmarkConfig()
    try:
        return BenchmarkConfig.load(path)
    except SchemaError as err:
        raise ConfigError(str(err)) from err
