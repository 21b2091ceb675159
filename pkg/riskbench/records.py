"""
Module holds the model identity and the per-run record shared by the campaign simulator, the
run store and the metrics
"""
import hashlib
import json
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from riskbench.acquisition import AcquisitionSpec
from riskbench.encodings import ONE_HOT
from riskbench.surrogates import SurrogateSpec

BASELINE_ID = "random"
COMPLETED = "completed"
FAILED = "failed"

# (model id, landscape, seed, is_baseline, config digest)
RunKey = Tuple[str, str, int, bool, str]


@dataclass(frozen=True)
class ModelSpec:
    """ One benchmark model: surrogate x acquisition x encoding

    """
    surrogate: SurrogateSpec
    acquisition: AcquisitionSpec
    encoding: str = ONE_HOT

    @property
    def model_id(self) -> str:
        """ Identifier independent of tuned hyperparameters, e.g. "gp/ei/one-hot"

        :return: Model id
        """
        return "%s/%s/%s" % (self.surrogate.kind, self.acquisition.kind, self.encoding)

    def with_surrogate(self, surrogate: SurrogateSpec) -> "ModelSpec":
        return ModelSpec(surrogate=surrogate, acquisition=self.acquisition, encoding=self.encoding)

    def to_dict(self) -> Dict[str, Any]:
        return {"surrogate": self.surrogate.to_dict(), "acquisition": self.acquisition.to_dict(),
                "encoding": self.encoding}

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "ModelSpec":
        return ModelSpec(surrogate=SurrogateSpec.from_dict(data["surrogate"]),
                         acquisition=AcquisitionSpec.from_dict(data["acquisition"]),
                         encoding=data.get("encoding", ONE_HOT))


@dataclass(frozen=True)
class RunRecord:
    """ Outcome of one campaign or baseline run

    acquired[k] holds the landscape indices acquired at iteration k (k=0 is the seed pool) and
    payoff_curve[k] the best ground-truth normalized fitness acquired up to k. Failed runs keep
    the iterations completed before the failure.
    """
    model_id: str
    landscape: str
    seed: int
    acquired: Tuple[Tuple[int, ...], ...]
    payoff_curve: Tuple[float, ...]
    is_baseline: bool = False
    model: Optional[ModelSpec] = None
    status: str = COMPLETED
    diagnostic: str = ""
    config_digest: str = ""

    @property
    def key(self) -> RunKey:
        return self.model_id, self.landscape, int(self.seed), bool(self.is_baseline), self.config_digest

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED

    @property
    def n_cycles(self) -> int:
        """ Number of optimization cycles K run after the seed pool

        :return: K
        """
        return len(self.acquired) - 1

    @property
    def final_fitness(self) -> float:
        return self.payoff_curve[-1]

    def all_acquired(self) -> np.ndarray:
        """ Every acquired index across iterations

        :return: int64 array
        """
        if not self.acquired:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.asarray(batch, dtype=np.int64) for batch in self.acquired])

    def cumulative_counts(self) -> np.ndarray:
        """ Number of variants acquired through each iteration

        :return: int array of length K + 1
        """
        return np.cumsum([len(batch) for batch in self.acquired])

    def to_dict(self) -> Dict[str, Any]:
        return {"model_id": self.model_id, "landscape": self.landscape, "seed": int(self.seed),
                "is_baseline": bool(self.is_baseline),
                "model": None if self.model is None else self.model.to_dict(),
                "acquired": [[int(i) for i in batch] for batch in self.acquired],
                "payoff_curve": [float(v) for v in self.payoff_curve],
                "status": self.status, "diagnostic": self.diagnostic, "config_digest": self.config_digest}

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "RunRecord":
        model = data.get("model")
        return RunRecord(model_id=data["model_id"], landscape=data["landscape"], seed=int(data["seed"]),
                         acquired=tuple(tuple(int(i) for i in batch) for batch in data["acquired"]),
                         payoff_curve=tuple(float(v) for v in data["payoff_curve"]),
                         is_baseline=bool(data["is_baseline"]),
                         model=None if model is None else ModelSpec.from_dict(model),
                         status=data.get("status", COMPLETED), diagnostic=data.get("diagnostic", ""),
                         config_digest=data.get("config_digest", ""))

    def digest(self) -> str:
        """ Content hash of the serialized record

        :return: Hex SHA-256
        """
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()
