"""
Report Models
Evaluation reports, gradient-norm statistics, benchmark rows and run manifests
"""

import hashlib
import json
from datetime import datetime
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class EvalReport(BaseModel):
    """Threshold metrics and AUC of one scored split"""
    label: str = Field(default="test", description="Row label in tables")
    accuracy: float = Field(..., ge=0, le=1)
    auc: Optional[float] = Field(None, ge=0, le=1, description="None when one class is absent")
    recall: Optional[float] = Field(None, ge=0, le=1, description="None when there are no positives")
    threshold: float = Field(default=0.5)
    tp: int = Field(..., ge=0)
    fp: int = Field(..., ge=0)
    tn: int = Field(..., ge=0)
    fn: int = Field(..., ge=0)
    n: int = Field(..., ge=0)
    epsilon: Optional[float] = Field(None, description="Privacy spent by the training run")
    delta: Optional[float] = None

    @model_validator(mode="after")
    def validate_counts(self):
        if self.tp + self.fp + self.tn + self.fn != self.n:
            raise ValueError("Confusion counts must sum to n")
        if self.tp + self.fn > 0 and self.recall is not None:
            if abs(self.recall - self.tp / (self.tp + self.fn)) > 1e-12:
                raise ValueError("Recall disagrees with the confusion counts")
        return self


class GradNormStats(BaseModel):
    """Distribution of per-example gradient L2 norms"""
    label: str = Field(default="")
    median: float
    q1: float
    q3: float
    count: int = Field(..., gt=0)


class BenchRow(BaseModel):
    """One activation variant of the encrypted inference benchmark"""
    variant: str
    trials: int = Field(..., gt=0)
    median_seconds: float
    ct_mul: int
    plain_mul: int
    add: int

    @property
    def multiplicative(self) -> int:
        return self.ct_mul + self.plain_mul


class RunManifest(BaseModel):
    """Provenance of every artifact a subcommand writes"""
    subcommand: str
    config: Dict[str, object] = Field(default_factory=dict, description="Effective flags and settings")
    seeds: Dict[str, int] = Field(default_factory=dict)
    inputs: List[str] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list)
    wallclock_seconds: float = Field(default=0.0, ge=0)
    counters: Dict[str, int] = Field(default_factory=dict, description="Homomorphic op counters, when any")
    results: Dict[str, Optional[float]] = Field(default_factory=dict, description="Scalar results such as epsilon spent")
    created_at: datetime = Field(default_factory=datetime.utcnow)

    def config_digest(self) -> str:
        payload = json.dumps({"subcommand": self.subcommand, "config": self.config, "seeds": self.seeds},
                             sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def digest(self) -> str:
        """Digest of the reproducible part: wallclock and timestamp excluded"""
        payload = self.model_dump(mode="json", exclude={"wallclock_seconds", "created_at"})
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()
