"""
Data Models
Preprocessing options and the fitted preprocessing specification
"""

import hashlib
import json
from typing import Dict, List

from pydantic import BaseModel, Field, model_validator


class PreprocessOptions(BaseModel):
    """Switches for the ambiguous parts of the preprocessing pipeline"""
    group_secondary_diagnoses: bool = Field(default=False, description="ICD9-group diag_2 and diag_3 too")
    ordinal_age: bool = Field(default=False, description="Age brackets as an ordinal numeric instead of one-hot")
    train_ratio: float = Field(default=0.75, gt=0, lt=1, description="Train share of the split")


class NumericStats(BaseModel):
    """Train-split statistics of one numeric column"""
    min: float
    max: float
    median: float

    @model_validator(mode="after")
    def validate_range(self):
        if self.min > self.max:
            raise ValueError(f"Fitted min {self.min} exceeds max {self.max}")
        return self


class PreprocessSpec(BaseModel):
    """Everything preprocess_apply needs, fitted on the train split only"""
    dropped_columns: List[str] = Field(..., description="Columns removed before fitting")
    numeric: Dict[str, NumericStats] = Field(default_factory=dict, description="Min-max scaling per numeric column")
    vocabularies: Dict[str, List[str]] = Field(default_factory=dict, description="One-hot vocabulary per categorical")
    icd9_columns: List[str] = Field(default_factory=list, description="Diagnosis columns mapped to ICD9 groups")
    label_column: str = Field(default="readmitted")
    positive_label: str = Field(default="<30", description="Label is 1 iff the label column equals this value")
    options: PreprocessOptions = Field(default_factory=PreprocessOptions)

    @property
    def feature_names(self) -> List[str]:
        names = list(self.numeric)
        for column, vocabulary in self.vocabularies.items():
            names.extend(f"{column}={value}" for value in vocabulary)
        return names

    @property
    def dimension(self) -> int:
        return len(self.numeric) + sum(len(v) for v in self.vocabularies.values())

    def to_text(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)

    @classmethod
    def from_text(cls, text: str) -> "PreprocessSpec":
        return cls.model_validate_json(text)

    def digest(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()
