"""
Data Pipeline Service
Diabetes readmission CSV ingestion, train-only preprocessing fit, min-max scaling,
seeded splitting and a synthetic generator for dataset-free runs
"""

import hashlib
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.special import expit

from models.data_models import NumericStats, PreprocessOptions, PreprocessSpec

logger = logging.getLogger(__name__)

ID_COLUMNS = ["encounter_id", "patient_nbr"]
DROPPED_COLUMNS = ["weight", "payer_code", "medical_specialty"]
NUMERIC_COLUMNS = [
    "time_in_hospital", "num_lab_procedures", "num_procedures", "num_medications",
    "number_outpatient", "number_emergency", "number_inpatient", "number_diagnoses",
]
CATEGORICAL_COLUMNS = [
    "race", "gender", "age", "admission_type_id", "discharge_disposition_id",
    "admission_source_id", "max_glu_serum", "A1Cresult", "change", "diabetesMed",
]
MEDICATION_COLUMNS = [
    "metformin", "repaglinide", "nateglinide", "chlorpropamide", "glimepiride", "acetohexamide",
    "glipizide", "glyburide", "tolbutamide", "pioglitazone", "rosiglitazone", "acarbose",
    "miglitol", "troglitazone", "tolazamide", "examide", "citoglipton", "insulin",
    "glyburide-metformin", "glipizide-metformin", "glimepiride-pioglitazone",
    "metformin-rosiglitazone", "metformin-pioglitazone",
]
DIAGNOSIS_COLUMNS = ["diag_1", "diag_2", "diag_3"]
LABEL_COLUMN = "readmitted"
REQUIRED_COLUMNS = NUMERIC_COLUMNS + CATEGORICAL_COLUMNS + DIAGNOSIS_COLUMNS + [LABEL_COLUMN]
MISSING = "__missing__"

ICD9_GROUPS = [
    "circulatory", "respiratory", "digestive", "diabetes", "injury",
    "musculoskeletal", "genitourinary", "neoplasms", "other", "missing",
]
# (low, high) inclusive ranges of the integer part of numeric ICD9 codes
ICD9_RANGES = [
    ("circulatory", [(390, 459), (785, 785)]),
    ("respiratory", [(460, 519), (786, 786)]),
    ("digestive", [(520, 579), (787, 787)]),
    ("injury", [(800, 999)]),
    ("musculoskeletal", [(710, 739)]),
    ("genitourinary", [(580, 629), (788, 788)]),
    ("neoplasms", [(140, 239)]),
]
_AGE_BRACKET = re.compile(r"\[(\d+)-(\d+)\)")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix in [0, 1], binary labels and feature names"""
    features: np.ndarray
    labels: np.ndarray
    feature_names: Tuple[str, ...]

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2 or features.shape[0] != labels.shape[0]:
            raise DataError(f"Features {features.shape} do not match labels {labels.shape}")
        if len(self.feature_names) != features.shape[1]:
            raise DataError(f"{len(self.feature_names)} names for {features.shape[1]} features")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    @property
    def positive_rate(self) -> float:
        return float(self.labels.mean()) if len(self) else 0.0

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.feature_names)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        h.update("\x1f".join(self.feature_names).encode("utf-8"))
        return h.hexdigest()


# -- ingestion ----------------------------------------------------------

def load_records(path: Union[str, Path]) -> pd.DataFrame:
    """
    Read the readmission CSV with '?' as the missing marker

    Args:
        path: CSV file path

    Returns:
        DataFrame with numeric columns as floats and everything else as strings
    """
    try:
        records = pd.read_csv(
            path, na_values=["?"], keep_default_na=True, low_memory=False,
            dtype={c: str for c in DIAGNOSIS_COLUMNS},
        )
    except FileNotFoundError as e:
        logger.error(f"Dataset not found: {str(e)}")
        raise DataError(f"Dataset not found: {path}")
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        logger.error(f"Cannot parse {path}: {str(e)}")
        raise DataError(f"Cannot parse {path}: {str(e)}")

    missing = [c for c in REQUIRED_COLUMNS if c not in records.columns]
    if missing:
        logger.error(f"Dataset {path} lacks columns {missing}")
        raise SchemaError(f"Missing required columns: {', '.join(missing)}")

    for column in NUMERIC_COLUMNS:
        records[column] = pd.to_numeric(records[column], errors="coerce").astype(np.float64)
    for column in CATEGORICAL_COLUMNS + DIAGNOSIS_COLUMNS + MEDICATION_COLUMNS + [LABEL_COLUMN]:
        if column in records.columns:
            records[column] = records[column].astype("object").where(records[column].notna(), None)
            records[column] = records[column].map(lambda v: None if v is None else str(v).strip())
    logger.info(f"Loaded {len(records)} records with {len(records.columns)} columns from {path}")
    return records


def icd9_group(code: Optional[str]) -> str:
    """Map an ICD9 code to one of ten diagnosis groups"""
    if code is None or (isinstance(code, float) and math.isnan(code)):
        return "missing"
    code = str(code).strip()
    if not code or code == "?":
        return "missing"
    if code[0] in "VvEe":
        return "other"
    try:
        value = float(code)
    except ValueError:
        return "missing"
    if math.floor(value) == 250:
        return "diabetes"
    whole = int(math.floor(value))
    for group, ranges in ICD9_RANGES:
        if any(low <= whole <= high for low, high in ranges):
            return group
    return "other"


def age_lower_bound(bracket: Optional[str]) -> float:
    if bracket is None:
        return float("nan")
    match = _AGE_BRACKET.match(str(bracket))
    return float(match.group(1)) if match else float("nan")


def _categorical_values(records: pd.DataFrame, column: str, spec_icd9: Sequence[str]) -> pd.Series:
    values = records[column]
    if column in spec_icd9:
        return values.map(icd9_group)
    return values.map(lambda v: MISSING if v is None or (isinstance(v, float) and math.isnan(v)) else str(v))


def _layout(records: pd.DataFrame, options: PreprocessOptions) -> Tuple[List[str], List[str], List[str]]:
    """(numeric columns, categorical columns, icd9 columns) present in records"""
    numeric = list(NUMERIC_COLUMNS)
    categorical = [c for c in CATEGORICAL_COLUMNS if c in records.columns]
    if options.ordinal_age:
        categorical.remove("age")
        numeric.append("age")
    categorical += [c for c in MEDICATION_COLUMNS if c in records.columns]
    icd9 = ["diag_1"] + (["diag_2", "diag_3"] if options.group_secondary_diagnoses else [])
    categorical += icd9
    return numeric, categorical, icd9


def _numeric_column(records: pd.DataFrame, column: str) -> pd.Series:
    if column == "age":
        return records[column].map(age_lower_bound).astype(np.float64)
    return records[column].astype(np.float64)


def preprocess_fit(train_records: pd.DataFrame, options: Optional[PreprocessOptions] = None) -> PreprocessSpec:
    """
    Fit scaling statistics and vocabularies on the train split

    Args:
        train_records: Raw training records only
        options: Preprocessing switches

    Returns:
        PreprocessSpec ready for preprocess_apply
    """
    options = options or PreprocessOptions()
    if len(train_records) == 0:
        raise DataError("Cannot fit preprocessing on an empty table")
    numeric_columns, categorical_columns, icd9 = _layout(train_records, options)

    numeric: Dict[str, NumericStats] = {}
    for column in numeric_columns:
        values = _numeric_column(train_records, column)
        if values.notna().sum() == 0:
            numeric[column] = NumericStats(min=0.0, max=0.0, median=0.0)
            continue
        numeric[column] = NumericStats(
            min=float(values.min()), max=float(values.max()), median=float(values.median())
        )
        if numeric[column].min == numeric[column].max:
            logger.warning(f"Numeric column {column} is constant on the train split")

    vocabularies = {
        column: sorted(_categorical_values(train_records, column, icd9).unique().tolist())
        for column in categorical_columns
    }
    spec = PreprocessSpec(
        dropped_columns=DROPPED_COLUMNS + [c for c in ID_COLUMNS if c in train_records.columns]
                        + ([] if options.group_secondary_diagnoses else ["diag_2", "diag_3"]),
        numeric=numeric,
        vocabularies=vocabularies,
        icd9_columns=icd9,
        label_column=LABEL_COLUMN,
        options=options,
    )
    logger.info(f"Fitted preprocessing: {spec.dimension} features, digest {spec.digest()[:12]}")
    return spec


def preprocess_apply(spec: PreprocessSpec, records: pd.DataFrame) -> Dataset:
    """
    Scale numerics into [0, 1] and one-hot encode categoricals

    Args:
        spec: Fitted specification
        records: Raw records (train or test)

    Returns:
        Dataset; unseen categories map to all-zero blocks and out-of-range values are clamped
    """
    n = len(records)
    blocks = []
    for column, stats in spec.numeric.items():
        values = _numeric_column(records, column).fillna(stats.median).to_numpy(dtype=np.float64)
        if stats.max == stats.min:
            scaled = np.zeros(n)
        else:
            scaled = np.clip((values - stats.min) / (stats.max - stats.min), 0.0, 1.0)
        blocks.append(scaled[:, None])

    for column, vocabulary in spec.vocabularies.items():
        values = _categorical_values(records, column, spec.icd9_columns)
        codes = pd.Categorical(values, categories=vocabulary).codes
        one_hot = np.zeros((n, len(vocabulary)))
        seen = codes >= 0
        one_hot[np.flatnonzero(seen), codes[seen]] = 1.0
        blocks.append(one_hot)

    features = np.hstack(blocks) if blocks else np.zeros((n, 0))
    labels = (records[spec.label_column] == spec.positive_label).to_numpy(dtype=np.int64)
    return Dataset(features, labels, tuple(spec.feature_names))


# -- splitting ----------------------------------------------------------

def split_indices(n: int, seed: int, ratio: float = 0.75) -> Tuple[np.ndarray, np.ndarray]:
    if n < 4:
        raise DataError(f"Need at least 4 rows to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    cut = int(math.floor(ratio * n))
    return order[:cut], order[cut:]


def split(dataset: Dataset, seed: int, ratio: float = 0.75) -> Tuple[Dataset, Dataset]:
    """Seeded shuffle into floor(ratio * N) train rows and the remainder"""
    train_idx, test_idx = split_indices(len(dataset), seed, ratio)
    return dataset.subset(train_idx), dataset.subset(test_idx)


def preprocess_records(records: pd.DataFrame, seed: int,
                       options: Optional[PreprocessOptions] = None) -> Tuple[PreprocessSpec, Dataset, Dataset]:
    """Split raw records, fit on the train part only, and apply to both parts"""
    options = options or PreprocessOptions()
    train_idx, test_idx = split_indices(len(records), seed, options.train_ratio)
    train_records = records.iloc[train_idx].reset_index(drop=True)
    test_records = records.iloc[test_idx].reset_index(drop=True)
    spec = preprocess_fit(train_records, options)
    return spec, preprocess_apply(spec, train_records), preprocess_apply(spec, test_records)


# -- min-max helper -----------------------------------------------------

def minmax_fit(features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    features = np.asarray(features, dtype=np.float64)
    return features.min(axis=0), features.max(axis=0)


def minmax_apply(features: np.ndarray, lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
    """Column-wise (x - min) / (max - min) clamped to [0, 1]; constant columns become 0"""
    features = np.asarray(features, dtype=np.float64)
    span = highs - lows
    safe = np.where(span > 0, span, 1.0)
    scaled = np.clip((features - lows) / safe, 0.0, 1.0)
    return np.where(span > 0, scaled, 0.0)


def standardize(train: Dataset, test: Optional[Dataset] = None) -> Tuple[Dataset, Optional[Dataset]]:
    """Min-max scale using train statistics"""
    lows, highs = minmax_fit(train.features)
    scaled_train = Dataset(minmax_apply(train.features, lows, highs), train.labels, train.feature_names)
    if test is None:
        return scaled_train, None
    return scaled_train, Dataset(minmax_apply(test.features, lows, highs), test.labels, test.feature_names)


# -- synthetic data -----------------------------------------------------

def synthesize(n: int, d: int, positive_rate: float = 0.1, signal_strength: float = 4.0, seed: int = 0,
               raw_scale: Optional[float] = None) -> Dataset:
    """
    Features in [0, 1] with labels drawn from a planted logistic rule

    Args:
        n: Rows
        d: Features
        positive_rate: Target share of label 1, in (0, 1)
        signal_strength: Norm of the planted weight vector; 0 gives labels independent of features
        seed: Generator seed
        raw_scale: When set, column j is multiplied by a factor in [1, raw_scale] to mimic unscaled EHR data

    Returns:
        Dataset
    """
    if not 0 < positive_rate < 1:
        raise DataError(f"Positive rate must lie in (0, 1), got {positive_rate}")
    rng = np.random.default_rng(seed)
    features = rng.random((n, d))
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction) or 1.0
    signal = (features - 0.5) @ direction * signal_strength * math.sqrt(12.0)

    try:
        bias = brentq(lambda b: float(expit(signal + b).mean()) - positive_rate, -50.0, 50.0)
    except ValueError as e:
        logger.error(f"Cannot reach positive rate {positive_rate}: {str(e)}")
        raise DataError(f"Cannot reach positive rate {positive_rate}: {str(e)}")
    labels = (rng.random(n) < expit(signal + bias)).astype(np.int64)

    if raw_scale is not None:
        features = features * rng.uniform(1.0, raw_scale, size=d)
    names = tuple(f"x{j}" for j in range(d))
    logger.info(f"Synthesized {n}x{d} dataset, positive rate {labels.mean():.3f}")
    return Dataset(features, labels, names)


def planted_scores(dataset: Dataset, seed: int, signal_strength: float = 4.0) -> np.ndarray:
    """Scores of the generating linear rule, for oracle checks on synthetic data"""
    rng = np.random.default_rng(seed)
    rng.random((len(dataset), dataset.dimension))
    direction = rng.normal(size=dataset.dimension)
    direction /= np.linalg.norm(direction) or 1.0
    return (dataset.features - 0.5) @ direction * signal_strength


# -- cache --------------------------------------------------------------

def save_dataset(dataset: Dataset, path: Union[str, Path]) -> str:
    digest = dataset.digest()
    np.savez_compressed(
        path, features=dataset.features, labels=dataset.labels,
        feature_names=np.array(dataset.feature_names, dtype=str), digest=np.array(digest),
    )
    return digest


def load_dataset(path: Union[str, Path]) -> Dataset:
    """Load an .npz cache and verify its digest"""
    try:
        with np.load(path, allow_pickle=False) as archive:
            dataset = Dataset(archive["features"], archive["labels"], tuple(archive["feature_names"].tolist()))
            stored = str(archive["digest"])
    except (OSError, KeyError, ValueError) as e:
        logger.error(f"Cannot read dataset cache {path}: {str(e)}")
        raise DataError(f"Cannot read dataset cache {path}: {str(e)}")
    if dataset.digest() != stored:
        raise DataError(f"Dataset cache {path} failed its digest check")
    return dataset


class DataError(Exception):
    """Custom exception for data ingestion and preprocessing errors"""
    pass


class SchemaError(DataError):
    """Input table lacks required columns"""
    pass
