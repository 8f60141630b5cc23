"""
Tests for Data Pipeline Service
"""

import numpy as np
import pandas as pd
import pytest

from models.data_models import PreprocessOptions, PreprocessSpec
from services.data_pipeline import (
    REQUIRED_COLUMNS, DataError, Dataset, SchemaError, age_lower_bound, icd9_group, load_dataset,
    load_records, minmax_apply, minmax_fit, preprocess_apply, preprocess_fit, preprocess_records,
    save_dataset, split, split_indices, synthesize,
)

NUMERIC_DEFAULTS = {
    "time_in_hospital": 3, "num_lab_procedures": 40, "num_procedures": 0, "num_medications": 12,
    "number_outpatient": 0, "number_emergency": 0, "number_inpatient": 1, "number_diagnoses": 7,
}


def record(**overrides):
    row = {
        "encounter_id": 1, "patient_nbr": 1, "weight": "?", "payer_code": "MC", "medical_specialty": "?",
        "race": "Caucasian", "gender": "Female", "age": "[70-80)", "admission_type_id": 1,
        "discharge_disposition_id": 1, "admission_source_id": 7, "max_glu_serum": "Norm",
        "A1Cresult": ">7", "change": "No", "diabetesMed": "Yes", "insulin": "No",
        "diag_1": "250.83", "diag_2": "428", "diag_3": "V45", "readmitted": "NO",
        **NUMERIC_DEFAULTS,
    }
    row.update(overrides)
    return row


def write_csv(path, rows):
    pd.DataFrame(rows).to_csv(path, index=False)
    return path


@pytest.fixture
def train_records(tmp_path):
    """Three training rows; time_in_hospital 2, 4, 6 and a constant num_procedures"""
    rows = [
        record(encounter_id=1, time_in_hospital=2, num_lab_procedures=10, race="Caucasian", readmitted="<30"),
        record(encounter_id=2, time_in_hospital=4, num_lab_procedures=20, race="AfricanAmerican", readmitted=">30"),
        record(encounter_id=3, time_in_hospital=6, num_lab_procedures=60, race="?", diag_1="786"),
    ]
    return load_records(write_csv(tmp_path / "train.csv", rows))


def block(dataset, prefix):
    columns = [i for i, name in enumerate(dataset.feature_names) if name.startswith(prefix)]
    return dataset.features[:, columns]


class TestLoadRecords:
    """Test cases for CSV ingestion"""

    def test_question_mark_is_missing(self, train_records):
        """Test '?' markers become missing values"""
        assert pd.isna(train_records["race"].tolist()[2])

    def test_diagnosis_codes_stay_text(self, train_records):
        """Test ICD9 codes are not parsed as numbers"""
        assert train_records["diag_1"].tolist()[0] == "250.83"

    def test_missing_columns(self, tmp_path):
        """Test a table without required columns is a schema error"""
        row = record()
        del row["readmitted"], row["race"]
        with pytest.raises(SchemaError, match="readmitted"):
            load_records(write_csv(tmp_path / "bad.csv", [row]))

    def test_missing_file(self, tmp_path):
        """Test a missing path is a data error"""
        with pytest.raises(DataError):
            load_records(tmp_path / "absent.csv")

    def test_required_columns_cover_label(self):
        """Test the label column is required"""
        assert "readmitted" in REQUIRED_COLUMNS


class TestIcd9:
    """Test cases for diagnosis grouping"""

    def test_diabetes(self):
        """Test 250.xx codes are diabetes"""
        assert icd9_group("250.83") == "diabetes"
        assert icd9_group("250") == "diabetes"

    def test_ranges(self):
        """Test a code from each numeric range"""
        assert icd9_group("428") == "circulatory"
        assert icd9_group("786") == "respiratory"
        assert icd9_group("535") == "digestive"
        assert icd9_group("996") == "injury"
        assert icd9_group("715") == "musculoskeletal"
        assert icd9_group("599") == "genitourinary"
        assert icd9_group("162") == "neoplasms"
        assert icd9_group("300") == "other"

    def test_supplementary_codes(self):
        """Test V and E codes are other"""
        assert icd9_group("V45") == "other"
        assert icd9_group("E878") == "other"

    def test_missing(self):
        """Test absent codes"""
        assert icd9_group(None) == "missing"
        assert icd9_group("?") == "missing"
        assert icd9_group(float("nan")) == "missing"


class TestPreprocessing:
    """Test cases for fitting and applying preprocessing"""

    def test_minmax_column(self, train_records):
        """Test values 2, 4, 6 scale to 0, 0.5, 1"""
        spec = preprocess_fit(train_records)
        dataset = preprocess_apply(spec, train_records)
        assert dataset.feature_names[0] == "time_in_hospital"
        assert dataset.features[:, 0].tolist() == [0.0, 0.5, 1.0]

    def test_constant_column(self, train_records):
        """Test a constant train column maps to 0"""
        spec = preprocess_fit(train_records)
        dataset = preprocess_apply(spec, train_records)
        index = dataset.feature_names.index("num_procedures")
        assert not dataset.features[:, index].any()

    def test_labels(self, train_records):
        """Test only '<30' is positive"""
        dataset = preprocess_apply(preprocess_fit(train_records), train_records)
        assert dataset.labels.tolist() == [1, 0, 0]

    def test_features_in_unit_interval(self, train_records):
        """Test every feature lies in [0, 1]"""
        dataset = preprocess_apply(preprocess_fit(train_records), train_records)
        assert dataset.features.min() >= 0.0
        assert dataset.features.max() <= 1.0
        assert dataset.dimension == preprocess_fit(train_records).dimension

    def test_missing_category_is_its_own_value(self, train_records):
        """Test a missing race becomes a one-hot column of its own"""
        spec = preprocess_fit(train_records)
        assert "race=__missing__" in spec.feature_names

    def test_unseen_category(self, train_records, tmp_path):
        """Test a test-split category absent from train maps to an all-zero block"""
        spec = preprocess_fit(train_records)
        test = load_records(write_csv(tmp_path / "test.csv", [record(race="Asian")]))
        dataset = preprocess_apply(spec, test)
        assert not block(dataset, "race=").any()

    def test_test_values_clamped(self, train_records, tmp_path):
        """Test a test value beyond the train range is clamped to 1"""
        spec = preprocess_fit(train_records)
        test = load_records(write_csv(tmp_path / "test.csv", [record(time_in_hospital=14)]))
        assert preprocess_apply(spec, test).features[0, 0] == 1.0

    def test_missing_numeric_uses_train_median(self, train_records, tmp_path):
        """Test a missing numeric value is filled with the train median (20 in [10, 60])"""
        spec = preprocess_fit(train_records)
        test = load_records(write_csv(tmp_path / "test.csv", [record(num_lab_procedures="?")]))
        dataset = preprocess_apply(spec, test)
        index = dataset.feature_names.index("num_lab_procedures")
        assert dataset.features[0, index] == pytest.approx(0.2)

    def test_primary_diagnosis_grouped(self, train_records):
        """Test diag_1 is one-hot over ICD9 groups while diag_2 and diag_3 are dropped"""
        spec = preprocess_fit(train_records)
        assert spec.vocabularies["diag_1"] == ["diabetes", "respiratory"]
        assert "diag_2" not in spec.vocabularies
        assert {"diag_2", "diag_3", "encounter_id", "weight"} <= set(spec.dropped_columns)

    def test_secondary_diagnoses_option(self, train_records):
        """Test grouping secondary diagnoses adds their blocks"""
        spec = preprocess_fit(train_records, PreprocessOptions(group_secondary_diagnoses=True))
        assert spec.vocabularies["diag_2"] == ["circulatory"]
        assert spec.vocabularies["diag_3"] == ["other"]

    def test_ordinal_age(self, train_records):
        """Test age as a numeric lower bound instead of one-hot"""
        spec = preprocess_fit(train_records, PreprocessOptions(ordinal_age=True))
        assert "age" in spec.numeric
        assert "age" not in spec.vocabularies
        assert age_lower_bound("[70-80)") == 70.0

    def test_spec_roundtrip(self, train_records):
        """Test the fitted spec survives its text form"""
        spec = preprocess_fit(train_records)
        restored = PreprocessSpec.from_text(spec.to_text())
        assert restored.digest() == spec.digest()
        assert restored.feature_names == spec.feature_names

    def test_empty_table(self, train_records):
        """Test fitting on no rows is refused"""
        with pytest.raises(DataError):
            preprocess_fit(train_records.iloc[:0])

    def test_records_end_to_end(self, tmp_path):
        """Test split, fit and apply on raw records keep row counts"""
        rows = [record(encounter_id=i, time_in_hospital=i % 9 + 1) for i in range(20)]
        records = load_records(write_csv(tmp_path / "all.csv", rows))
        spec, train, test = preprocess_records(records, seed=3)
        assert (len(train), len(test)) == (15, 5)
        assert train.dimension == test.dimension == spec.dimension


class TestSplit:
    """Test cases for seeded splitting"""

    def test_four_rows(self):
        """Test N = 4 gives 3 train rows and 1 test row"""
        train_idx, test_idx = split_indices(4, seed=0)
        assert (len(train_idx), len(test_idx)) == (3, 1)
        assert sorted(np.concatenate([train_idx, test_idx]).tolist()) == [0, 1, 2, 3]

    def test_too_few_rows(self):
        """Test fewer than 4 rows cannot be split"""
        with pytest.raises(DataError):
            split_indices(3, seed=0)

    def test_seeded(self, planted_dataset):
        """Test the same seed gives the same split"""
        a, _ = split(planted_dataset, seed=9)
        b, _ = split(planted_dataset, seed=9)
        c, _ = split(planted_dataset, seed=10)
        assert a.digest() == b.digest() != c.digest()
        assert len(a) == 1500


class TestMinMax:
    """Test cases for the min-max helper"""

    def test_constant_column_zero(self):
        """Test constant columns become 0 and others span [0, 1]"""
        x = np.array([[1.0, 5.0], [3.0, 5.0], [2.0, 5.0]])
        lows, highs = minmax_fit(x)
        assert minmax_apply(x, lows, highs).tolist() == [[0.0, 0.0], [1.0, 0.0], [0.5, 0.0]]


class TestSynthesize:
    """Test cases for the synthetic generator"""

    def test_shape_and_range(self):
        """Test dimensions and features in [0, 1]"""
        dataset = synthesize(500, 7, seed=1)
        assert dataset.features.shape == (500, 7)
        assert 0.0 <= dataset.features.min() and dataset.features.max() <= 1.0

    def test_positive_rate(self):
        """Test the planted rule hits the requested positive share"""
        dataset = synthesize(20000, 5, positive_rate=0.1, seed=2)
        assert dataset.positive_rate == pytest.approx(0.1, abs=0.01)

    def test_deterministic(self):
        """Test a seed fixes the dataset"""
        assert synthesize(100, 4, seed=8).digest() == synthesize(100, 4, seed=8).digest()

    def test_invalid_rate(self):
        """Test a positive rate outside (0, 1) is refused"""
        with pytest.raises(DataError):
            synthesize(10, 2, positive_rate=1.0)

    def test_raw_scale(self):
        """Test unscaled columns exceed the unit interval"""
        assert synthesize(200, 3, seed=4, raw_scale=50.0).features.max() > 1.0


class TestDatasetCache:
    """Test cases for the .npz cache"""

    def test_roundtrip(self, planted_dataset, tmp_path):
        """Test save then load keeps the digest"""
        path = tmp_path / "data.npz"
        digest = save_dataset(planted_dataset, path)
        loaded = load_dataset(path)
        assert loaded.digest() == digest
        assert loaded.feature_names == planted_dataset.feature_names

    def test_tampered(self, tmp_path):
        """Test a cache whose digest disagrees is refused"""
        path = tmp_path / "data.npz"
        np.savez_compressed(path, features=np.zeros((2, 1)), labels=np.array([0, 1]),
                            feature_names=np.array(["x0"]), digest=np.array("0" * 64))
        with pytest.raises(DataError, match="digest"):
            load_dataset(path)

    def test_mismatched_shapes(self):
        """Test features and labels must agree in length"""
        with pytest.raises(DataError):
            Dataset(np.zeros((3, 2)), np.zeros(2), ("a", "b"))


class TestRealDataset:
    """Checks against the public readmission CSV when it is available"""

    def test_full_pipeline(self, diabetes_csv):
        """Test the full table preprocesses into unit-interval features"""
        records = load_records(diabetes_csv)
        spec, train, test = preprocess_records(records, seed=0)
        assert len(train) + len(test) == len(records)
        assert 0.0 <= train.features.min() and train.features.max() <= 1.0
        assert 0.05 < train.positive_rate < 0.2


if __name__ == "__main__":
    pytest.main([__file__])
