import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varcal.data import (
    Dataset,
    PredictionRecord,
    SchemaError,
    ValidationError,
    confidence_and_prediction,
    format_predictions,
    load_predictions,
    write_predictions,
)


def write(tmp_path, text, name="preds.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoad:
    def test_valid_file(self, tmp_path):
        p = write(tmp_path, "prob_0,prob_1,label,age\n0.3,0.7,1,30\n0.9,0.1,0,41.5\n0.5,0.5,1,22\n0.2,0.8,0,60\n")
        d = load_predictions(p)
        assert d.num_classes == 2
        assert d.n == 4
        assert d.variable_names == ["age"]
        np.testing.assert_array_equal(d.variable("age"), [30, 41.5, 22, 60])
        np.testing.assert_array_equal(d.labels, [1, 0, 1, 0])

    def test_bad_row_sum_names_row(self, tmp_path):
        p = write(tmp_path, "prob_0,prob_1,label\n0.5,0.5,0\n0.7,0.4,1\n")
        with pytest.raises(ValidationError, match="row 2.*sums to 1.1"):
            load_predictions(p)

    def test_label_out_of_range(self, tmp_path):
        p = write(tmp_path, "prob_0,prob_1,label\n0.5,0.5,2\n")
        with pytest.raises(ValidationError, match="row 1"):
            load_predictions(p)

    def test_non_integer_label(self, tmp_path):
        p = write(tmp_path, "prob_0,prob_1,label\n0.5,0.5,0.5\n")
        with pytest.raises(ValidationError):
            load_predictions(p)

    def test_missing_prob_column(self, tmp_path):
        p = write(tmp_path, "prob_0,prob_2,label\n0.5,0.5,0\n")
        with pytest.raises(SchemaError):
            load_predictions(p)

    def test_extra_prob_column_after_label(self, tmp_path):
        p = write(tmp_path, "prob_0,prob_1,label,prob_2\n0.5,0.5,0,0\n")
        with pytest.raises(SchemaError):
            load_predictions(p)

    def test_missing_variable_value_rejected(self, tmp_path):
        p = write(tmp_path, "prob_0,prob_1,label,age\n0.5,0.5,0,\n")
        with pytest.raises(ValidationError, match="missing"):
            load_predictions(p)

    def test_non_numeric(self, tmp_path):
        p = write(tmp_path, "prob_0,prob_1,label\nabc,0.5,0\n")
        with pytest.raises(ValidationError, match="row 1"):
            load_predictions(p)

    def test_out_of_range_probability(self, tmp_path):
        p = write(tmp_path, "prob_0,prob_1,label\n1.5,-0.5,0\n")
        with pytest.raises(ValidationError):
            load_predictions(p)


@pytest.mark.parametrize(
    "probs, expected",
    [((0.3, 0.7), (0.7, 1)), ((0.5, 0.5), (0.5, 0)), ((0.2, 0.2, 0.6), (0.6, 2))],
)
def test_confidence_and_prediction(probs, expected):
    rec = PredictionRecord(probs, 0)
    assert confidence_and_prediction(rec) == expected
    d = Dataset([probs], [0])
    assert (d.confidence[0], d.predictions[0]) == expected


def test_tie_break_follows_lowest_index():
    a = Dataset([[0.4, 0.4, 0.2]], [0])
    b = Dataset([[0.2, 0.4, 0.4]], [0])
    assert a.predictions[0] == 0
    assert b.predictions[0] == 1


def test_dataset_is_immutable():
    d = Dataset([[0.5, 0.5]], [0], {"v": [1.0]})
    with pytest.raises(ValueError):
        d.probs[0, 0] = 1.0
    with pytest.raises(ValueError):
        d.variables["v"][0] = 2.0


def test_records_roundtrip():
    d = Dataset([[0.1, 0.9], [0.6, 0.4]], [1, 0], {"a": [1.0, 2.0]})
    assert Dataset.from_records(list(d.records)) == d


def test_unknown_variable():
    d = Dataset([[0.5, 0.5]], [0], {"v": [1.0]})
    with pytest.raises(KeyError, match="unknown variable"):
        d.variable("w")


class TestWrite:
    def test_k10_columns_in_order(self):
        probs = np.full((1, 10), 0.1)
        text = format_predictions(Dataset(probs, [3]))
        assert text.splitlines()[0] == ",".join([f"prob_{j}" for j in range(10)] + ["label"])

    def test_no_variables(self):
        text = format_predictions(Dataset([[0.5, 0.5]], [0]))
        assert text.splitlines()[0] == "prob_0,prob_1,label"

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError):
            write_predictions(Dataset([[0.5, 0.5]], [0]), tmp_path / "missing_dir" / "x.csv")


@st.composite
def datasets(draw):
    k = draw(st.integers(2, 5))
    n = draw(st.integers(1, 20))
    raw = draw(st.lists(st.lists(st.floats(0.001, 1.0), min_size=k, max_size=k), min_size=n, max_size=n))
    probs = np.array(raw)
    probs = probs / probs.sum(axis=1, keepdims=True)
    labels = draw(st.lists(st.integers(0, k - 1), min_size=n, max_size=n))
    nvars = draw(st.integers(0, 3))
    variables = {
        f"x{j}": draw(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=n, max_size=n)) for j in range(nvars)
    }
    return Dataset(probs, labels, variables)


@settings(max_examples=60, deadline=None)
@given(datasets())
def test_write_load_roundtrip(tmp_path_factory, d):
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_predictions(d, path)
    back = load_predictions(path)
    assert back.variable_names == d.variable_names
    np.testing.assert_allclose(back.probs, d.probs, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(back.labels, d.labels)
    for name in d.variable_names:
        np.testing.assert_allclose(back.variable(name), d.variable(name), rtol=0, atol=1e-12)
    assert back == d  # repr formatting makes it exact


@settings(max_examples=60, deadline=None)
@given(datasets())
def test_confidence_bounds(d):
    assert np.all(d.confidence >= 1.0 / d.num_classes - 1e-12)
    assert np.all(d.confidence[:, None] >= d.probs)
