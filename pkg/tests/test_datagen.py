"""Data generation and round-trip serialization."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from singreg import Dataset, SchemaError, ValidationError, generate, load_dataset, make_truth, save_dataset

# --- generation -------------------------------------------------------------


def test_generate_shapes_and_determinism():
    truth = make_truth("linear-2", sigma=0.1)
    a = generate(truth, n=50, seed=123)
    b = generate(truth, n=50, seed=123)
    assert a.xs.shape == (50, 2) and a.ys.shape == (50, 1)
    np.testing.assert_array_equal(a.xs, b.xs)
    np.testing.assert_array_equal(a.ys, b.ys)
    assert a.seed == 123
    c = generate(truth, n=50, seed=124)
    assert not np.array_equal(a.ys, c.ys)


def test_generate_noise_moments():
    # y - r0(x) must look like N(0, sigma^2): mean and variance inside a
    # 4-sigma band for the fixed seed, and uncorrelated with x
    truth = make_truth("linear-2", sigma=0.3)
    data = generate(truth, n=20000, seed=7)
    resid = data.ys - truth.r0(data.xs)
    n = resid.size
    assert abs(resid.mean()) < 4 * 0.3 / math.sqrt(n)
    # var of the sample variance of a gaussian: 2 sigma^4 / (n - 1)
    assert abs(resid.var() - 0.09) < 4 * math.sqrt(2 * 0.3**4 / (n - 1))
    corr = np.corrcoef(data.xs[:, 0], resid[:, 0])[0, 1]
    assert abs(corr) < 4 / math.sqrt(n)


def test_generate_inputs_follow_the_input_law():
    truth = make_truth("sinmix", sigma=1.0)
    data = generate(truth, n=20000, seed=11)
    xs = data.xs[:, 0]
    assert xs.min() >= -math.pi and xs.max() <= math.pi
    assert abs(xs.mean()) < 4 * (2 * math.pi / math.sqrt(12)) / math.sqrt(20000)
    # quartiles of the uniform law
    assert np.quantile(xs, 0.25) == pytest.approx(-math.pi / 2, abs=0.06)
    assert np.quantile(xs, 0.75) == pytest.approx(math.pi / 2, abs=0.06)


def test_dataset_arrays_are_read_only():
    truth = make_truth("linear-1", sigma=0.1)
    data = generate(truth, n=5, seed=1)
    with pytest.raises(ValueError):
        data.xs[0, 0] = 0.0
    with pytest.raises(ValueError):
        data.ys[0, 0] = 0.0


def test_dataset_validation():
    with pytest.raises(ValidationError):
        Dataset(xs=np.zeros((0, 2)), ys=np.zeros((0, 1)), seed=0)
    with pytest.raises(ValidationError):
        Dataset(xs=np.zeros((4, 2)), ys=np.zeros((3, 1)), seed=0)
    with pytest.raises(ValidationError):
        generate(make_truth("linear-1", sigma=0.1), n=0, seed=0)


# --- serialization ----------------------------------------------------------


def test_save_load_round_trip_is_bitwise(tmp_path):
    truth = make_truth("linear-2", sigma=0.1)
    data = generate(truth, n=37, seed=5)
    path = tmp_path / "data.csv"
    save_dataset(data, path, model_id="linear-2", sigma=0.1)
    loaded, sidecar = load_dataset(path)
    np.testing.assert_array_equal(loaded.xs, data.xs)
    np.testing.assert_array_equal(loaded.ys, data.ys)
    assert loaded.seed == 5
    assert sidecar["model"] == "linear-2"
    assert sidecar["sigma"] == 0.1
    assert sidecar["n"] == 37


def test_saved_csv_has_named_columns(tmp_path):
    truth = make_truth("linear-2", sigma=0.1)
    data = generate(truth, n=3, seed=5)
    path = tmp_path / "data.csv"
    save_dataset(data, path, model_id="linear-2", sigma=0.1)
    header = path.read_text().splitlines()[0]
    assert header.split(",") == ["x_1", "x_2", "y_1"]


def test_load_rejects_missing_sidecar(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("x_1,y_1\n0.0,0.0\n")
    with pytest.raises(SchemaError):
        load_dataset(path)


def test_load_rejects_wrong_header(tmp_path):
    truth = make_truth("linear-1", sigma=0.1)
    data = generate(truth, n=3, seed=5)
    path = tmp_path / "data.csv"
    save_dataset(data, path, model_id="linear-1", sigma=0.1)
    body = path.read_text().splitlines()
    body[0] = "a,b"
    path.write_text("\n".join(body) + "\n")
    with pytest.raises(SchemaError):
        load_dataset(path)


def test_load_rejects_row_count_mismatch(tmp_path):
    truth = make_truth("linear-1", sigma=0.1)
    data = generate(truth, n=3, seed=5)
    path = tmp_path / "data.csv"
    save_dataset(data, path, model_id="linear-1", sigma=0.1)
    sidecar_path = path.with_suffix(".csv.json")
    meta = json.loads(sidecar_path.read_text())
    meta["n"] = 4
    sidecar_path.write_text(json.dumps(meta))
    with pytest.raises(SchemaError):
        load_dataset(path)


def test_load_missing_file_raises(tmp_path):
    with pytest.raises(SchemaError):
        load_dataset(tmp_path / "absent.csv")
