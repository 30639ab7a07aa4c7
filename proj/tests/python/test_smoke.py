import math

import numpy as np
import pytest

import dacal


@pytest.fixture(scope="module")
def splits():
    return dacal.synth(seed=1, preset="shift", train=2000, val=2000, test=2000, ood=2000)


@pytest.fixture(scope="module")
def indices(splits):
    return [dacal.KnnIndex(f, name, 20) for name, f in splits["train"]["features"].items()]


def test_softmax_rows_sum_to_one():
    p = dacal.softmax(np.array([[4.0, 0.0], [1.0, 1.0]], dtype=np.float32))
    assert p.shape == (2, 2)
    assert p[0, 0] == pytest.approx(0.982014, abs=1e-6)
    assert np.allclose(p.sum(axis=1), 1.0)


def test_knn_matches_brute_force():
    rng = np.random.default_rng(0)
    ref = rng.normal(size=(50, 8)).astype(np.float32)
    q = rng.normal(size=(7, 8)).astype(np.float32)
    index = dacal.KnnIndex(ref, "l", 5)
    refn = ref / np.linalg.norm(ref, axis=1, keepdims=True)
    qn = q / np.linalg.norm(q, axis=1, keepdims=True)
    brute = np.sort(np.linalg.norm(qn[:, None, :] - refn[None, :, :], axis=2), axis=1)[:, 4]
    assert np.allclose(index.kth_distance(q), brute, atol=1e-5)
    assert index.with_k(1).k == 1


def test_dac_fit_and_metrics(splits, indices):
    val, test = splits["val"], splits["shift_5"]
    s_val = dacal.density_profile(indices, val["features"])
    s_test = dacal.density_profile(indices, test["features"])
    names = [i.layer_name for i in indices]
    ts = dacal.fit_calibrator("ts", val["logits"], val["labels"])
    dac = dacal.fit_calibrator("ts+dac", val["logits"], val["labels"], s_val, names)
    p_ts = ts.predict_proba(test["logits"])
    p_dac = dac.predict_proba(test["logits"], s_test)
    assert dacal.accuracy(p_dac, test["labels"]) == dacal.accuracy(p_ts, test["labels"])
    assert dacal.ece(p_dac, test["labels"]) < dacal.ece(p_ts, test["labels"])
    back = dacal.Calibrator.from_json(dac.to_json())
    assert np.array_equal(back.predict_proba(test["logits"], s_test), p_dac)
    assert sum(dac.dac.weight_shares()) == pytest.approx(1.0)


def test_fit_dac_zero_densities_is_bias_only(splits):
    val = splits["val"]
    model, report = dacal.fit_dac(val["logits"], val["labels"], np.zeros((len(val["labels"]), 3), np.float32))
    assert model.weights == [0.0, 0.0, 0.0]
    assert report["converged"]
    t = dacal.fit_ts(val["logits"], val["labels"])
    assert model.bias == pytest.approx(t, rel=0.2)


def test_ood_metrics_hand_examples():
    assert dacal.auroc([1.0, 1.0], [0.0, 0.0]) == 1.0
    assert dacal.auroc([0.3, 0.3], [0.3, 0.3]) == 0.5
    assert dacal.detection_error([1.0], [0.0]) == 0.0
    assert dacal.fpr_at_tpr(list(range(20)), list(range(20))) == 0.95
    assert dacal.aupr([1.0], [0.0], positive="out") == 1.0


def test_baselines_and_pav():
    z = np.array([[2.0, 0.0], [1.0, -1.0]], dtype=np.float32)
    assert np.array_equal(dacal.apply_ets(z, 2.0, [1.0, 0.0, 0.0]), dacal.apply_ts(z, 2.0))
    assert np.allclose(dacal.pav([0.0, 1.0, 0.0, 1.0]), [0.0, 0.5, 0.5, 1.0])
    assert dacal.nll(np.full((2, 10), 0.1, np.float32), [0, 3]) == pytest.approx(math.log(10), abs=1e-6)


def test_errors_map_to_python_exceptions():
    with pytest.raises(dacal.ConfigError):
        dacal.fit_calibrator("dac+ts", np.zeros((4, 2), np.float32), [0, 1, 0, 1])
    with pytest.raises(dacal.DataError):
        dacal.accuracy(np.zeros((2, 2), np.float32), [0, 5])
    with pytest.raises(dacal.Error):
        dacal.DacModel(["a"], [-1.0], 1.0)
