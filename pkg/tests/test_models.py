import math

import numpy as np
import pytest

from conformal_absint.conformal import pac_calibrate
from conformal_absint.domain import TOP, TT, CatSet, Interval, IntSet
from conformal_absint.models import (
    ClassifierConformalizer,
    DetectorConformalizer,
    DetectorNoise,
    DetectorThresholds,
    DigitInstance,
    PredictedDetection,
    Scene,
    SceneParams,
    TrueDetection,
    classifier_conformal,
    classifier_conformal_set,
    conformal_detector,
    detection_scores,
    detector_predict,
    gen_detection_dataset,
    gen_digit_dataset,
    gen_scene_dataset,
    load_digits,
    load_scenes,
    match_detections,
    save_digits,
    save_scenes,
)

QUIET = DetectorNoise(
    center_sigma=0.0, size_sigma=0.0, objectness_noise=0.0, hard_rate=0.0, confusion=0.0,
    wrong_rate=0.0, miss_rate=0.0, spurious_rate=0.0,
)


def _digit(scores):
    s = np.asarray(scores, dtype=float)
    return DigitInstance(0, int(np.argmax(s)), False, s)


def _pred(n, m, w=50.0, h=50.0, s=(0.9, 0.1)):
    return PredictedDetection(s, n, m, w, h)


# ---------------------------------------------------------------------------
# digits


def test_eta_zero_never_misclassifies():
    data = gen_digit_dataset(10_000, 0.0, seed=0)
    assert all(d.prediction == d.true_label for d in data)


def test_digits_deterministic():
    a = gen_digit_dataset(50, 0.3, seed=7)
    b = gen_digit_dataset(50, 0.3, seed=7)
    assert all(np.array_equal(x.scores, y.scores) and x.true_label == y.true_label for x, y in zip(a, b))


def test_accuracy_drops_with_noise():
    acc = lambda eta: np.mean([d.prediction == d.true_label for d in gen_digit_dataset(10_000, eta, seed=1)])
    assert acc(0.5) < acc(0.1)


def test_classifier_conformal_examples():
    one_hot = _digit([0, 0, 0, 0, 1, 0, 0, 0, 0, 0])
    assert classifier_conformal(one_hot, 0.5) == Interval(4, 4)
    two = _digit([0, 0.4, 0, 0.5, 0.1, 0, 0, 0, 0, 0])
    assert classifier_conformal(two, 0.3) == Interval(1, 3)
    assert classifier_conformal_set(two, 0.3) == IntSet({1, 3})
    assert classifier_conformal(two, -math.inf) == Interval(0, 9)


def test_list_site_score_is_minimum():
    d1, d2 = _digit([0.9] + [0.1 / 9] * 9), _digit([0.2, 0.8] + [0] * 8)
    pred = ClassifierConformalizer().calibrate("map", [([d1, d2],)] * 40, [[0, 0]] * 40, 0.1, 0.05)
    assert pred.cal.tau == pytest.approx(0.2)
    assert [e for e, _ in pred.predict([d1, d2])] == [Interval(0, 0), Interval(0, 1)]


def test_digit_snapshot_roundtrip(tmp_path):
    data = gen_digit_dataset(20, 0.2, seed=4)
    save_digits(tmp_path / "d.jsonl", data)
    back = load_digits(tmp_path / "d.jsonl")
    assert [d.true_label for d in back] == [d.true_label for d in data]
    assert all(np.allclose(a.scores, b.scores) for a, b in zip(back, data))


# ---------------------------------------------------------------------------
# scenes and detector


def test_scenes_deterministic():
    a, b = gen_scene_dataset(30, seed=5), gen_scene_dataset(30, seed=5)
    assert [s.truths for s in a] == [s.truths for s in b]


def test_no_objects():
    scenes = gen_scene_dataset(20, SceneParams(max_objects=0), seed=0)
    assert all(not s.truths for s in scenes)


def test_mean_object_count():
    scenes = gen_scene_dataset(10_000, seed=2)
    mean = np.mean([len(s.truths) for s in scenes])
    assert abs(mean - 4.0) <= 0.05 * 4.0


def test_zero_noise_predictions_equal_truths():
    for s in gen_scene_dataset(50, seed=3):
        preds = detector_predict(s, QUIET)
        got = sorted((p.argmax_cat, p.n, p.m, p.max_score) for p in preds)
        assert got == sorted((t.cat, float(t.n), float(t.m), 1.0) for t in s.truths)
        for p in preds:
            assert sorted(p.s) == [0.0, 1.0]


def test_full_miss_rate_leaves_only_spurious():
    noise = DetectorNoise(miss_rate=1.0, spurious_rate=0.0)
    assert all(not detector_predict(s, noise) for s in gen_scene_dataset(50, seed=3))


def test_center_noise_half_normal_mean():
    noise = DetectorNoise(center_sigma=10.0, miss_rate=0.0, spurious_rate=0.0)
    params = SceneParams(mean_objects=1e6, max_objects=1)
    errs = []
    for s in gen_scene_dataset(10_000, params, seed=6):
        (p,) = detector_predict(s, noise)
        errs.append(abs(s.truths[0].n - p.n))
    expected = 10.0 * math.sqrt(2 / math.pi)
    assert abs(np.mean(errs) - expected) <= 0.1 * expected


def test_matching():
    t = [TrueDetection("person", 100, 100)]
    assert match_detections(t, [_pred(102, 100)]) == {0: 0}
    two = [TrueDetection("person", 100, 100), TrueDetection("person", 104, 100)]
    assert match_detections(two, [_pred(102, 100)]) == {0: 0, 1: 0}
    # symmetric tie: the lower index wins
    assert match_detections(t, [_pred(90, 100), _pred(110, 100)]) == {0: 0}


def test_detection_scores_examples():
    s = Scene(0, 640, 480, (TrueDetection("person", 100, 100),), (_pred(100, 100, s=(1.0, 0.0)),))
    assert detection_scores(s) == (1.0, 1.0, 0.0, 0.0)
    s = Scene(0, 640, 480, (TrueDetection("person", 105, 100),), (_pred(100, 100),))
    assert detection_scores(s)[2] == pytest.approx(0.1)


def test_detection_scores_max_over_truths():
    # offsets 3 and 8 over widths 30 and 40: max(0.1, 0.2)
    truths = (TrueDetection("person", 103, 100), TrueDetection("car", 408, 300))
    preds = (_pred(100, 100, w=30), _pred(400, 300, w=40, s=(0.1, 0.9)))
    s = Scene(0, 640, 480, truths, preds)
    assert detection_scores(s)[2] == pytest.approx(0.2)


def test_conformal_detector_tight():
    th = DetectorThresholds(tau_d1=0.5, tau_d1p=0.5, tau_d2=0.0, tau_d3=0.0)
    (entry,) = conformal_detector([_pred(100, 200, s=(1.0, 0.0))], th).entries
    det, flag = entry
    assert flag is TT
    assert det.elems == (CatSet.of("person"), Interval(100, 100), Interval(200, 200))


def test_conformal_detector_never_sure():
    th = DetectorThresholds(tau_d1=math.inf, tau_d1p=0.5, tau_d2=0.1, tau_d3=0.1)
    out = conformal_detector([_pred(100, 200), _pred(300, 100, s=(1.0, 0.0))], th)
    assert all(f is TOP for _, f in out.entries)


def test_detector_thresholds_shares():
    scenes = gen_detection_dataset(300, seed=0)
    th = DetectorConformalizer().thresholds(scenes, 0.1, 0.05)
    assert sum(th.epsilons) == pytest.approx(0.1)
    assert sum(th.deltas) == pytest.approx(0.05)


def test_delta_moves_thresholds_monotonically():
    # a larger δ allows more calibration scores below τ, so every set shrinks weakly
    scenes = gen_detection_dataset(400, seed=0)
    small = DetectorConformalizer().thresholds(scenes, 0.1, 0.02)
    large = DetectorConformalizer().thresholds(scenes, 0.1, 0.2)
    assert large.tau_d1p >= small.tau_d1p
    assert large.tau_d1 <= small.tau_d1
    assert large.tau_d2 <= small.tau_d2 and large.tau_d3 <= small.tau_d3


def test_scene_snapshot_roundtrip(tmp_path):
    scenes = gen_detection_dataset(10, seed=1)
    save_scenes(tmp_path / "s.jsonl", scenes)
    back = load_scenes(tmp_path / "s.jsonl")
    assert [s.truths for s in back] == [s.truths for s in scenes]
    assert [s.standard() for s in back] == [s.standard() for s in scenes]


def test_pac_threshold_is_order_statistic():
    scores = [0.3, 0.1, 0.2] * 20
    c = pac_calibrate(scores, 0.1, 0.05)
    assert c.tau == sorted(scores)[c.k_allowed]
