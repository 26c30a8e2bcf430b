import json

import pytest

from conformal_absint import bench
from conformal_absint.bench import (
    ConfigError,
    DetectionData,
    ExperimentConfig,
    MnistData,
    TrialResult,
    _summarize,
    emit_report,
    report_from_json,
    report_to_csv,
    report_to_json,
    report_to_text,
    run_suite,
    run_trial,
    size_ratios,
    value_size,
)
from conformal_absint.domain import FF, TOP, TT, Interval
from conformal_absint.programs import DETECTION_BINARIZED, DETECTION_PROGRAMS, MNIST_PROGRAMS, BenchProgram, suite

SMALL = dict(n_cal=300, n_test=60, trials=2, seed=3)


def _small(**kw):
    return ExperimentConfig(**{**SMALL, **kw})


def test_program_library_sizes():
    assert len(MNIST_PROGRAMS) == 10
    assert sum(p.kind == "imperative" for p in MNIST_PROGRAMS) == 2
    assert len(DETECTION_PROGRAMS) == 12 and len(DETECTION_BINARIZED) == 12
    assert len(suite("detection")) == 24
    for p in MNIST_PROGRAMS + DETECTION_PROGRAMS + DETECTION_BINARIZED:
        p.build()


def test_binarized_names():
    assert DETECTION_BINARIZED[0].name == "# objects in image >= 3"


# ---------------------------------------------------------------------------
# config


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"suite": "mnist", "epsilon_typo": 0.1})


@pytest.mark.parametrize(
    "bad",
    [{"suite": "cifar"}, {"epsilon": 0}, {"trials": 0}, {"semantics": ["magic"]}, {"programs": ["nope"]},
     {"eps0": 0.5}, {"loop_schedule": "linear"}],
)
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_load_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"suite": "detection", "trials": 2}))
    cfg = ExperimentConfig.load(p)
    assert cfg.suite == "detection" and cfg.trials == 2
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(p)


def test_shipped_configs_load():
    from pathlib import Path

    for p in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.json")):
        ExperimentConfig.load(p)


# ---------------------------------------------------------------------------
# splits


def test_split_sizes_and_determinism():
    cfg = ExperimentConfig(n_cal=2000, n_test=5000, trials=1)
    data = MnistData(cfg)
    a, b = data.split(0, False), MnistData(cfg).split(0, False)
    assert (len(a.cal), len(a.test)) == (2000, 5000)
    assert [[d.index for d in x] for x in a.cal[:50]] == [[d.index for d in x] for x in b.cal[:50]]


def test_split_disjoint_digits():
    data = MnistData(_small())
    for t in range(2):
        s = data.split(t, False)
        cal = {d.index for xs in s.cal for d in xs}
        test = {d.index for xs in s.test for d in xs}
        assert not cal & test


def test_detection_split_disjoint():
    data = DetectionData(_small(suite="detection", n_cal=50, n_test=40))
    s = data.split(1)
    assert len(s.cal) == 50 and len(s.test) == 40
    assert not {x.index for x in s.cal} & {x.index for x in s.test}


def test_trials_use_different_splits():
    data = MnistData(_small())
    assert [d.index for d in data.split(0, False).cal[0]] != [d.index for d in data.split(1, False).cal[0]]


# ---------------------------------------------------------------------------
# measurement


def test_value_size():
    assert value_size(Interval(1, 3)) == 3
    assert value_size(TOP) == 2
    assert value_size(TT) == value_size(FF) == 1


def test_exact_program_has_full_coverage_and_unit_size():
    bp = BenchProgram("constant", "(add 1 2)", "dsl")
    cfg = _small()
    split = MnistData(cfg).split(0, False)
    res = run_trial(bp, cfg, split, ["direct", "compositional", "full"])
    for r in res.values():
        assert all(res_sz == 1 for res_sz in r.sizes)
        assert all(r.covered)


def test_binarized_uncertain_fraction():
    row = _summarize("p >= 3", "full", [TrialResult([2, 1, 1, 2], [True] * 4, 0.0)], True, "interval")
    assert row.uncertain == 0.5
    assert row.avg_size == 1.5


def test_failed_program_is_a_row_not_a_crash(monkeypatch):
    real = bench.run_trial

    def boom(bp, *a, **k):
        if bp.name == "max of list elements":
            raise RuntimeError("simulated failure")
        return real(bp, *a, **k)

    monkeypatch.setattr(bench, "run_trial", boom)
    rep = run_suite(_small(trials=1, programs=["max of list elements", "sum of list elements"]))
    assert rep.failed
    assert rep.row("max of list elements", "full").failure.startswith("RuntimeError")
    assert rep.row("sum of list elements", "full").failure is None


# ---------------------------------------------------------------------------
# reports


@pytest.fixture(scope="module")
def small_report():
    return run_suite(_small(programs=["sum of list elements", "max of list elements", "sum list elements until one is >5"]))


def test_report_json_roundtrip(small_report):
    back = report_from_json(report_to_json(small_report))
    assert back.rows == small_report.rows
    assert back.config == small_report.config


def test_report_deterministic(small_report):
    again = run_suite(_small(programs=["sum of list elements", "max of list elements", "sum list elements until one is >5"]))
    assert report_to_json(again) == report_to_json(small_report)


def test_csv_rows(small_report):
    lines = report_to_csv(small_report).strip().splitlines()
    assert lines[0].startswith("program,semantics,avg_size,size_std,coverage,coverage_std,runtime")
    assert len(lines) - 1 == 3 * 3


def test_text_has_ratio_row(small_report):
    text = report_to_text(small_report)
    assert "set size / our set size" in text
    assert "runtime" in text


def test_ratios_reference_is_one(small_report):
    assert size_ratios(small_report)["full"] == pytest.approx(1.0)


def test_coverage_and_size_ranges(small_report):
    for r in small_report.rows:
        assert 0 <= r.coverage <= 1
        assert r.avg_size >= 1


def test_emit_report(tmp_path, small_report):
    for fmt in ("json", "csv", "text"):
        assert emit_report(small_report, fmt, tmp_path / f"r.{fmt}").exists()
    with pytest.raises(ValueError):
        emit_report(small_report, "xml", tmp_path / "r.xml")


def test_compare_modes_containment():
    rep = bench.compare_abstract_modes(
        _small(trials=1, n_test=40, semantics=["compositional"], programs=["max of list elements", "# of list elements equal to 2"])
    )
    for d in rep.extras.values():
        assert d["set_le_interval"] == 1.0 and d["set_within_interval"] == 1.0
