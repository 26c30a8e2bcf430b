"""Benchmark harness: seeded splits, calibration, measurement and reports."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .conformal import ConformalProgram, SingleSplit, allocate_epsilon
from .domain import BOTTOM, TOP, AbstractBool, Interval, IntSet, SetCardinalityError, cardinality, gamma_contains
from .imperative import ImperativeConformalProgram
from .models import (
    ClassifierConformalizer,
    DetectorConformalizer,
    DigitSimParams,
    digit_oracle,
    detector_oracle,
    gen_detection_dataset,
    gen_digit_dataset,
)
from .programs import BenchProgram, suite

REPORT_VERSION = 1
SEMANTICS = ("direct", "compositional", "full")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    suite: str = "mnist"
    epsilon: float = 0.1
    delta: float = 0.05
    split_policy: str = "single"
    eps0: float | None = None
    n_cal: int = 2000
    n_test: int = 5000
    eta: float = 0.2
    trials: int = 25
    seed: int = 0
    semantics: list = field(default_factory=lambda: list(SEMANTICS))
    abstract_mode: str = "interval"
    programs: list | None = None
    digit_pool: int = 10000
    cal_fraction: float = 0.2
    list_min: int = 4
    list_max: int = 10
    imperative_split: str = "ml_aware"
    loop_schedule: str = "halving"
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.suite not in ("mnist", "detection", "imperative"):
            raise ConfigError(f"unknown suite {self.suite!r}")
        if not 0 < self.epsilon < 1 or not 0 < self.delta < 1:
            raise ConfigError("epsilon and delta must lie in (0, 1)")
        if self.split_policy not in ("single", "even"):
            raise ConfigError(f"unknown split policy {self.split_policy!r}")
        if self.eps0 is not None and not 0 <= self.eps0 <= self.epsilon:
            raise ConfigError("eps0 must lie in [0, epsilon]")
        if self.n_cal < 1 or self.n_test < 1 or self.trials < 1:
            raise ConfigError("n_cal, n_test and trials must be positive")
        if not 0 <= self.eta <= 1:
            raise ConfigError("eta must lie in [0, 1]")
        bad = [s for s in self.semantics if s not in SEMANTICS]
        if bad or not self.semantics:
            raise ConfigError(f"unknown semantics {bad}")
        if self.abstract_mode not in ("interval", "set"):
            raise ConfigError(f"unknown abstract mode {self.abstract_mode!r}")
        if not 1 <= self.list_min <= self.list_max:
            raise ConfigError("bad list length range")
        if self.imperative_split not in ("halving", "ml_aware"):
            raise ConfigError(f"unknown imperative split {self.imperative_split!r}")
        if self.loop_schedule not in ("halving", "quadratic"):
            raise ConfigError(f"unknown loop schedule {self.loop_schedule!r}")
        if self.programs is not None:
            names = {p.name for p in suite(self.suite)}
            unknown = [n for n in self.programs if n not in names]
            if unknown:
                raise ConfigError(f"unknown programs {unknown}")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"unknown config keys {extra}")
        try:
            return cls(**d).validate()
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def selected(self) -> list[BenchProgram]:
        progs = suite(self.suite)
        if self.programs is not None:
            progs = tuple(p for p in progs if p.name in self.programs)
        return list(progs)


@dataclass
class Row:
    program: str
    semantics: str
    avg_size: float
    size_std: float
    coverage: float
    coverage_std: float
    runtime: float = field(default=math.nan, compare=False)
    abstract_mode: str = "interval"
    uncertain: float | None = None
    empty_meets: int = 0
    warnings: int = 0
    n: int = 0
    failure: str | None = None


@dataclass
class RunReport:
    config: dict
    rows: list[Row]
    version: int = REPORT_VERSION
    extras: dict = field(default_factory=dict)

    def row(self, program: str, semantics: str, abstract_mode: str = "interval") -> Row:
        for r in self.rows:
            if r.program == program and r.semantics == semantics and r.abstract_mode == abstract_mode:
                return r
        raise KeyError((program, semantics, abstract_mode))

    @property
    def failed(self) -> bool:
        return any(r.failure for r in self.rows)


# ---------------------------------------------------------------------------
# Data


@dataclass
class Split:
    cal: list
    test: list


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


def _make_lists(pool: Sequence, n: int, rng: np.random.Generator, lo: int, hi: int, with_k: bool) -> list:
    out = []
    for _ in range(n):
        m = int(rng.integers(lo, hi + 1))
        idx = rng.integers(0, len(pool), size=m + (1 if with_k else 0))
        xs = [pool[i] for i in idx[:m]]
        out.append({"x": xs, "kx": [pool[idx[m]]]} if with_k else xs)
    return out


class MnistData:
    """Digit pool shared by the trials; each trial reshuffles it."""

    def __init__(self, cfg: ExperimentConfig, params: DigitSimParams = DigitSimParams()):
        self.cfg = cfg
        self.pool = gen_digit_dataset(cfg.digit_pool, cfg.eta, cfg.seed, params)

    def split(self, trial: int, imperative: bool) -> Split:
        cfg = self.cfg
        perm = _rng(cfg.seed, trial, 0).permutation(len(self.pool))
        n_cal_pool = max(1, int(round(cfg.cal_fraction * len(self.pool))))
        cal_pool = [self.pool[i] for i in perm[:n_cal_pool]]
        test_pool = [self.pool[i] for i in perm[n_cal_pool:]]
        cal = _make_lists(cal_pool, cfg.n_cal, _rng(cfg.seed, trial, 1), cfg.list_min, cfg.list_max, imperative)
        test = _make_lists(test_pool, cfg.n_test, _rng(cfg.seed, trial, 2), cfg.list_min, cfg.list_max, imperative)
        return Split(cal, test)


class DetectionData:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.scenes = gen_detection_dataset(cfg.n_cal + cfg.n_test, cfg.seed)

    def split(self, trial: int, imperative: bool = False) -> Split:
        perm = _rng(self.cfg.seed, trial, 0).permutation(len(self.scenes))
        cal = [self.scenes[i] for i in perm[: self.cfg.n_cal]]
        test = [self.scenes[i] for i in perm[self.cfg.n_cal :]]
        return Split(cal, test)


def make_data(cfg: ExperimentConfig):
    return DetectionData(cfg) if cfg.suite == "detection" else MnistData(cfg)


def _environment(cfg: ExperimentConfig):
    if cfg.suite == "detection":
        return {"detect": detector_oracle()}, {"detect": DetectorConformalizer()}
    return {"classify": digit_oracle()}, {"classify": ClassifierConformalizer()}


# ---------------------------------------------------------------------------
# Measurement


def value_size(v) -> int:
    """|γ(v)| for outputs: u-l+1 for intervals, 1 or 2 for booleans."""
    if type(v) is AbstractBool:
        return 2 if v is TOP else 1
    if v is BOTTOM:
        return 0
    return cardinality(v)


@dataclass
class TrialResult:
    sizes: list
    covered: list
    runtime: float
    empty_meets: int = 0
    warnings: int = 0


class _Evaluator:
    """Calibrated evaluators for one (program, trial)."""

    def __init__(self, bp: BenchProgram, cfg: ExperimentConfig, cal: list, oracles, conformalizers):
        self.bp = bp
        self.cfg = cfg
        self.prog = bp.build()
        self.eps, self.delta = cfg.epsilon, cfg.delta
        eps0 = cfg.eps0 if cfg.eps0 is not None else bp.eps0_frac * cfg.epsilon
        self.eps0, self.eps1 = eps0, cfg.epsilon - eps0
        if bp.kind == "imperative":
            oracle = oracles["classify"]
            self.oracle = oracle
            self.cp = ImperativeConformalProgram(
                self.prog,
                oracle,
                conformalizers["classify"],
                cal,
                split=cfg.imperative_split,
                loop_schedule=cfg.loop_schedule,
            )
        else:
            self.oracles = oracles
            self.cp = ConformalProgram(self.prog, oracles, cal, conformalizers)
            if cfg.split_policy == "even":
                self.budget = allocate_epsilon(self.prog, cfg.epsilon, cfg.delta)
            else:
                self.budget = allocate_epsilon(self.prog, cfg.epsilon, cfg.delta, SingleSplit(self.eps0, self.eps1))

    def truth(self, x):
        if self.bp.kind == "imperative":
            return self.prog.eval_ground_truth(x, self.oracle)
        return self.prog.eval_ground_truth(x, self.oracles)

    def evaluate(self, sem: str, x, set_mode: bool = False):
        """Returns ``(value, empty_meets)``."""
        if self.bp.kind == "imperative":
            if sem == "direct":
                return self.cp.direct(x, self.eps, self.delta), 0
            if sem == "compositional":
                return self.cp.compositional(x, self.eps, self.delta), 0
            return self.cp.full(x, self.eps0, self.eps1, self.delta)
        if sem == "direct":
            return self.cp.direct(x, self.eps, self.delta), 0
        if sem == "compositional":
            return self.cp.compositional(x, self.eps, self.delta, set_mode=set_mode), 0
        v, empties = self.cp.full(x, self.budget)
        return v, len(empties)

    def warnings(self) -> int:
        if self.bp.kind == "imperative":
            return sum(self.cp.engine.warnings.values())
        return len(self.cp.warnings)


def run_trial(bp: BenchProgram, cfg: ExperimentConfig, split: Split, semantics: Sequence[str], set_mode=False):
    oracles, confs = _environment(cfg)
    ev = _Evaluator(bp, cfg, split.cal, oracles, confs)
    truths = [ev.truth(x) for x in split.test]
    out = {}
    for sem in semantics:
        sizes, covered, empties = [], [], 0
        t0 = time.perf_counter()
        values = []
        for x in split.test:
            v, e = ev.evaluate(sem, x, set_mode)
            values.append(v)
            empties += e
        rt = (time.perf_counter() - t0) / len(split.test)
        for v, y in zip(values, truths):
            sizes.append(value_size(v))
            covered.append(bool(gamma_contains(v, y)))
        out[sem] = TrialResult(sizes, covered, rt, empties, ev.warnings())
    return out


def _summarize(program: str, sem: str, results: list[TrialResult], binarized: bool, mode: str) -> Row:
    sizes = np.concatenate([np.asarray(r.sizes, dtype=float) for r in results])
    covs = np.asarray([np.mean(r.covered) for r in results])
    row = Row(
        program=program,
        semantics=sem,
        avg_size=float(sizes.mean()),
        size_std=float(sizes.std()),
        coverage=float(covs.mean()),
        coverage_std=float(covs.std()),
        runtime=float(np.mean([r.runtime for r in results])),
        abstract_mode=mode,
        empty_meets=int(sum(r.empty_meets for r in results)),
        warnings=int(sum(r.warnings for r in results)),
        n=int(sizes.size),
    )
    if binarized:
        row.uncertain = float(np.mean(sizes == 2))
    return row


def _program_job(args):
    bp, cfg = args
    data = make_data(cfg)
    per_sem: dict[str, list[TrialResult]] = {s: [] for s in cfg.semantics}
    try:
        for t in range(cfg.trials):
            split = data.split(t, bp.kind == "imperative")
            res = run_trial(bp, cfg, split, cfg.semantics, cfg.abstract_mode == "set")
            for s, r in res.items():
                per_sem[s].append(r)
    except Exception as e:  # a failing program is recorded, not fatal
        return [_failed_row(bp.name, s, cfg.abstract_mode, e) for s in cfg.semantics]
    return [_summarize(bp.name, s, per_sem[s], bp.binarized, cfg.abstract_mode) for s in cfg.semantics]


def _failed_row(program: str, sem: str, mode: str, e: Exception) -> Row:
    return Row(program, sem, math.nan, math.nan, math.nan, math.nan, abstract_mode=mode, failure=f"{type(e).__name__}: {e}")


def run_suite(cfg: ExperimentConfig) -> RunReport:
    """Calibrate and measure every selected program under every selected semantics."""
    cfg.validate()
    progs = cfg.selected()
    if cfg.suite == "mnist" and cfg.abstract_mode == "set":
        progs = [p for p in progs if p.kind == "dsl"]
    jobs = [(bp, cfg) for bp in progs]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            chunks = list(ex.map(_program_job, jobs))
    else:
        chunks = [_program_job(j) for j in jobs]
    rows = [r for c in chunks for r in c]
    return RunReport(config=cfg.to_dict(), rows=rows)


def compare_abstract_modes(cfg: ExperimentConfig) -> RunReport:
    """Compositional semantics in interval and set mode on the loop-free digit programs.

    ``extras`` records, per program, the fraction of examples where the
    set-mode size is at most the interval-mode size and where the set-mode
    output is contained in the interval-mode output.
    """
    cfg.validate()
    if cfg.suite != "mnist":
        raise ConfigError("abstract mode comparison needs the digit suite")
    data = MnistData(cfg)
    oracles, confs = _environment(cfg)
    rows, extras = [], {}
    for bp in [p for p in cfg.selected() if p.loop_free]:
        res = {"interval": [], "set": []}
        le = contained = total = 0
        try:
            for t in range(cfg.trials):
                split = data.split(t, False)
                ev = _Evaluator(bp, cfg, split.cal, oracles, confs)
                truths = [ev.truth(x) for x in split.test]
                vals = {}
                for mode in ("interval", "set"):
                    t0 = time.perf_counter()
                    vals[mode] = [ev.evaluate("compositional", x, mode == "set")[0] for x in split.test]
                    rt = (time.perf_counter() - t0) / len(split.test)
                    res[mode].append(
                        TrialResult(
                            [value_size(v) for v in vals[mode]],
                            [bool(gamma_contains(v, y)) for v, y in zip(vals[mode], truths)],
                            rt,
                        )
                    )
                for vi, vs in zip(vals["interval"], vals["set"]):
                    total += 1
                    le += value_size(vs) <= value_size(vi)
                    contained += set_within(vs, vi)
        except SetCardinalityError as e:
            rows += [_failed_row(bp.name, "compositional", m, e) for m in ("interval", "set")]
            continue
        for mode in ("interval", "set"):
            rows.append(_summarize(bp.name, "compositional", res[mode], bp.binarized, mode))
        extras[bp.name] = {"set_le_interval": le / total, "set_within_interval": contained / total}
    return RunReport(config=cfg.to_dict(), rows=rows, extras=extras)


def set_within(s, i) -> bool:
    """γ(s) ⊆ γ(i) for a set-mode and an interval-mode output."""
    if type(s) is IntSet and type(i) is Interval:
        return all(i.lo <= v <= i.hi for v in s.values)
    if type(s) is Interval and type(i) is Interval:
        return i.lo <= s.lo and s.hi <= i.hi
    if type(s) is IntSet and type(i) is IntSet:
        return s.values <= i.values
    return s == i or i is TOP


# ---------------------------------------------------------------------------
# Reports

COLUMNS = ("program", "semantics", "avg_size", "size_std", "coverage", "coverage_std", "runtime")


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def report_to_json(report: RunReport) -> str:
    """Deterministic JSON: wall-clock runtimes are left out."""
    rows = []
    for r in report.rows:
        d = {k: _clean(v) for k, v in dataclasses.asdict(r).items() if k != "runtime"}
        rows.append(d)
    doc = {"version": report.version, "config": report.config, "rows": rows, "extras": report.extras}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report_from_json(text: str) -> RunReport:
    doc = json.loads(text)
    rows = []
    for d in doc["rows"]:
        d = {k: (math.nan if v is None and k in ("avg_size", "size_std", "coverage", "coverage_std") else v) for k, v in d.items()}
        rows.append(Row(**d))
    return RunReport(config=doc["config"], rows=rows, version=doc["version"], extras=doc.get("extras", {}))


def report_to_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS + ("abstract_mode", "uncertain", "empty_meets", "failure"))
    for r in report.rows:
        w.writerow(
            [r.program, r.semantics, f"{r.avg_size:.6g}", f"{r.size_std:.6g}", f"{r.coverage:.6g}",
             f"{r.coverage_std:.6g}", f"{r.runtime:.6g}", r.abstract_mode,
             "" if r.uncertain is None else f"{r.uncertain:.6g}", r.empty_meets, r.failure or ""]
        )
    return buf.getvalue()


def size_ratios(report: RunReport, reference: str = "full") -> dict[str, float]:
    """Per semantics, the mean over programs of avg_size / reference avg_size."""
    progs = []
    for r in report.rows:
        if r.program not in progs:
            progs.append(r.program)
    out = {}
    sems = []
    for r in report.rows:
        if r.semantics not in sems:
            sems.append(r.semantics)
    for s in sems:
        ratios = []
        for p in progs:
            try:
                a, b = report.row(p, s, report.rows[0].abstract_mode), report.row(p, reference, report.rows[0].abstract_mode)
            except KeyError:
                continue
            if a.failure or b.failure or not b.avg_size:
                continue
            ratios.append(a.avg_size / b.avg_size)
        if ratios:
            out[s] = float(np.mean(ratios))
    return out


def _text_table(report: RunReport, progs: list, sems: list, binarized: bool) -> list[str]:
    label = lambda s, m: s if m == "interval" else f"{s}[{m}]"
    heads = [label(*s) for s in sems]
    width = max([len(p) for p in progs] + [24])
    metric = "uncertain" if binarized else "avg size"
    lines = [f"{'program':<{width}}  " + "  ".join(f"{h + ' ' + metric:>26}" for h in heads)
             + "  " + "  ".join(f"{h + ' coverage':>22}" for h in heads)]
    for p in progs:
        cells, covs = [], []
        for s, m in sems:
            try:
                r = report.row(p, s, m)
            except KeyError:
                cells.append(f"{'-':>26}")
                covs.append(f"{'-':>22}")
                continue
            if r.failure:
                cells.append(f"{'FAILED':>26}")
                covs.append(f"{'FAILED':>22}")
                continue
            if binarized:
                cells.append(f"{r.uncertain:>26.3f}")
            else:
                cells.append(f"{r.avg_size:>15.3f} ± {r.size_std:<8.2f}")
            covs.append(f"{r.coverage:>12.3f} ± {r.coverage_std:<6.3f}")
        lines.append(f"{p:<{width}}  " + "  ".join(cells) + "  " + "  ".join(covs))
    if not binarized and any(s == "full" for s, _ in sems):
        sub = RunReport(report.config, [r for r in report.rows if r.program in progs])
        ratios = size_ratios(sub)
        lines.append(
            f"{'set size / our set size':<{width}}  "
            + "  ".join(f"{(f'{ratios[s]:.2f}x' if s in ratios else '-'):>26}" for s, _ in sems)
        )
    return lines


def report_to_text(report: RunReport) -> str:
    """Tables of sizes (or uncertain fractions), coverages and runtimes."""
    sems, progs, binarized = [], [], set()
    for r in report.rows:
        if (r.semantics, r.abstract_mode) not in sems:
            sems.append((r.semantics, r.abstract_mode))
        if r.program not in progs:
            progs.append(r.program)
        if r.uncertain is not None:
            binarized.add(r.program)
    lines = []
    plain = [p for p in progs if p not in binarized]
    if plain:
        lines += _text_table(report, plain, sems, False) + [""]
    if binarized:
        lines += _text_table(report, [p for p in progs if p in binarized], sems, True) + [""]
    width = max([len(p) for p in progs] + [24])
    label = lambda s, m: s if m == "interval" else f"{s}[{m}]"
    lines.append(f"{'program':<{width}}  " + "  ".join(f"{label(*s) + ' runtime (s)':>26}" for s in sems))
    for p in progs:
        cells = []
        for s, m in sems:
            try:
                cells.append(f"{report.row(p, s, m).runtime:>26.3e}")
            except KeyError:
                cells.append(f"{'-':>26}")
        lines.append(f"{p:<{width}}  " + "  ".join(cells))
    return "\n".join(lines) + "\n"


def emit_report(report: RunReport, fmt: str, path: str | Path) -> Path:
    path = Path(path)
    if fmt == "json":
        text = report_to_json(report)
    elif fmt == "csv":
        text = report_to_csv(report)
    elif fmt == "text":
        text = report_to_text(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
