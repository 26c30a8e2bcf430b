"""Golden walkthroughs: the counting query over detections and the loop example.

Both use fixed fixtures in place of trained models, so every value is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .conformal import ConformalPredictor, IntDirect
from .domain import BOTTOM, TOP, TT, AbstractList, AbstractTuple, CatSet, Interval, meet
from .dsl import MLOracle, parse_program
from .imperative import ImperativeConformal, abstract_store, parse_imperative
from .programs import FIG7

COUNT_LEFT = "(foldr add (map (lam d 1) (filter (lam d (and (cat= d person) (le (x d) 300))) (detect X))) 0)"


def _det(cats: tuple, x: tuple, y: tuple, flag=TT):
    return (AbstractTuple((CatSet.of(*cats), Interval(*x), Interval(*y))), flag)


# Conformal detector output for the fixture image: one sure person near the
# left edge, one person straddling x=300, one entry that may be a car, a car,
# and a possibly-spurious person on the right.
FIG1_ABSTRACT_DETECTIONS = AbstractList(
    [
        _det(("person",), (90, 110), (200, 240)),
        _det(("person",), (280, 320), (150, 190)),
        _det(("person", "car"), (40, 60), (300, 340)),
        _det(("car",), (100, 120), (380, 420)),
        _det(("person",), (500, 540), (210, 250), TOP),
    ]
)
FIG1_GROUND_TRUTH = [("person", 100, 220), ("person", 290, 170), ("car", 50, 320), ("car", 110, 400)]
FIG1_STANDARD = [("person", 100, 220), ("person", 310, 170), ("car", 50, 320), ("car", 110, 400)]


@dataclass
class Fig1Result:
    ground_truth: int
    standard: int
    direct: Interval
    compositional: Interval
    full: Interval


def fig1_walkthrough(direct_tau: float = -1.0) -> Fig1Result:
    """Four semantics of the left-side person count on the fixture image.

    The direct predictor's threshold ``direct_tau`` gives radius ``-tau``.
    """
    p = parse_program(COUNT_LEFT, "image", name="people within 300 px of the left edge")
    image = "fixture-image"
    oracle = MLOracle(ground_truth=lambda _: FIG1_GROUND_TRUTH, predict=lambda _: FIG1_STANDARD)
    oracles = {"detect": oracle}
    gt = p.eval_ground_truth(image, oracles)
    trace: dict = {}
    std = p.eval_standard(image, oracles, trace=trace)
    cal = ConformalPredictor("fixture", direct_tau, 0.05, 0.05, 1, 0)
    direct = IntDirect(cal)(std)
    sites = {"(detect X)": lambda _x: FIG1_ABSTRACT_DETECTIONS}
    comp, _ = p.eval_abstract(image, sites)
    full, _ = p.eval_abstract(image, sites, direct={p.root.nid: IntDirect(cal)}, std_trace=trace)
    assert full == meet(direct, comp)
    return Fig1Result(gt, std, direct, comp, full)


# ---------------------------------------------------------------------------
# Loop example

# digit values stand in for images; the oracle's ground truth is the identity
FIG7_TEST = {"x": [3, 9], "k": 0, "v": 0}
FIG7_CALIBRATION = [{"x": [7, 2], "k": 0, "v": 0}, {"x": [4, 8, 1], "k": 0, "v": 0}]
FIG7_MOCK_OUTPUTS = (Interval(3, 6), Interval(8, 9))


class _Fixed:
    def __init__(self, value):
        self.value = value

    def predict(self, x, set_mode: bool = False):
        return self.value


class MockConformalizer:
    """Returns the scripted outputs in order and records each calibration call."""

    def __init__(self, outputs):
        self.outputs = list(outputs)
        self.calls: list[dict] = []

    def calibrate(self, kind, items, labels, epsilon, delta):
        i = len(self.calls)
        self.calls.append({"labels": list(labels), "epsilon": epsilon, "delta": delta})
        return _Fixed(self.outputs[min(i, len(self.outputs) - 1)])


@dataclass
class Fig7Result:
    k: Interval
    v: Interval
    iterations: list = field(default_factory=list)  # (abstract store, calibration stores) per unrolling
    final_calibration: list = field(default_factory=list)
    calls: list = field(default_factory=list)


def _strip(store):
    if store is BOTTOM:
        return BOTTOM
    return {k: store[k] for k in ("k", "v")}


def fig7_walkthrough(epsilon: float = 0.1, delta: float = 0.05) -> Fig7Result:
    """Run the loop of the example on the fixture stores with mocked conformal outputs.

    Stores enter the loop after ``k := 0; v := 0``; the first unrolling
    calibrates at ε/2 and the second at ε/4.
    """
    prog = parse_imperative(FIG7)
    loop = prog.second.second.second  # skip k := 0; v := 0; b := le v 5
    conf = MockConformalizer(FIG7_MOCK_OUTPUTS)
    oracle = MLOracle(ground_truth=lambda im: im, predict=lambda im: im)
    entry = [dict(s, b=int(s["v"] <= 5)) for s in FIG7_CALIBRATION]
    eng = ImperativeConformal(loop, oracle, conf, entry, split="ml_aware")
    eng.loop_trace = []
    test = dict(FIG7_TEST, b=int(FIG7_TEST["v"] <= 5))
    A, _, sid = eng.exec(loop, abstract_store(test), None, eng.init_sid, epsilon, delta)
    iters = [
        (_strip(a), [_strip(g) for g in eng.state(c).gts]) for (_, _, a, c) in eng.loop_trace
    ]
    final = [_strip(g) for g in eng.calibration_stores(sid)]
    return Fig7Result(A["k"], A["v"], iters, final, conf.calls)


def format_fig1(r: Fig1Result) -> str:
    return "\n".join(
        [
            f"ground truth   {r.ground_truth}",
            f"standard       {r.standard}",
            f"direct         {r.direct!r}",
            f"compositional  {r.compositional!r}",
            f"full           {r.full!r}",
        ]
    )


def format_fig7(r: Fig7Result) -> str:
    lines = []
    for m, (a, cal) in enumerate(r.iterations, 1):
        lines.append(f"unrolling {m}: abstract {a}  calibration {cal}")
    for c in r.calls:
        lines.append(f"calibrated on labels {c['labels']} at epsilon {c['epsilon']:g}")
    lines.append(f"after loop: k = {r.k!r}, v = {r.v!r}")
    lines.append(f"calibration stores after loop: {r.final_calibration}")
    return "\n".join(lines)
