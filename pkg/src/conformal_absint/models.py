"""Simulated ML components and their conformalizers.

Digit classifier
    Each ``DigitInstance`` carries a 10-way score vector. Logits of wrong
    labels are standard normal minus a penalty growing with the distance to
    the true label; the true logit sits a random positive gap above the best
    wrong logit. Noisy instances lose ``eta`` times an exponential draw from
    that gap and are softened by a temperature ``1 + temp_slope * eta``. The
    random draws are shared across ``eta`` so accuracy only decreases as
    ``eta`` grows, and ``eta = 0`` never misclassifies.

Object detector
    Scenes hold true objects on a 640x480 canvas. The simulated detector
    emits one prediction per object (unless missed) with a perturbed centre,
    a perturbed box size and a score vector ``objectness * category_probs``
    whose leftover mass is background; "hard" objects get low objectness.
    Spurious low-objectness predictions are added per scene. The standard
    detector output keeps predictions whose best category score is at least
    ``confidence``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .conformal import ConformalPredictor, pac_calibrate
from .domain import (
    TOP,
    TT,
    AbstractList,
    AbstractTuple,
    CATEGORIES,
    CatSet,
    Interval,
    IntSet,
    KindError,
)
from .dsl import MLOracle

N_CLASSES = 10


# ---------------------------------------------------------------------------
# Digits


@dataclass(frozen=True)
class DigitSimParams:
    noisy_fraction: float = 0.8
    distance_penalty: float = 0.15
    gap_median: float = 3.0
    gap_spread: float = 0.6
    noise_scale: float = 6.0
    temp_slope: float = 1.0


@dataclass(eq=False)
class DigitInstance:
    index: int
    true_label: int
    noisy: bool
    scores: np.ndarray

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.scores))

    def __repr__(self) -> str:
        return f"Digit#{self.index}(y={self.true_label}, yhat={self.prediction})"


def _digit_draws(seed: int, index: int):
    rng = np.random.default_rng([seed, index])
    label = int(rng.integers(0, N_CLASSES))
    u_noisy = float(rng.random())
    others = rng.normal(0.0, 1.0, N_CLASSES)
    z_gap = float(rng.normal())
    hit = float(rng.exponential(1.0))
    return label, u_noisy, others, z_gap, hit


def make_digit(seed: int, index: int, eta: float, params: DigitSimParams = DigitSimParams()) -> DigitInstance:
    label, u_noisy, others, z_gap, hit = _digit_draws(seed, index)
    noisy = u_noisy < params.noisy_fraction
    logits = others - params.distance_penalty * np.abs(np.arange(N_CLASSES) - label)
    logits[label] = -np.inf
    best_other = logits.max()
    gap = params.gap_median * math.exp(params.gap_spread * z_gap)
    temp = 1.0
    if noisy:
        gap -= eta * params.noise_scale * hit
        temp += params.temp_slope * eta
    logits[label] = best_other + gap
    z = logits / temp
    z = z - z.max()
    p = np.exp(z)
    p /= p.sum()
    return DigitInstance(index, label, noisy, p)


def gen_digit_dataset(
    n: int, eta: float, seed: int, params: DigitSimParams = DigitSimParams(), start: int = 0
) -> list[DigitInstance]:
    """``n`` simulated digits, deterministic in ``(seed, index, eta)``."""
    if n < 1:
        raise ValueError("n must be positive")
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    return [make_digit(seed, start + i, eta, params) for i in range(n)]


def digit_oracle() -> MLOracle:
    return MLOracle(
        ground_truth=lambda im: im.true_label,
        predict=lambda im: im.prediction,
        scorer=lambda im, y: float(im.scores[y]),
    )


def _label_set(instance: DigitInstance, tau: float) -> np.ndarray:
    s = np.flatnonzero(instance.scores >= tau)
    if s.size == 0:
        return np.array([instance.prediction])
    return s


def classifier_conformal(instance: DigitInstance, tau: float) -> Interval:
    """Interval hull of ``{y : score_y >= tau}`` (argmax if that is empty)."""
    s = _label_set(instance, tau)
    return Interval(int(s[0]), int(s[-1]))


def classifier_conformal_set(instance: DigitInstance, tau: float) -> IntSet:
    return IntSet(int(v) for v in _label_set(instance, tau))


@dataclass(frozen=True)
class ClassifierPredictor:
    cal: ConformalPredictor
    kind: str = "map"

    def item(self, instance: DigitInstance, set_mode: bool = False):
        if set_mode:
            return classifier_conformal_set(instance, self.cal.tau)
        return classifier_conformal(instance, self.cal.tau)

    def predict(self, x, set_mode: bool = False):
        if self.kind == "map":
            return AbstractList([(self.item(im, set_mode), TT) for im in x])
        return self.item(x, set_mode)


class ClassifierConformalizer:
    """Conformalizes the digit classifier.

    For a single image the score is the softmax score of the true label. For
    a mapped list site the score is the minimum over the list, so one
    threshold covers every element of the list at once.
    """

    def calibrate(self, kind: str, args: Sequence[tuple], truths: Sequence[Any], epsilon: float, delta: float):
        if kind == "map":
            scores = [
                min((float(im.scores[y]) for im, y in zip(a[0], t)), default=math.inf)
                for a, t in zip(args, truths)
            ]
        elif kind == "apply":
            scores = [float(a[0].scores[t]) for a, t in zip(args, truths)]
        else:
            raise KindError(f"unknown site kind {kind!r}")
        return ClassifierPredictor(pac_calibrate(scores, epsilon, delta, f"classifier-{kind}"), kind)


# ---------------------------------------------------------------------------
# Scenes and detections


@dataclass(frozen=True)
class TrueDetection:
    cat: str
    n: int
    m: int
    w: float = 60.0
    h: float = 60.0

    def concrete(self) -> tuple[str, int, int]:
        return (self.cat, self.n, self.m)


@dataclass(frozen=True)
class PredictedDetection:
    s: tuple[float, ...]
    n: float
    m: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError("predicted box width and height must be positive")

    @property
    def max_score(self) -> float:
        return max(self.s)

    @property
    def argmax_cat(self) -> str:
        return CATEGORIES.name(int(np.argmax(self.s)))

    def score_of(self, cat: str) -> float:
        return self.s[CATEGORIES.id(cat)]


@dataclass(frozen=True)
class SceneParams:
    width: int = 640
    height: int = 480
    mean_objects: float = 4.0
    max_objects: int = 12
    person_prob: float = 0.6
    min_size: float = 24.0
    max_size: float = 160.0


@dataclass(frozen=True)
class DetectorNoise:
    center_sigma: float = 5.0
    size_sigma: float = 0.1
    objectness_noise: float = 0.35
    hard_rate: float = 0.08
    confusion: float = 0.3
    wrong_rate: float = 0.03
    miss_rate: float = 0.002
    spurious_rate: float = 1.2
    spurious_a: float = 1.2
    spurious_b: float = 6.0
    confidence: float = 0.5


@dataclass(eq=False)
class Scene:
    index: int
    width: int
    height: int
    truths: tuple[TrueDetection, ...]
    preds: tuple[PredictedDetection, ...] = ()
    confidence: float = 0.5
    _gt: list | None = field(default=None, repr=False)
    _matching: dict | None = field(default=None, repr=False)

    def matching(self) -> dict[int, int]:
        if self._matching is None:
            self._matching = match_detections(self.truths, self.preds) if self.preds else {}
        return self._matching

    def ground_truth(self) -> list[tuple[str, int, int]]:
        """True detections ordered by the index of their matched prediction."""
        if self._gt is None:
            mt = self.matching()
            order = sorted(range(len(self.truths)), key=lambda i: (mt.get(i, len(self.preds)), i))
            self._gt = [self.truths[i].concrete() for i in order]
        return list(self._gt)

    def standard(self) -> list[tuple[str, int, int]]:
        out = []
        for p in self.preds:
            if p.max_score >= self.confidence:
                out.append((p.argmax_cat, _clamp(round(p.n), 0, self.width - 1), _clamp(round(p.m), 0, self.height - 1)))
        return out

    def __repr__(self) -> str:
        return f"Scene#{self.index}({len(self.truths)} objects, {len(self.preds)} predictions)"


def _clamp(v: int, lo: int, hi: int) -> int:
    return lo if v < lo else hi if v > hi else v


def _poisson_truncated(rng: np.random.Generator, mean: float, cap: int) -> int:
    if cap <= 0:
        return 0
    return int(min(rng.poisson(mean), cap))


def gen_scene_dataset(n: int, params: SceneParams = SceneParams(), seed: int = 0, start: int = 0) -> list[Scene]:
    """``n`` scenes of true objects (no predictions yet)."""
    scenes = []
    for i in range(start, start + n):
        rng = np.random.default_rng([seed, i, 0])
        k = _poisson_truncated(rng, params.mean_objects, params.max_objects)
        truths = []
        for _ in range(k):
            cat = "person" if rng.random() < params.person_prob else "car"
            truths.append(
                TrueDetection(
                    cat,
                    int(rng.integers(0, params.width)),
                    int(rng.integers(0, params.height)),
                    float(rng.uniform(params.min_size, params.max_size)),
                    float(rng.uniform(params.min_size, params.max_size)),
                )
            )
        scenes.append(Scene(i, params.width, params.height, tuple(truths)))
    return scenes


def _cat_probs(rng: np.random.Generator, true_id: int, noise: DetectorNoise) -> np.ndarray:
    k = len(CATEGORIES)
    p = np.zeros(k)
    if rng.random() < noise.wrong_rate:
        pt = rng.uniform(0.05, 0.45)
    else:
        pt = 1.0 - noise.confusion * rng.beta(1.0, 5.0) if noise.confusion > 0 else 1.0
    p[true_id] = pt
    if k > 1:
        rest = rng.dirichlet(np.ones(k - 1)) * (1.0 - pt)
        p[[j for j in range(k) if j != true_id]] = rest
    return p


def detector_predict(scene: Scene, noise: DetectorNoise = DetectorNoise(), seed: int = 0) -> list[PredictedDetection]:
    """Simulated detector output for one scene, deterministic in (seed, scene index)."""
    rng = np.random.default_rng([seed, scene.index, 1])
    preds = []
    for t in scene.truths:
        if rng.random() < noise.miss_rate:
            continue
        if rng.random() < noise.hard_rate:
            obj = rng.uniform(0.1, 0.5)
        else:
            obj = 1.0 - noise.objectness_noise * rng.beta(1.0, 4.0)
        p = _cat_probs(rng, CATEGORIES.id(t.cat), noise)
        n = t.n + noise.center_sigma * rng.normal()
        m = t.m + noise.center_sigma * rng.normal()
        w = t.w * math.exp(noise.size_sigma * rng.normal())
        h = t.h * math.exp(noise.size_sigma * rng.normal())
        preds.append(PredictedDetection(tuple(float(v) for v in obj * p), float(n), float(m), float(w), float(h)))
    n_spur = int(rng.poisson(noise.spurious_rate)) if noise.spurious_rate > 0 else 0
    k = len(CATEGORIES)
    for _ in range(n_spur):
        obj = rng.beta(noise.spurious_a, noise.spurious_b)
        p = rng.dirichlet(np.ones(k))
        preds.append(
            PredictedDetection(
                tuple(float(v) for v in obj * p),
                float(rng.uniform(0, scene.width)),
                float(rng.uniform(0, scene.height)),
                float(rng.uniform(24.0, 160.0)),
                float(rng.uniform(24.0, 160.0)),
            )
        )
    order = rng.permutation(len(preds))
    return [preds[j] for j in order]


def gen_detection_dataset(
    n: int,
    seed: int,
    params: SceneParams = SceneParams(),
    noise: DetectorNoise = DetectorNoise(),
) -> list[Scene]:
    scenes = gen_scene_dataset(n, params, seed)
    for s in scenes:
        s.preds = tuple(detector_predict(s, noise, seed))
        s.confidence = noise.confidence
    return scenes


def _overlap(t: TrueDetection, p: PredictedDetection) -> float:
    """IoU between a box of size (p.w, p.h) at the truth centre and the predicted box."""
    ix = max(0.0, p.w - abs(t.n - p.n))
    iy = max(0.0, p.h - abs(t.m - p.m))
    inter = ix * iy
    area = p.w * p.h
    return inter / (2 * area - inter)


def match_detections(truths: Sequence[TrueDetection], preds: Sequence[PredictedDetection]) -> dict[int, int]:
    """Match each truth to the prediction with the largest box overlap.

    Ties go to the smaller centre distance, then the lower prediction index.
    Several truths may share one prediction.
    """
    if not preds:
        raise LookupError("no candidate predictions to match against")
    out = {}
    for i, t in enumerate(truths):
        best = min(
            range(len(preds)),
            key=lambda j: (-_overlap(t, preds[j]), math.hypot(t.n - preds[j].n, t.m - preds[j].m), j),
        )
        out[i] = best
    return out


def detection_scores(scene: Scene, truths=None, preds=None, matching=None) -> tuple[float, float, float, float]:
    """``(g_d1, g_d1', g_d2, g_d3)`` for one scene; ``(1, 1, 0, 0)`` if it has no objects."""
    truths = scene.truths if truths is None else truths
    preds = scene.preds if preds is None else preds
    if not truths:
        return (1.0, 1.0, 0.0, 0.0)
    if not preds:
        return (0.0, 0.0, math.inf, math.inf)
    matching = match_detections(truths, preds) if matching is None else matching
    cs = [preds[matching[i]].score_of(t.cat) for i, t in enumerate(truths)]
    d2 = [abs(t.n - preds[matching[i]].n) / preds[matching[i]].w for i, t in enumerate(truths)]
    d3 = [abs(t.m - preds[matching[i]].m) / preds[matching[i]].h for i, t in enumerate(truths)]
    return (max(cs), min(cs), max(d2), max(d3))


def spurious_score(scene: Scene, matching=None) -> float:
    """Best category score among predictions no truth is matched to (0 if none)."""
    if not scene.preds:
        return 0.0
    matching = scene.matching() if matching is None else matching
    used = set(matching.values())
    return max((p.max_score for j, p in enumerate(scene.preds) if j not in used), default=0.0)


@dataclass(frozen=True)
class DetectorThresholds:
    """Calibrated detector thresholds.

    ``tau_d1``: a prediction is definitely present iff its best category
    score exceeds it. ``tau_d1p``: categories scoring at least this are kept.
    ``tau_d2``/``tau_d3``: centre offsets up to this multiple of the box
    width/height are covered.
    """

    tau_d1: float
    tau_d1p: float
    tau_d2: float
    tau_d3: float
    deltas: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    epsilons: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)


@dataclass
class DetectorPredictor:
    th: DetectorThresholds
    width: int = 640
    height: int = 480
    empty_catsets: int = 0

    def predict(self, scene: Scene, set_mode: bool = False) -> AbstractList:
        return conformal_detector(scene.preds, self.th, self.width, self.height, self)


def conformal_detector(
    preds: Sequence[PredictedDetection],
    th: DetectorThresholds,
    width: int = 640,
    height: int = 480,
    diag: DetectorPredictor | None = None,
) -> AbstractList:
    entries = []
    full = (1 << len(CATEGORIES)) - 1
    for p in preds:
        bits = 0
        for c, sc in enumerate(p.s):
            if sc >= th.tau_d1p:
                bits |= 1 << c
        if th.tau_d1p == -math.inf:
            bits = full
        if bits == 0:
            bits = 1 << int(np.argmax(p.s))
            if diag is not None:
                diag.empty_catsets += 1
        if math.isinf(th.tau_d2):
            ix = Interval(0, width - 1)
        else:
            ix = Interval(
                _clamp(math.floor(p.n - th.tau_d2 * p.w), 0, width - 1),
                _clamp(math.ceil(p.n + th.tau_d2 * p.w), 0, width - 1),
            )
        if math.isinf(th.tau_d3):
            iy = Interval(0, height - 1)
        else:
            iy = Interval(
                _clamp(math.floor(p.m - th.tau_d3 * p.h), 0, height - 1),
                _clamp(math.ceil(p.m + th.tau_d3 * p.h), 0, height - 1),
            )
        flag = TT if p.max_score > th.tau_d1 else TOP
        entries.append((AbstractTuple((CatSet(bits), ix, iy)), flag))
    return AbstractList(entries)


def detector_oracle() -> MLOracle:
    return MLOracle(ground_truth=lambda s: s.ground_truth(), predict=lambda s: s.standard())


class DetectorConformalizer:
    """Calibrates presence, category and location thresholds on scenes.

    The ε and δ shares are split over the four score streams by ``shares``.
    """

    def __init__(self, shares: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)):
        if abs(sum(shares) - 1.0) > 1e-9 or min(shares) < 0:
            raise ValueError("shares must be nonnegative and sum to 1")
        self.shares = shares

    def thresholds(self, scenes: Sequence[Scene], epsilon: float, delta: float) -> DetectorThresholds:
        spur, d1p, d2, d3 = [], [], [], []
        for s in scenes:
            g = detection_scores(s, matching=s.matching() if s.preds else None)
            spur.append(-spurious_score(s))
            d1p.append(g[1])
            d2.append(-g[2])
            d3.append(-g[3])
        eps = tuple(epsilon * w for w in self.shares)
        dl = tuple(delta * w for w in self.shares)
        c_sp = pac_calibrate(spur, eps[0], dl[0], "det-presence")
        c_1p = pac_calibrate(d1p, eps[1], dl[1], "det-category")
        c_2 = pac_calibrate(d2, eps[2], dl[2], "det-x")
        c_3 = pac_calibrate(d3, eps[3], dl[3], "det-y")
        return DetectorThresholds(
            tau_d1=-c_sp.tau,
            tau_d1p=c_1p.tau,
            tau_d2=-c_2.tau,
            tau_d3=-c_3.tau,
            deltas=dl,
            epsilons=eps,
        )

    def calibrate(self, kind: str, args: Sequence[tuple], truths: Sequence[Any], epsilon: float, delta: float):
        if kind != "apply":
            raise KindError("the detector is applied directly to the input scene")
        scenes = [a[0] for a in args]
        th = self.thresholds(scenes, epsilon, delta)
        w = scenes[0].width if scenes else 640
        h = scenes[0].height if scenes else 480
        return DetectorPredictor(th, w, h)


# ---------------------------------------------------------------------------
# Snapshots


def save_digits(path: str | Path, digits: Iterable[DigitInstance]) -> None:
    with open(path, "w") as f:
        for d in digits:
            rec = {"index": d.index, "true_label": d.true_label, "noisy": d.noisy, "scores": [float(v) for v in d.scores]}
            f.write(json.dumps(rec) + "\n")


def load_digits(path: str | Path) -> list[DigitInstance]:
    out = []
    with open(path) as f:
        for line in f:
            if line.strip():
                r = json.loads(line)
                out.append(DigitInstance(r["index"], r["true_label"], r["noisy"], np.asarray(r["scores"], dtype=float)))
    return out


def save_scenes(path: str | Path, scenes: Iterable[Scene]) -> None:
    with open(path, "w") as f:
        for s in scenes:
            rec = {
                "index": s.index,
                "width": s.width,
                "height": s.height,
                "confidence": s.confidence,
                "truths": [asdict(t) for t in s.truths],
                "preds": [{"s": list(p.s), "n": p.n, "m": p.m, "w": p.w, "h": p.h} for p in s.preds],
            }
            f.write(json.dumps(rec) + "\n")


def load_scenes(path: str | Path) -> list[Scene]:
    out = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            r = json.loads(line)
            out.append(
                Scene(
                    r["index"],
                    r["width"],
                    r["height"],
                    tuple(TrueDetection(**t) for t in r["truths"]),
                    tuple(PredictedDetection(tuple(p["s"]), p["n"], p["m"], p["w"], p["h"]) for p in r["preds"]),
                    r.get("confidence", 0.5),
                )
            )
    return out
