"""PAC calibration, direct/compositional/full conformal semantics, ε budgets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Mapping, Protocol, Sequence

import numpy as np
from scipy.stats import binom

from .domain import (
    CATEGORIES,
    INT_MAX,
    INT_MIN,
    TOP,
    AbstractTuple,
    CatSet,
    Interval,
    alpha,
)
from .dsl import BOOL, CAT, INT, MLOracle, PrimType, Program, range_kind


class CalibrationError(ValueError):
    pass


class UnsupportedRangeError(ValueError):
    pass


class BudgetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# PAC prediction sets


@lru_cache(maxsize=4096)
def pac_k_allowed(n: int, epsilon: float, delta: float) -> int:
    """Largest k with BinomCDF(k; n, epsilon) <= delta, or -1 if none.

    ε = 0 or δ = 0 is allowed and always gives -1 (the full set).
    """
    if n < 1:
        raise CalibrationError("need at least one calibration score")
    if not (0 <= epsilon < 1 and 0 <= delta < 1):
        raise CalibrationError(f"epsilon and delta must lie in [0, 1), got {epsilon}, {delta}")
    if epsilon == 0 or delta == 0:
        return -1
    cdf = binom.cdf(np.arange(n + 1), n, epsilon)
    return int(np.searchsorted(cdf, delta, side="right")) - 1


@dataclass(frozen=True)
class ConformalPredictor:
    """Calibrated threshold: scores ``>= tau`` are inside the prediction set."""

    scorer_id: str
    tau: float
    epsilon: float
    delta: float
    n_cal: int
    k_allowed: int

    @property
    def is_full(self) -> bool:
        return self.tau == -math.inf


def pac_calibrate(scores: Sequence[float], epsilon: float, delta: float, scorer_id: str = "") -> ConformalPredictor:
    """Calibrate a PAC threshold on conformity scores (larger = more conforming).

    ``tau`` is the ``(k+1)``-th smallest score, so at most ``k`` calibration
    scores fall strictly below it.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise CalibrationError("need a non-empty 1-d list of scores")
    if np.isnan(s).any():
        raise CalibrationError("scores contain NaN")
    n = int(s.size)
    k = pac_k_allowed(n, float(epsilon), float(delta))
    if k < 0:
        tau = -math.inf
    else:
        tau = float(np.partition(s, k)[k])
    return ConformalPredictor(scorer_id, tau, float(epsilon), float(delta), n, k)


# ---------------------------------------------------------------------------
# Direct predictors


def _top_of(t: PrimType):
    if t == BOOL:
        return TOP
    if t == CAT:
        return CatSet((1 << len(CATEGORIES)) - 1)
    if t == INT:
        return Interval(INT_MIN, INT_MAX)
    raise UnsupportedRangeError(f"no top element for {t!r}")


def int_radius(tau: float, scale: float = 1.0) -> int | None:
    """Radius of ``{y : -|y - s| / scale >= tau}`` for integer ``y``; None if unbounded."""
    if tau == -math.inf:
        return None
    t = -tau * scale
    if t < 0:
        return 0
    # y and the centre are integers, so |y - s| <= t iff |y - s| <= floor(t)
    return int(math.floor(t + 1e-9))


@dataclass(frozen=True)
class IntDirect:
    """Interval around the standard value; scores are ``-|y - std| / sigma(std)``."""

    cal: ConformalPredictor
    sigma: Callable[[int], float] | None = None

    def __call__(self, std: int) -> Interval:
        scale = 1.0 if self.sigma is None else float(self.sigma(std))
        r = int_radius(self.cal.tau, scale)
        if r is None:
            return Interval(INT_MIN, INT_MAX)
        return Interval(max(INT_MIN, std - r), min(INT_MAX, std + r))


@dataclass(frozen=True)
class DiscreteDirect:
    """Either the singleton standard value or the whole finite range."""

    cal: ConformalPredictor
    type: PrimType

    def __call__(self, std):
        if self.cal.tau > 0:
            return alpha(std)
        return _top_of(self.type)


@dataclass(frozen=True)
class ProductDirect:
    parts: tuple

    def __call__(self, std: tuple):
        return AbstractTuple(p(s) for p, s in zip(self.parts, std))


def int_scores(truth: Sequence[int], std: Sequence[int], sigma: Callable[[int], float] | None = None) -> np.ndarray:
    y = np.asarray(truth, dtype=float)
    s = np.asarray(std, dtype=float)
    d = -np.abs(y - s)
    if sigma is not None:
        d = d / np.asarray([sigma(v) for v in std], dtype=float)
    return d


def discrete_scores(truth: Sequence[Any], std: Sequence[Any]) -> np.ndarray:
    # every ground-truth value lies in the range, so the -1 case never fires
    return np.asarray([1.0 if y == s else 0.0 for y, s in zip(truth, std)])


def direct_score(y, std, t: PrimType) -> float:
    """Conformity of candidate ``y`` given the standard output ``std``."""
    kind = range_kind(t)
    if kind == "int":
        return -abs(y - std)
    if kind == "discrete":
        if y == std:
            return 1.0
        in_range = isinstance(y, bool) if t == BOOL else (isinstance(y, str) and y in CATEGORIES)
        return 0.0 if in_range else -1.0
    raise UnsupportedRangeError(f"no direct scoring for range {t!r}")


def calibrate_direct(
    t: PrimType,
    truth: Sequence[Any],
    std: Sequence[Any],
    epsilon: float,
    delta: float,
    sigma: Callable[[int], float] | None = None,
):
    kind = range_kind(t)
    if kind == "int":
        return IntDirect(pac_calibrate(int_scores(truth, std, sigma), epsilon, delta, "direct-int"), sigma)
    if kind == "discrete":
        return DiscreteDirect(pac_calibrate(discrete_scores(truth, std), epsilon, delta, "direct-discrete"), t)
    if kind == "product":
        m = len(t.args)
        parts = tuple(
            calibrate_direct(a, [y[i] for y in truth], [s[i] for s in std], epsilon / m, delta / m)
            for i, a in enumerate(t.args)
        )
        return ProductDirect(parts)
    raise UnsupportedRangeError(f"no direct scoring for range {t!r}")


# ---------------------------------------------------------------------------
# ε budget


@dataclass(frozen=True)
class Even:
    """ε/(1+k) for the direct part and for each of k ML sites."""


@dataclass(frozen=True)
class SingleSplit:
    eps0: float
    eps1: float


@dataclass(frozen=True)
class Weighted:
    """Absolute ε shares keyed by site id (``direct`` or ``ml:<key>``)."""

    weights: Mapping[str, float]


@dataclass(frozen=True)
class EpsilonBudget:
    total: float
    delta: float
    direct: float
    per_site: Mapping[str, float] = field(default_factory=dict)
    delta_per_site: Mapping[str, float] = field(default_factory=dict)

    def eps(self, site: str) -> float:
        return self.per_site[site]

    def dlt(self, site: str) -> float:
        return self.delta_per_site[site]

    def check(self) -> None:
        used = sum(self.per_site.values())
        if any(v < 0 for v in self.per_site.values()):
            raise BudgetError("negative ε share")
        if used > self.total * (1 + 1e-9):
            raise BudgetError(f"ε shares sum to {used} > {self.total}")


def ml_site_id(key: str) -> str:
    return f"ml:{key}"


def direct_site_id(nid: int) -> str:
    return f"direct:{nid}"


def allocate_epsilon(p: Program, epsilon: float, delta: float, policy=Even()) -> EpsilonBudget:
    """Split ε (and δ in the same proportions) over direct and ML sites."""
    if not (epsilon > 0 and delta > 0):
        raise BudgetError("ε and δ must be positive")
    k = p.n_ml_sites
    if isinstance(policy, Even):
        eps0 = epsilon / (1 + k)
        ml_each = {ml_site_id(key): epsilon / (1 + k) for key in p.site_keys}
    elif isinstance(policy, SingleSplit):
        if policy.eps0 < 0 or policy.eps1 < 0 or policy.eps0 + policy.eps1 > epsilon * (1 + 1e-9):
            raise BudgetError(f"split {policy.eps0} + {policy.eps1} exceeds ε = {epsilon}")
        eps0 = policy.eps0
        ml_each = {ml_site_id(key): policy.eps1 / k for key in p.site_keys} if k else {}
    elif isinstance(policy, Weighted):
        w = dict(policy.weights)
        if any(v < 0 for v in w.values()):
            raise BudgetError("weights must be nonnegative")
        if sum(w.values()) > epsilon * (1 + 1e-9):
            raise BudgetError(f"weights sum to {sum(w.values())} > ε = {epsilon}")
        unknown = set(w) - {"direct"} - {ml_site_id(key) for key in p.site_keys}
        if unknown:
            raise BudgetError(f"unknown sites in weights: {sorted(unknown)}")
        eps0 = w.get("direct", 0.0)
        ml_each = {ml_site_id(key): w.get(ml_site_id(key), 0.0) for key in p.site_keys}
    else:
        raise BudgetError(f"unknown policy {policy!r}")

    per_site = dict(ml_each)
    if p.direct_sites:
        for nid in p.direct_sites:
            per_site[direct_site_id(nid)] = eps0 / len(p.direct_sites)
    ratio = delta / epsilon
    budget = EpsilonBudget(
        total=epsilon,
        delta=delta,
        direct=eps0,
        per_site=per_site,
        delta_per_site={s: e * ratio for s, e in per_site.items()},
    )
    budget.check()
    return budget


# ---------------------------------------------------------------------------
# Conformalizers for ML sites


class Conformalizer(Protocol):
    def calibrate(self, kind: str, args: Sequence[tuple], truths: Sequence[Any], epsilon: float, delta: float):
        """Return a predictor with ``predict(*args, set_mode=False)``.

        ``kind`` is ``"apply"`` for a direct application ``(f X)`` and
        ``"map"`` for a list-level site ``(map f X)``.
        """


@dataclass
class CalibrationSet:
    examples: list
    seed: int | None = None


class ConformalProgram:
    """A program calibrated against one calibration set.

    Ground-truth and standard traces of every program point are computed
    once; predictors are calibrated lazily and cached per (site, ε, δ).
    """

    def __init__(
        self,
        program: Program,
        oracles: Mapping[str, MLOracle],
        calibration: Sequence[Any] | CalibrationSet,
        conformalizers: Mapping[str, Conformalizer],
        sigma: Callable[[int], float] | None = None,
    ):
        if isinstance(calibration, CalibrationSet):
            calibration = calibration.examples
        self.program = program
        self.oracles = oracles
        self.conformalizers = conformalizers
        self.sigma = sigma
        self.Z = list(calibration)
        if not self.Z:
            raise CalibrationError("empty calibration set")
        self._gt: dict[int, list] = {}
        self._std: dict[int, list] = {}
        for z in self.Z:
            g: dict = {}
            s: dict = {}
            program.eval_ground_truth(z, oracles, trace=g)
            program.eval_standard(z, oracles, trace=s)
            for nid, v in g.items():
                self._gt.setdefault(nid, []).append(v)
            for nid, v in s.items():
                self._std.setdefault(nid, []).append(v)
        self._site_cache: dict = {}
        self._direct_cache: dict = {}
        self.warnings: list[str] = []

    # -- predictors -------------------------------------------------------

    def site_predictor(self, key: str, epsilon: float, delta: float):
        ck = (key, epsilon, delta)
        pred = self._site_cache.get(ck)
        if pred is None:
            node = self.program.site_nodes[key][0]
            if node.op == "map":
                comp, kind, arg_nodes = node.args[0].name, "map", [node.args[1]]
            else:
                comp, kind, arg_nodes = node.op, "apply", node.args
            conf = self.conformalizers.get(comp)
            if conf is None:
                raise CalibrationError(f"no conformalizer for component {comp!r}")
            args = list(zip(*[self._std[a.nid] for a in arg_nodes]))
            truths = self._gt[node.nid]
            pred = conf.calibrate(kind, args, truths, epsilon, delta)
            self._site_cache[ck] = pred
        return pred

    def direct_predictor(self, nid: int, epsilon: float, delta: float):
        ck = (nid, epsilon, delta)
        pred = self._direct_cache.get(ck)
        if pred is None:
            t = self.program.node(nid).type
            pred = calibrate_direct(t, self._gt[nid], self._std[nid], epsilon, delta, self.sigma)
            self._direct_cache[ck] = pred
        return pred

    # -- semantics --------------------------------------------------------

    def std_trace(self, x) -> dict:
        tr: dict = {}
        self.program.eval_standard(x, self.oracles, trace=tr)
        return tr

    def direct(self, x, epsilon: float, delta: float, std: Mapping | None = None):
        root = self.program.root
        if range_kind(root.type) is None:
            raise UnsupportedRangeError(f"direct semantics undefined for output type {root.type!r}")
        sv = std[root.nid] if std is not None else self.program.eval_standard(x, self.oracles)
        return self.direct_predictor(root.nid, epsilon, delta)(sv)

    def _sites_for(self, eps_of: Callable[[str], tuple[float, float]]) -> dict:
        return {key: self.site_predictor(key, *eps_of(key)) for key in self.program.site_keys}

    def compositional(self, x, epsilon: float, delta: float, set_mode: bool = False):
        """Compositional semantics with ε and δ split evenly over the ML sites."""
        k = max(1, self.program.n_ml_sites)
        sites = self._sites_for(lambda key: (epsilon / k, delta / k))
        v, _ = self.program.eval_abstract(x, sites, set_mode=set_mode)
        return v

    def compositional_budget(self, x, budget: EpsilonBudget, set_mode: bool = False):
        sites = self._sites_for(lambda key: (budget.eps(ml_site_id(key)), budget.dlt(ml_site_id(key))))
        v, _ = self.program.eval_abstract(x, sites, set_mode=set_mode)
        return v

    def full(self, x, budget: EpsilonBudget, std: Mapping | None = None):
        """Meet direct and compositional values at every direct site.

        Returns ``(value, empty_meet_node_ids)``. On an empty meet the direct
        value is kept and the node id is reported.
        """
        sites = self._sites_for(lambda key: (budget.eps(ml_site_id(key)), budget.dlt(ml_site_id(key))))
        direct = {}
        for nid in self.program.direct_sites:
            sid = direct_site_id(nid)
            e, d = budget.eps(sid), budget.dlt(sid)
            if e > 0 and d > 0:
                direct[nid] = self.direct_predictor(nid, e, d)
        if std is None:
            std = self.std_trace(x)
        return self.program.eval_abstract(x, sites, direct=direct, std_trace=std)


# ---------------------------------------------------------------------------
# Functional entry points


def direct_semantics(p: Program, x, Z, epsilon0: float, delta0: float, oracles, conformalizers=None):
    return ConformalProgram(p, oracles, Z, conformalizers or {}).direct(x, epsilon0, delta0)


def full_semantics(p: Program, x, Z, budget: EpsilonBudget, oracles, conformalizers):
    return ConformalProgram(p, oracles, Z, conformalizers).full(x, budget)
