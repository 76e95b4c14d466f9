"""Open-set evaluation: TP/FP/FN accounting, Q1, CR/IC, F ACC / C ACC, PR/AUC,
scenario construction and timing summaries."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import FOOLING, FOREIGN, InvalidInputError, LogitSet, safe_div

log = logging.getLogger(__name__)


@dataclass
class MetricCounts:
    """Every cell of the open-set count table.

    ``tp``/``fp``/``fn`` are per domestic class (index 0 is class 1).
    ``*_u`` count the foreign group, ``*_f`` the fooling group.
    """

    DEFAULT_EPSILON = 1e-4

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tp_u: int = 0
    fn_u: int = 0
    fp_u: int = 0
    tp_f: int = 0
    fn_f: int = 0
    epsilon_stab: float = DEFAULT_EPSILON

    @classmethod
    def zeros(cls, K: int, epsilon_stab: float = DEFAULT_EPSILON) -> "MetricCounts":
        z = lambda: np.zeros(K, dtype=np.int64)  # noqa: E731
        return cls(z(), z(), z(), epsilon_stab=epsilon_stab)

    @property
    def K(self) -> int:
        return len(self.tp)

    @classmethod
    def tally(cls, predictions, truth, K: int, epsilon_stab: float = DEFAULT_EPSILON) -> "MetricCounts":
        """Count table for aligned (truth, prediction) pairs.

        Predictions live in 0..K (0 = foreign); truth in -1..K.
        """
        pred = np.asarray(predictions, dtype=np.int64)
        truth = np.asarray(truth, dtype=np.int64)
        if pred.shape != truth.shape or pred.ndim != 1:
            raise InvalidInputError("predictions and truth must be aligned 1-D vectors")
        if np.any(pred < 0) or np.any(pred > K):
            raise InvalidInputError(f"prediction labels must lie in 0..{K}")
        if np.any(truth < FOOLING) or np.any(truth > K):
            raise InvalidInputError(f"truth labels must lie in -1..{K}")
        dom = truth >= 1
        p_dom = pred >= 1
        bins = lambda labels: np.bincount(labels - 1, minlength=K)[:K].astype(np.int64)  # noqa: E731

        hit = dom & (pred == truth)
        tp = bins(truth[hit])
        fn = bins(truth[dom & ~hit])
        # a domestic prediction is a false positive for every truth except its own class
        fp = bins(pred[p_dom & (pred != truth)])
        return cls(
            tp,
            fp,
            fn,
            tp_u=int(np.sum((truth == FOREIGN) & ~p_dom)),
            fn_u=int(np.sum((truth == FOREIGN) & p_dom)),
            fp_u=int(np.sum(dom & ~p_dom)),
            tp_f=int(np.sum((truth == FOOLING) & ~p_dom)),
            fn_f=int(np.sum((truth == FOOLING) & p_dom)),
            epsilon_stab=epsilon_stab,
        )

    def _add(self, truth: int, pred: int, sign: int) -> None:
        if truth >= 1:
            if pred == truth:
                self.tp[truth - 1] += sign
                return
            self.fn[truth - 1] += sign
            if pred >= 1:
                self.fp[pred - 1] += sign
            else:
                self.fp_u += sign
        elif truth == FOREIGN:
            if pred >= 1:
                self.fn_u += sign
                self.fp[pred - 1] += sign
            else:
                self.tp_u += sign
        else:
            if pred >= 1:
                self.fn_f += sign
                self.fp[pred - 1] += sign
            else:
                self.tp_f += sign

    def reassign(self, truth: int, old: int, new: int) -> None:
        """Move one sample's prediction from ``old`` to ``new`` in place."""
        self._add(truth, old, -1)
        self._add(truth, new, +1)

    def __add__(self, other: "MetricCounts") -> "MetricCounts":
        if other.K != self.K:
            raise InvalidInputError("cannot merge counts with different K")
        return MetricCounts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tp_u + other.tp_u,
            self.fn_u + other.fn_u,
            self.fp_u + other.fp_u,
            self.tp_f + other.tp_f,
            self.fn_f + other.fn_f,
            self.epsilon_stab,
        )

    @property
    def n_domestic(self) -> int:
        return int(np.sum(self.tp + self.fn))

    @property
    def n_foreign(self) -> int:
        return self.tp_u + self.fn_u

    @property
    def n_fooling(self) -> int:
        return self.tp_f + self.fn_f

    @property
    def total(self) -> int:
        return self.n_domestic + self.n_foreign + self.n_fooling

    @classmethod
    def from_confusion(
        cls,
        cr: int,
        ic: int,
        domestic_rejected: int,
        fooling_domestic: int,
        fooling_foreign: int,
        foreign_domestic: int,
        foreign_foreign: int,
        epsilon_stab: float = DEFAULT_EPSILON,
    ) -> "MetricCounts":
        """Single-row counts equivalent to a published domestic/fooling/foreign matrix.

        Per-class detail is lost; CR/IC/F ACC/C ACC are preserved exactly.
        """
        return cls(
            np.array([cr]),
            np.array([ic + fooling_domestic + foreign_domestic]),
            np.array([ic + domestic_rejected]),
            tp_u=foreign_foreign,
            fn_u=foreign_domestic,
            fp_u=domestic_rejected,
            tp_f=fooling_foreign,
            fn_f=fooling_domestic,
            epsilon_stab=epsilon_stab,
        )


tally = MetricCounts.tally


def q1_from_arrays(c: MetricCounts):
    """(Q1, F_d, F_o, per-class F, mask of classes present) with no logging."""
    eps = c.epsilon_stab
    tp = c.tp.astype(np.float64)
    present = (c.tp + c.fn) > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        p = tp / (tp + c.fp + eps)
        r = np.where(present, tp / np.where(present, tp + c.fn, 1), 0.0)
    f = 2 * p * r / (p + r + eps)
    f_d = float(f[present].mean()) if present.any() else 0.0
    tp_o = c.tp_u + c.tp_f
    p_o = safe_div(tp_o, tp_o + c.fp_u + eps)
    r_o = safe_div(tp_o, tp_o + c.fn_u + c.fn_f)
    f_o = 2 * p_o * r_o / (p_o + r_o + eps)
    if tp_o + c.fn_u + c.fn_f == 0 and c.fp_u == 0:
        # no foreign or fooling samples and nothing rejected: the foreign half is vacuously perfect
        f_o = 1.0
    return (f_d + f_o) / 2.0, f_d, f_o, f, present


@dataclass(frozen=True)
class Q1Result:
    q1: float
    f_d: float
    f_o: float
    per_class_f: dict[int, float]
    excluded_classes: tuple[int, ...] = ()


def q1(counts: MetricCounts) -> Q1Result:
    value, f_d, f_o, f, present = q1_from_arrays(counts)
    excluded = tuple(int(k) + 1 for k in np.flatnonzero(~present))
    if excluded:
        log.warning("classes absent from the test set, excluded from F_d: %s", list(excluded))
    if counts.n_foreign + counts.n_fooling == 0:
        log.warning("no foreign or fooling samples: F_o is 1 when nothing was rejected, else 0")
    per_class = {k + 1: float(f[k]) for k in np.flatnonzero(present)}
    return Q1Result(float(value), float(f_d), float(f_o), per_class, excluded)


@dataclass(frozen=True)
class CrIc:
    cr: int
    ic: int
    domestic_rejected: int
    fooling_domestic: int
    fooling_foreign: int
    foreign_domestic: int
    foreign_foreign: int

    def confusion_rows(self) -> list[list]:
        """Rows of the domestic/fooling/foreign x prediction table."""
        return [
            ["domestic", self.cr, self.ic, self.cr + self.ic, self.fooling_domestic, self.foreign_domestic],
            ["foreign", "", "", self.domestic_rejected, self.fooling_foreign, self.foreign_foreign],
        ]

    CONFUSION_HEADER = ("prediction", "domestic_cr", "domestic_ic", "domestic", "fooling", "foreign")


def cr_ic(c: MetricCounts) -> CrIc:
    cr = int(c.tp.sum())
    ic = int(c.fp.sum()) - c.fn_u - c.fn_f
    return CrIc(cr, ic, c.fp_u, c.fn_f, c.tp_f, c.fn_u, c.tp_u)


def facc_cacc(c: MetricCounts) -> tuple[float, float | None]:
    """Binary domestic-vs-foreign accuracy, and accuracy among domestic accepted as domestic."""
    t = cr_ic(c)
    accepted = t.cr + t.ic
    f_acc = safe_div(accepted + c.tp_u + c.tp_f, c.total)
    c_acc = t.cr / accepted if accepted else None
    return f_acc, c_acc


def pr_curve(scores, positives) -> list[tuple[float, float, float]]:
    """(threshold, recall, precision) at every distinct score, descending.

    A sample is called positive when its score is >= the threshold, so tied
    scores always cross together.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(positives, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise InvalidInputError("scores and positives must be aligned 1-D vectors")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise InvalidInputError("no positives: recall is undefined")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    k = np.arange(1, s.size + 1)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    return [(float(s[i]), float(tp[i] / n_pos), float(tp[i] / k[i])) for i in ends]


def auc_pr(points) -> float:
    """Trapezoidal area under (recall, precision), anchored at recall 0."""
    pts = [(float(p[-2]), float(p[-1])) for p in points]
    if not pts:
        raise InvalidInputError("need at least one PR point")
    pts.sort(key=lambda rp: rp[0])
    r = np.array([0.0] + [p[0] for p in pts])
    p = np.array([pts[0][1]] + [p[1] for p in pts])
    return float(np.sum((r[1:] - r[:-1]) * (p[1:] + p[:-1]) / 2.0))


@dataclass(frozen=True)
class ScenarioSpec:
    n_domestic: int
    n_fooling: int
    images_per_foreign_class: int
    n_foreign_classes: int

    def __post_init__(self):
        if min(self.n_domestic, self.n_fooling, self.images_per_foreign_class, self.n_foreign_classes) < 0:
            raise InvalidInputError("scenario counts must be non-negative")
        if self.n_domestic == 0:
            raise InvalidInputError("a scenario needs domestic samples")

    @property
    def n_foreign(self) -> int:
        return self.images_per_foreign_class * self.n_foreign_classes

    @property
    def comfort_ratio(self) -> float:
        return self.n_domestic / (self.n_domestic + self.n_fooling + self.n_foreign)


# published test cases: images drawn per foreign class
TABLE_CASES = {"I": 42, "II": 97, "III": 236, "IV": 300}


def published_scenario(case: str) -> ScenarioSpec:
    return ScenarioSpec(50000, 15000, TABLE_CASES[case], 360)


@dataclass
class Scenario:
    data: LogitSet
    spec: ScenarioSpec

    @property
    def comfort_ratio(self) -> float:
        return self.spec.comfort_ratio


def _draw(pool: LogitSet, n: int, rng: np.random.Generator, name: str) -> LogitSet | None:
    if len(pool) < n:
        raise InvalidInputError(f"insufficient pool for {name}: need {n}, have {len(pool)}")
    if n == 0:
        return None
    if n == len(pool):
        return pool
    idx = np.sort(rng.choice(len(pool), size=n, replace=False))
    return pool.subset(idx)


def build_scenario(
    spec: ScenarioSpec,
    domestic: LogitSet,
    foreign: dict[str, LogitSet],
    fooling: LogitSet | None,
    seed: int,
) -> Scenario:
    """Assemble a test set with a prescribed comfort ratio.

    ``foreign`` maps foreign-class keys to their pools; the first
    ``n_foreign_classes`` keys in sorted order are used.
    """
    rng = np.random.default_rng(seed)
    parts = [_draw(domestic, spec.n_domestic, rng, "domestic")]
    if spec.n_fooling:
        if fooling is None:
            raise InvalidInputError(f"insufficient pool for fooling: need {spec.n_fooling}, have 0")
        parts.append(_draw(fooling, spec.n_fooling, rng, "fooling"))
    keys = sorted(foreign)
    if len(keys) < spec.n_foreign_classes:
        raise InvalidInputError(
            f"insufficient pool for foreign classes: need {spec.n_foreign_classes}, have {len(keys)}"
        )
    for key in keys[: spec.n_foreign_classes]:
        parts.append(_draw(foreign[key], spec.images_per_foreign_class, rng, f"foreign class {key!r}"))
    return Scenario(LogitSet.concat([p for p in parts if p is not None]), spec)


def group_foreign(data: LogitSet) -> dict[str, LogitSet]:
    """Split foreign records by the part of ``sample_id`` before the first '/'."""
    keys = [sid.split("/", 1)[0] if "/" in sid else "foreign" for sid in data.ids]
    out = {}
    for key in sorted(set(keys)):
        out[key] = data.subset(np.array([k == key for k in keys]))
    return out


@dataclass
class RunTiming:
    """Wall-clock measurements of one method run."""

    method: str
    domestic_learning_s: float = 0.0
    identification_total_s: float = 0.0
    n_identified: int = 0
    base_per_image_s: float | None = None
    extra: dict = field(default_factory=dict)


def timing_report(run: RunTiming) -> dict:
    """Learning total, per-image identification time, and both normalised by base-classifier time."""
    learning = float(run.domestic_learning_s)
    per_image = safe_div(run.identification_total_s, run.n_identified)
    out = {
        "domestic_learning_total_s": learning,
        "per_image_identification_avg_s": per_image,
        "base_per_image_s": run.base_per_image_s,
        "domestic_learning_normalized": None,
        "per_image_identification_normalized": None,
    }
    if run.base_per_image_s:
        out["domestic_learning_normalized"] = learning / run.base_per_image_s
        out["per_image_identification_normalized"] = per_image / run.base_per_image_s
    return out
