"""Method scoring and evaluation shared by the CLI, scripts and acceptance runs."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import lc, openmax, synth
from .core import InvalidInputError, LogitSet
from .metrics import MetricCounts, Q1Result, RunTiming, cr_ic, facc_cacc, q1, tally, timing_report

METHODS = ("lc-exp", "lc-cubic", "openmax", "argmax-baseline")


@dataclass
class MethodScores:
    """Per-sample decision scores plus the label used when a sample is kept."""

    scores: np.ndarray
    base_labels: np.ndarray
    identification_s: float


def method_scores(method: str, data: LogitSet, model: openmax.OpenMaxModel | None = None,
                  M: int = openmax.DEFAULT_M) -> MethodScores:
    """Scores where ``score < theta`` means foreign.

    LC: marginalized cognizance, kept label = logit argmax.
    OpenMax: winning K+1 probability, kept label = winning index (0 stays 0).
    Baseline: constant score, kept label = logit argmax.
    """
    start = time.perf_counter()
    if method in ("lc-exp", "lc-cubic"):
        kind = lc.CognizanceKind.EXPONENTIAL if method == "lc-exp" else lc.CognizanceKind.CUBIC
        scores, _ = lc.cognizance_batch(data.logits, kind)
        labels = data.argmax_labels()
    elif method == "openmax":
        if model is None:
            raise InvalidInputError("openmax scoring needs a calibrated model")
        scores, labels = openmax.decision_scores(openmax.score_batch(data.logits, model, M))
    elif method == "argmax-baseline":
        scores, labels = np.zeros(len(data)), data.argmax_labels()
    else:
        raise InvalidInputError(f"unknown method {method!r}; expected one of {METHODS}")
    return MethodScores(np.asarray(scores, dtype=np.float64), np.asarray(labels, dtype=np.int64),
                        time.perf_counter() - start)


@dataclass
class Evaluation:
    method: str
    theta: float
    counts: MetricCounts
    q1: Q1Result
    predictions: np.ndarray
    scores: np.ndarray
    curve: tuple[np.ndarray, np.ndarray] | None = None
    timing: RunTiming | None = field(default=None, repr=False)

    def report(self, comfort_ratio: float | None = None, with_timing: bool = False) -> dict:
        t = cr_ic(self.counts)
        f_acc, c_acc = facc_cacc(self.counts)
        doc = {
            "method": self.method,
            "theta": _json_float(self.theta),
            "q1": self.q1.q1,
            "f_d": self.q1.f_d,
            "f_o": self.q1.f_o,
            "f_acc": f_acc,
            "c_acc": c_acc,
            "cr": t.cr,
            "ic": t.ic,
            "domestic_rejected": t.domestic_rejected,
            "comfort_ratio": comfort_ratio,
            "per_class_f": {str(k): v for k, v in self.q1.per_class_f.items()},
            "excluded_classes": list(self.q1.excluded_classes),
        }
        if with_timing and self.timing is not None:
            doc["timing"] = timing_report(self.timing)
        return doc


def _json_float(x: float):
    if np.isposinf(x):
        return "inf"
    if np.isneginf(x):
        return "-inf"
    return float(x)


def evaluate_method(method: str, data: LogitSet, model: openmax.OpenMaxModel | None = None,
                    M: int = openmax.DEFAULT_M, theta: float | None = None, sweep: bool = True,
                    epsilon_stab: float = MetricCounts.DEFAULT_EPSILON) -> Evaluation:
    """Score, pick or apply a threshold, tally and compute Q1.

    With ``sweep`` the threshold maximising Q1 is chosen; otherwise ``theta``
    is used as given (``-inf`` when None). The baseline never rejects.
    """
    ms = method_scores(method, data, model, M)
    curve = None
    if method == "argmax-baseline":
        theta = -np.inf
    elif sweep:
        res = lc.sweep_threshold(ms.scores, ms.base_labels, data.truth, data.K, epsilon_stab)
        theta, curve = res.best_theta, (res.thetas, res.q1s)
    elif theta is None:
        theta = -np.inf
    preds = lc.apply_threshold(ms.scores, ms.base_labels, theta)
    counts = tally(preds, data.truth, data.K, epsilon_stab)
    timing = RunTiming(method, 0.0, ms.identification_s, len(data))
    return Evaluation(method, float(theta), counts, q1(counts), preds, ms.scores, curve, timing)


def drop_misclassified(data: LogitSet) -> LogitSet:
    """Remove domestic samples the base classifier gets wrong."""
    dom = data.truth >= 1
    keep = ~dom | (data.argmax_labels() == data.truth)
    return data.subset(keep)


# ---------------------------------------------------------------- desk-scale end-to-end run


@dataclass(frozen=True)
class DeskConfig:
    dataset: synth.SyntheticDatasetSpec = synth.SyntheticDatasetSpec()
    train: synth.TrainConfig = synth.TrainConfig()
    n_fooling: int = 1000
    alpha: float = 0.9
    max_iters: int = 500
    eta: int = openmax.DEFAULT_ETA
    M: int = openmax.DEFAULT_M
    distance: str = "eucos"
    alpha_rule: str = "paper"
    craft_seed: int = 1


@dataclass
class DeskResult:
    classifier: synth.ToyClassifier
    test: LogitSet
    openmax_model: openmax.OpenMaxModel
    fooling_success_rate: float
    full: dict[str, Evaluation]
    correct_only: dict[str, Evaluation]
    base_per_image_s: float

    def summary(self) -> dict:
        out = {
            "val_accuracy": self.classifier.val_accuracy,
            "fooling_success_rate": self.fooling_success_rate,
            "n_test": len(self.test),
            "methods": {},
        }
        for m in METHODS:
            out["methods"][m] = {
                "q1": self.full[m].q1.q1,
                "q1_correct_only": self.correct_only[m].q1.q1,
                "theta": _json_float(self.full[m].theta),
                "timing": timing_report(self.full[m].timing),
            }
        return out


def run_desk_experiment(cfg: DeskConfig = DeskConfig()) -> DeskResult:
    data = synth.gen_dataset(cfg.dataset)
    K = cfg.dataset.n_domestic_classes
    clf = synth.train_classifier(data.train, K, cfg.train)

    crafts = synth.craft_many_fooling(clf, cfg.n_fooling, cfg.craft_seed, cfg.alpha, cfg.max_iters)
    fooling = synth.crafted_inputs(crafts, "fooling")

    start = time.perf_counter()
    domestic = synth.extract_logits(clf, data.test_domestic)
    base_per_image = (time.perf_counter() - start) / max(len(domestic), 1)
    test = LogitSet.concat([domestic, synth.extract_logits(clf, data.test_foreign),
                            synth.extract_logits(clf, fooling)])

    start = time.perf_counter()
    om = openmax.calibrate(synth.extract_logits(clf, data.train), cfg.eta, cfg.distance, cfg.alpha_rule)
    calibration_s = time.perf_counter() - start

    def run_all(ds: LogitSet) -> dict[str, Evaluation]:
        out = {}
        for m in METHODS:
            ev = evaluate_method(m, ds, om if m == "openmax" else None, min(cfg.M, K))
            ev.timing.base_per_image_s = base_per_image
            if m == "openmax":
                ev.timing.domestic_learning_s = calibration_s
            out[m] = ev
        return out

    return DeskResult(
        clf, test, om,
        float(np.mean([r.success for r in crafts])) if crafts else 0.0,
        run_all(test),
        run_all(drop_misclassified(test)),
        base_per_image,
    )
