"""OpenMax: per-class meta-recognition calibration and K+1 recalibrated scoring."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import InvalidInputError, LogitSet, n_workers, rank_descending, softmax
from .weibull import WeibullParams, fit_weibull_tail, weibull_cdf

DISTANCES = ("eucos", "euclidean", "cosine")
ALPHA_RULES = ("paper", "reference")
DEFAULT_ETA = 20
DEFAULT_M = 10
EUCOS_SCALE = 200.0


class CalibrationError(ValueError):
    pass


def _cosine_term(a: np.ndarray, mu: np.ndarray) -> float:
    na, nm = np.linalg.norm(a), np.linalg.norm(mu)
    if na == 0 or nm == 0:
        raise InvalidInputError("cosine distance is undefined for a zero-norm vector")
    return 1.0 - float(np.dot(a, mu)) / (na * nm)


def distance(a, mu, kind: str = "eucos", scale: float = EUCOS_SCALE) -> float:
    """Distance of a logit vector to a class centroid.

    ``eucos`` is ``||a - mu|| / scale + (1 - cos(a, mu))``.
    """
    a = np.asarray(a, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if a.shape != mu.shape or a.ndim != 1:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {mu.shape}")
    if kind == "euclidean":
        return float(np.linalg.norm(a - mu))
    if kind == "cosine":
        return _cosine_term(a, mu)
    if kind == "eucos":
        return float(np.linalg.norm(a - mu)) / scale + _cosine_term(a, mu)
    raise InvalidInputError(f"unknown distance kind {kind!r}; expected one of {DISTANCES}")


def eucos_distance(a, mu, scale: float = EUCOS_SCALE) -> float:
    return distance(a, mu, "eucos", scale)


def distances_to(logits: np.ndarray, mu: np.ndarray, kind: str, scale: float = EUCOS_SCALE) -> np.ndarray:
    """Vectorised :func:`distance` from each row of ``logits`` to one centroid."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    eu = np.linalg.norm(logits - mu, axis=1)
    if kind == "euclidean":
        return eu
    na = np.linalg.norm(logits, axis=1)
    nm = np.linalg.norm(mu)
    if nm == 0 or np.any(na == 0):
        raise InvalidInputError("cosine distance is undefined for a zero-norm vector")
    cos = 1.0 - logits @ mu / (na * nm)
    if kind == "cosine":
        return cos
    if kind == "eucos":
        return eu / scale + cos
    raise InvalidInputError(f"unknown distance kind {kind!r}; expected one of {DISTANCES}")


def alpha_weights(ranks: np.ndarray, M: int, rule: str = "paper") -> np.ndarray:
    """Rank weights; zero outside the top ``M``.

    ``paper``: (M - r) / M, so rank M already gets weight 0.
    ``reference``: (M + 1 - r) / M.
    """
    ranks = np.asarray(ranks)
    if rule == "paper":
        w = (M - ranks) / M
    elif rule == "reference":
        w = (M + 1 - ranks) / M
    else:
        raise InvalidInputError(f"unknown alpha rule {rule!r}")
    return np.where(ranks <= M, w, 0.0)


@dataclass(frozen=True)
class ClassModel:
    centroid: np.ndarray
    weibull: WeibullParams


@dataclass(frozen=True)
class OpenMaxModel:
    classes: tuple[ClassModel, ...]
    eta: int = DEFAULT_ETA
    distance_kind: str = "eucos"
    alpha_rule: str = "paper"
    eucos_scale: float = EUCOS_SCALE
    calibration_seconds: float | None = None

    @property
    def K(self) -> int:
        return len(self.classes)

    @property
    def centroids(self) -> np.ndarray:
        return np.stack([c.centroid for c in self.classes])

    def to_json(self) -> str:
        doc = {
            "K": self.K,
            "eta": self.eta,
            "distance": self.distance_kind,
            "alpha_rule": self.alpha_rule,
            "eucos_scale": _num(self.eucos_scale),
            "classes": [
                {
                    "id": k + 1,
                    "centroid": [_num(v) for v in c.centroid],
                    "tau": _num(c.weibull.tau),
                    "beta": _num(c.weibull.beta),
                    "lambda": _num(c.weibull.lam),
                }
                for k, c in enumerate(self.classes)
            ],
        }
        if self.calibration_seconds is not None:
            doc["calibration_seconds"] = self.calibration_seconds
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "OpenMaxModel":
        doc = json.loads(text)
        try:
            entries = sorted(doc["classes"], key=lambda c: c["id"])
            if [c["id"] for c in entries] != list(range(1, doc["K"] + 1)):
                raise InvalidInputError("class ids must be exactly 1..K")
            classes = tuple(
                ClassModel(
                    np.array(c["centroid"], dtype=np.float64),
                    WeibullParams(float(c["tau"]), float(c["beta"]), float(c["lambda"])),
                )
                for c in entries
            )
            model = cls(
                classes,
                eta=int(doc["eta"]),
                distance_kind=doc["distance"],
                alpha_rule=doc.get("alpha_rule", "paper"),
                eucos_scale=float(doc.get("eucos_scale", EUCOS_SCALE)),
                calibration_seconds=doc.get("calibration_seconds"),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed OpenMax model document: {exc}") from None
        if any(c.centroid.shape != (model.K,) for c in classes):
            raise InvalidInputError("every centroid must have length K")
        if model.distance_kind not in DISTANCES or model.alpha_rule not in ALPHA_RULES:
            raise InvalidInputError("unknown distance kind or alpha rule in model document")
        return model

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8", newline="")

    @classmethod
    def load(cls, path) -> "OpenMaxModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _num(x) -> float:
    # json writes floats with repr(), the shortest string that round-trips exactly
    return float(x)


def calibrate(
    records: LogitSet,
    eta: int = DEFAULT_ETA,
    distance_kind: str = "eucos",
    alpha_rule: str = "paper",
    eucos_scale: float = EUCOS_SCALE,
) -> OpenMaxModel:
    """Fit one centroid and one Weibull tail per domestic class.

    Only training samples whose logit argmax equals their true class are used.
    """
    if distance_kind not in DISTANCES:
        raise InvalidInputError(f"unknown distance kind {distance_kind!r}")
    if alpha_rule not in ALPHA_RULES:
        raise InvalidInputError(f"unknown alpha rule {alpha_rule!r}")
    if np.any(records.truth < 1):
        raise InvalidInputError("calibration records must all be domestic")
    K = records.K
    correct = records.argmax_labels() == records.truth

    def fit_class(k: int) -> ClassModel:
        members = records.logits[correct & (records.truth == k)]
        if len(members) < eta:
            raise CalibrationError(
                f"class {k} has {len(members)} correctly-classified samples, fewer than eta={eta}"
            )
        mu = members.mean(axis=0)
        d = distances_to(members, mu, distance_kind, eucos_scale)
        try:
            params = fit_weibull_tail(d, eta)
        except (ValueError, RuntimeError) as exc:
            raise CalibrationError(f"class {k}: {exc}") from exc
        return ClassModel(mu, params)

    with ThreadPoolExecutor(max_workers=min(n_workers(), K)) as pool:
        classes = tuple(pool.map(fit_class, range(1, K + 1)))
    return OpenMaxModel(classes, eta, distance_kind, alpha_rule, eucos_scale)


@dataclass(frozen=True)
class OpenMaxScore:
    probs: np.ndarray  # index 0 is foreign
    a_new: np.ndarray
    a0: float
    omega: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)


def score_openmax(a, model: OpenMaxModel, M: int = DEFAULT_M) -> OpenMaxScore:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1 or a.size != model.K:
        raise InvalidInputError(f"expected a logit vector of length {model.K}, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("logits contain non-finite entries")
    if not 1 <= M <= model.K:
        raise InvalidInputError(f"M must lie in 1..{model.K}, got {M}")
    ranks = rank_descending(a)
    alpha = alpha_weights(ranks, M, model.alpha_rule)
    omega = np.zeros(model.K)
    for j in np.flatnonzero(ranks <= M):
        c = model.classes[j]
        d = distance(a, c.centroid, model.distance_kind, model.eucos_scale)
        omega[j] = weibull_cdf(d, c.weibull)
    return recalibrate(a, alpha, omega)


def recalibrate(a: np.ndarray, alpha: np.ndarray, omega: np.ndarray) -> OpenMaxScore:
    """Apply the weight/omega adjustment and build the K+1 softmax."""
    a_new = a * (1.0 - alpha * omega)
    a0 = float(np.sum(a - a_new))
    probs = softmax(np.concatenate(([a0], a_new)))
    return OpenMaxScore(probs, a_new, a0, omega, alpha)


def decide(probs: np.ndarray, epsilon_pred: float) -> int:
    """Foreign when index 0 wins or the winning domestic probability is below threshold."""
    k = int(np.argmax(probs))
    if k >= 1 and probs[k] >= epsilon_pred:
        return k
    return 0


def predict_openmax(a, model: OpenMaxModel, M: int = DEFAULT_M, epsilon_pred: float = 0.0) -> int:
    if not 0.0 <= epsilon_pred <= 1.0:
        raise InvalidInputError("epsilon_pred must lie in [0, 1]")
    return decide(score_openmax(a, model, M).probs, epsilon_pred)


def score_batch(logits: np.ndarray, model: OpenMaxModel, M: int = DEFAULT_M) -> np.ndarray:
    """(N, K+1) OpenMax probabilities for a batch; same arithmetic as :func:`score_openmax`."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if logits.shape[1] != model.K:
        raise InvalidInputError(f"expected {model.K} logits per row, got {logits.shape[1]}")
    return np.stack([score_openmax(row, model, M).probs for row in logits])


def decision_scores(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row (winning probability, winning label) for threshold sweeps.

    Predicting 0 whenever the score falls below ``epsilon_pred`` and the
    winning label otherwise reproduces :func:`decide` row by row.
    """
    probs = np.atleast_2d(probs)
    labels = np.argmax(probs, axis=1)
    return probs[np.arange(len(probs)), labels], labels
