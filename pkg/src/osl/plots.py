"""Boxplot summaries and PR curves from score dumps; CSV first, SVG second."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .core import FOOLING, FOREIGN, InvalidInputError
from .metrics import pr_curve

log = logging.getLogger(__name__)

BOX_HEADER = ("group", "n", "min", "q1", "median", "q3", "max", "whisker_low", "whisker_high", "n_outliers")
GROUP_ORDER = ("Domestic", "Foreign", "Fooling", "Correct", "Incorrect", "Adversarial")


@dataclass
class ScoreDump:
    ids: list[str]
    truth: np.ndarray
    score: np.ndarray
    predicted: np.ndarray

    def subset(self, mask) -> "ScoreDump":
        idx = np.flatnonzero(mask)
        return ScoreDump([self.ids[i] for i in idx], self.truth[idx], self.score[idx], self.predicted[idx])

    def __len__(self) -> int:
        return len(self.ids)


def read_score_dump(path) -> ScoreDump:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_id", "truth", "cognizance", "predicted_label"]:
            raise InvalidInputError(f"{path}: expected header sample_id,truth,cognizance,predicted_label")
        rows = list(reader)
    return ScoreDump(
        [r[0] for r in rows],
        np.array([int(r[1]) for r in rows], dtype=np.int64),
        np.array([float(r[2]) for r in rows], dtype=np.float64),
        np.array([int(r[3]) for r in rows], dtype=np.int64),
    )


def score_groups(dump: ScoreDump, adversarial: ScoreDump | None = None) -> dict[str, np.ndarray]:
    """Scores per plotting group.

    Correct/Incorrect split the domestic samples that were predicted as some
    domestic class by whether that class is the true one. Use an unthresholded
    dump (theta = -inf) to split by the classifier's own label.
    """
    dom = dump.truth >= 1
    groups = {
        "Domestic": dump.score[dom],
        "Foreign": dump.score[dump.truth == FOREIGN],
        "Fooling": dump.score[dump.truth == FOOLING],
        "Correct": dump.score[dom & (dump.predicted == dump.truth)],
        "Incorrect": dump.score[dom & (dump.predicted >= 1) & (dump.predicted != dump.truth)],
    }
    if adversarial is not None:
        groups["Adversarial"] = adversarial.score
    out = {}
    for name in GROUP_ORDER:
        if name not in groups:
            continue
        if groups[name].size == 0:
            log.warning("group %s is empty; omitted", name)
            continue
        out[name] = groups[name]
    return out


def box_stats(values) -> dict:
    """Five-number summary with 1.5 IQR whiskers."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return {
        "n": int(v.size),
        "min": float(v[0]),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "max": float(v[-1]),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "n_outliers": int(v.size - inside.size),
    }


def boxplot_table(groups: dict[str, np.ndarray]) -> list[list]:
    rows = []
    for name, values in groups.items():
        s = box_stats(values)
        rows.append([name] + [s[k] for k in BOX_HEADER[1:]])
    return rows


def adversarial_pr(dump: ScoreDump, adversarial: ScoreDump) -> dict[str, list]:
    """PR curves for adversarial-vs-domestic and adversarial-vs-correct.

    Low cognizance means foreign, so the detector score is the negated dump score.
    """
    dom = dump.truth >= 1
    negatives = {
        "domestic": dump.score[dom],
        "correct": dump.score[dom & (dump.predicted == dump.truth)],
    }
    out = {}
    for name, neg in negatives.items():
        scores = -np.concatenate([adversarial.score, neg])
        positives = np.concatenate([np.ones(len(adversarial), bool), np.zeros(len(neg), bool)])
        out[name] = pr_curve(scores, positives)
    return out


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed ids and no timestamp keep the SVG byte-stable across runs
    plt.rcParams["svg.hashsalt"] = "osl"
    return plt


def render_boxplot(groups: dict[str, np.ndarray], path, log_scale: bool = False) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    if groups:
        ax.boxplot(list(groups.values()), whis=1.5)
        ax.set_xticks(range(1, len(groups) + 1), list(groups.keys()))
    if log_scale and groups and all(np.all(v > 0) for v in groups.values()):
        ax.set_yscale("log")
    ax.set_ylabel("score")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_pr(curves: dict[str, list], path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, pts in curves.items():
        ax.plot([p[1] for p in pts], [p[2] for p in pts], label=name)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
