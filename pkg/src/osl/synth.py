"""Synthetic class clusters, a one-hidden-layer classifier with hand-derived
gradients, and fooling/adversarial input crafting by projected gradient ascent."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import FOOLING, FOREIGN, InvalidInputError, LogitSet, fmt_float, n_workers, softmax_rows, write_table


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------- data


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    dim: int = 16
    n_domestic_classes: int = 10
    n_foreign_classes: int = 5
    samples_per_class: int = 500
    cluster_separation: float = 6.0
    seed: int = 0

    def __post_init__(self):
        if self.dim < 2 or self.n_domestic_classes < 2:
            raise InvalidInputError("need dim >= 2 and at least 2 domestic classes")
        if self.cluster_separation < 0 or self.samples_per_class < 1 or self.n_foreign_classes < 0:
            raise InvalidInputError("invalid dataset spec")


@dataclass
class LabeledInputs:
    """Feature rows with open-set truth labels (1..K, 0 foreign, -1 fooling)."""

    ids: list[str]
    x: np.ndarray
    truth: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, idx) -> "LabeledInputs":
        idx = np.arange(len(self))[idx]
        return LabeledInputs([self.ids[i] for i in idx], self.x[idx], self.truth[idx])


@dataclass
class SyntheticData:
    train: LabeledInputs
    test_domestic: LabeledInputs
    test_foreign: LabeledInputs
    centroids: np.ndarray = field(repr=False)
    cluster_std: float = 0.0


def gen_dataset(spec: SyntheticDatasetSpec) -> SyntheticData:
    """Gaussian clusters inside [0, 1]^D.

    Raw centroid offsets are rescaled so the closest pair of clusters (domestic
    and foreign together) sits ``cluster_separation`` standard deviations
    apart; the whole layout is then shrunk to fit in [0.15, 0.85]^D. Samples
    are clipped to the unit box. Domestic clusters come first; foreign ones
    never appear in the training split.
    """
    rng = np.random.default_rng(spec.seed)
    K, F, D, n = spec.n_domestic_classes, spec.n_foreign_classes, spec.dim, spec.samples_per_class
    u = rng.standard_normal((K + F, D))
    u -= u.mean(axis=0)
    gaps = np.linalg.norm(u[:, None, :] - u[None, :, :], axis=-1)
    u /= gaps[np.triu_indices(K + F, 1)].min()
    reach = np.abs(u).max()
    std = 0.35 / (max(spec.cluster_separation, 1.0) * reach)
    centroids = 0.5 + spec.cluster_separation * std * u

    def draw(c: int, count: int) -> np.ndarray:
        return np.clip(centroids[c] + std * rng.standard_normal((count, D)), 0.0, 1.0)

    train_x = np.concatenate([draw(c, n) for c in range(K)])
    test_x = np.concatenate([draw(c, n) for c in range(K)])
    foreign_x = np.concatenate([draw(K + f, n) for f in range(F)]) if F else np.zeros((0, D))
    labels = np.repeat(np.arange(1, K + 1), n)
    return SyntheticData(
        LabeledInputs([f"train/{i:06d}" for i in range(len(train_x))], train_x, labels.copy()),
        LabeledInputs([f"domestic/{i:06d}" for i in range(len(test_x))], test_x, labels.copy()),
        LabeledInputs(
            [f"foreign{f + 1}/{i:06d}" for f in range(F) for i in range(n)],
            foreign_x,
            np.full(len(foreign_x), FOREIGN),
        ),
        centroids,
        std,
    )


def write_inputs(path, data: LabeledInputs) -> None:
    header = ["sample_id", "truth"] + [f"feature_{j}" for j in range(data.x.shape[1])]
    write_table(path, header, ([sid, int(t)] + [fmt_float(v) for v in row] for sid, t, row in zip(data.ids, data.truth, data.x)))


def read_inputs(path) -> LabeledInputs:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["sample_id", "truth"] or len(header) < 3:
            raise InvalidInputError(f"{path}: expected header sample_id,truth,feature_0,...")
        ids, truth, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise InvalidInputError(f"{path}:{lineno}: expected {len(header)} fields")
            ids.append(row[0])
            truth.append(int(row[1]))
            rows.append([float(v) for v in row[2:]])
    return LabeledInputs(ids, np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 2), np.array(truth, dtype=np.int64))


# ---------------------------------------------------------------- model


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 64
    val_fraction: float = 0.1
    seed: int = 0


@dataclass
class ToyClassifier:
    """standardize -> affine -> ReLU -> affine, producing K logits."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    w1: np.ndarray  # (D, H)
    b1: np.ndarray
    w2: np.ndarray  # (H, K)
    b2: np.ndarray
    config: TrainConfig = field(default_factory=TrainConfig)
    train_accuracy: float | None = None
    val_accuracy: float | None = None

    @property
    def K(self) -> int:
        return self.w2.shape[1]

    @property
    def D(self) -> int:
        return self.w1.shape[0]

    @classmethod
    def init(cls, D: int, K: int, config: TrainConfig, x_mean=None, x_scale=None) -> "ToyClassifier":
        rng = np.random.default_rng(config.seed)
        H = config.hidden
        return cls(
            np.zeros(D) if x_mean is None else x_mean,
            np.ones(D) if x_scale is None else x_scale,
            rng.standard_normal((D, H)) * math.sqrt(2.0 / D),
            np.zeros(H),
            rng.standard_normal((H, K)) * math.sqrt(1.0 / H),
            np.zeros(K),
            config,
        )

    def _forward(self, x):
        z = (np.atleast_2d(x) - self.x_mean) / self.x_scale
        h_pre = z @ self.w1 + self.b1
        h = np.maximum(h_pre, 0.0)
        return z, h_pre, h, h @ self.w2 + self.b2

    def logits(self, x) -> np.ndarray:
        """Penultimate (pre-softmax) vectors, one row per input."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.D:
            raise InvalidInputError(f"expected {self.D} features, got {x.shape[1]}")
        return self._forward(x)[3]

    def predict_proba(self, x) -> np.ndarray:
        return softmax_rows(self.logits(x))

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1) + 1

    def loss_and_grads(self, x, labels) -> tuple[float, dict[str, np.ndarray]]:
        """Mean cross-entropy and its gradient w.r.t. every parameter array."""
        z, h_pre, h, a = self._forward(x)
        n = len(z)
        p = softmax_rows(a)
        idx = np.asarray(labels) - 1
        logp = a - a.max(axis=1, keepdims=True)
        logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
        loss = -float(logp[np.arange(n), idx].mean())
        da = p.copy()
        da[np.arange(n), idx] -= 1.0
        da /= n
        dh = (da @ self.w2.T) * (h_pre > 0)
        return loss, {"w1": z.T @ dh, "b1": dh.sum(axis=0), "w2": h.T @ da, "b2": da.sum(axis=0)}

    def input_grad_log_prob(self, x, k: int) -> tuple[float, np.ndarray]:
        """(f_k(x), d log f_k / dx) for a single input and target class k in 1..K."""
        z, h_pre, h, a = self._forward(x)
        p = softmax_rows(a)[0]
        da = -p
        da[k - 1] += 1.0
        dz = ((da @ self.w2.T) * (h_pre[0] > 0)) @ self.w1.T
        return float(p[k - 1]), dz / self.x_scale

    # persistence: row-major weight arrays with explicit shapes

    def to_json(self) -> str:
        arr = lambda m: {"shape": list(m.shape), "data": [float(v) for v in m.ravel()]}  # noqa: E731
        doc = {
            "architecture": "standardize-affine-relu-affine",
            "layers": {
                "x_mean": arr(self.x_mean),
                "x_scale": arr(self.x_scale),
                "w1": arr(self.w1),
                "b1": arr(self.b1),
                "w2": arr(self.w2),
                "b2": arr(self.b2),
            },
            "config": asdict(self.config),
            "train_accuracy": self.train_accuracy,
            "val_accuracy": self.val_accuracy,
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ToyClassifier":
        doc = json.loads(text)
        try:
            L = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["layers"].items()}
            return cls(
                L["x_mean"], L["x_scale"], L["w1"], L["b1"], L["w2"], L["b2"],
                TrainConfig(**doc.get("config", {})),
                doc.get("train_accuracy"),
                doc.get("val_accuracy"),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise InvalidInputError(f"malformed classifier document: {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8", newline="")

    @classmethod
    def load(cls, path) -> "ToyClassifier":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


PARAM_NAMES = ("w1", "b1", "w2", "b2")


def train_classifier(data: LabeledInputs, K: int, config: TrainConfig = TrainConfig()) -> ToyClassifier:
    """Mini-batch SGD with momentum on mean cross-entropy."""
    if np.any(data.truth < 1) or np.any(data.truth > K):
        raise InvalidInputError("training labels must be domestic classes 1..K")
    rng = np.random.default_rng(config.seed)
    n = len(data)
    perm = rng.permutation(n)
    n_val = int(round(config.val_fraction * n))
    val_idx, tr_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    x_tr, y_tr = data.x[tr_idx], data.truth[tr_idx]
    scale = x_tr.std(axis=0)
    scale[scale == 0] = 1.0
    model = ToyClassifier.init(data.x.shape[1], K, config, x_tr.mean(axis=0), scale)
    velocity = {name: np.zeros_like(getattr(model, name)) for name in PARAM_NAMES}

    for epoch in range(config.epochs):
        order = rng.permutation(len(x_tr))
        for start in range(0, len(order), config.batch_size):
            b = order[start : start + config.batch_size]
            loss, grads = model.loss_and_grads(x_tr[b], y_tr[b])
            if not math.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}; hyperparameters: {asdict(config)}")
            for name in PARAM_NAMES:
                velocity[name] = config.momentum * velocity[name] - config.learning_rate * grads[name]
                setattr(model, name, getattr(model, name) + velocity[name])
        if not all(np.all(np.isfinite(getattr(model, name))) for name in PARAM_NAMES):
            raise TrainingError(f"weights diverged at epoch {epoch}; hyperparameters: {asdict(config)}")

    model.train_accuracy = float(np.mean(model.predict(x_tr) == y_tr)) if len(x_tr) else None
    if n_val:
        model.val_accuracy = float(np.mean(model.predict(data.x[val_idx]) == data.truth[val_idx]))
    return model


def extract_logits(model: ToyClassifier, inputs: LabeledInputs) -> LogitSet:
    return LogitSet(list(inputs.ids), model.logits(inputs.x), inputs.truth.copy())


# ---------------------------------------------------------------- crafting


@dataclass(frozen=True)
class CraftSpec:
    target: int
    alpha: float = 0.9
    step_size: float = 0.05
    max_iters: int = 500
    lo: float = 0.0
    hi: float = 1.0
    min_step: float = 1e-9

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise InvalidInputError("alpha must lie in [0, 1)")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise InvalidInputError("domain bounds must be finite with lo < hi")


@dataclass
class CraftResult:
    x: np.ndarray
    base: np.ndarray
    target: int
    confidence: float
    iterations: int
    success: bool
    base_class: int | None = None

    @property
    def perturbation_norm(self) -> float:
        return float(np.linalg.norm(self.x - self.base))


def _ascend(model: ToyClassifier, x0: np.ndarray, spec: CraftSpec) -> tuple[np.ndarray, float, int, bool]:
    """Projected, normalised gradient ascent on f_k; halve the step whenever it fails to improve.

    d log f_k / dx has the direction of d f_k / dx and does not underflow when
    f_k is tiny.
    """
    if not 1 <= spec.target <= model.K:
        raise InvalidInputError(f"target must lie in 1..{model.K}")
    x = np.clip(x0, spec.lo, spec.hi)
    step = spec.step_size
    conf, grad = model.input_grad_log_prob(x, spec.target)
    for it in range(spec.max_iters + 1):
        if conf > spec.alpha:
            return x, conf, it, True
        if it == spec.max_iters or step < spec.min_step:
            break
        norm = np.linalg.norm(grad)
        if norm == 0:
            break
        cand = np.clip(x + step * grad / norm, spec.lo, spec.hi)
        c_conf, c_grad = model.input_grad_log_prob(cand, spec.target)
        if c_conf > conf:
            x, conf, grad = cand, c_conf, c_grad
        else:
            step /= 2.0
    return x, conf, it, False


def craft_fooling(model: ToyClassifier, spec: CraftSpec, seed: int) -> CraftResult:
    """Start from uniform noise over the domain and push f_target above alpha."""
    base = np.random.default_rng(seed).uniform(spec.lo, spec.hi, model.D)
    x, conf, iters, ok = _ascend(model, base, spec)
    return CraftResult(x, base, spec.target, conf, iters, ok)


def craft_adversarial(model: ToyClassifier, base, base_class: int, spec: CraftSpec) -> CraftResult:
    """Same ascent as :func:`craft_fooling`, starting from a real sample of another class."""
    if base_class == spec.target:
        raise InvalidInputError("adversarial target must differ from the base sample's class")
    base = np.asarray(base, dtype=np.float64)
    x, conf, iters, ok = _ascend(model, base, spec)
    return CraftResult(x, base, spec.target, conf, iters, ok, base_class)


def attempt_seeds(seed: int, n: int) -> list[int]:
    """Independent per-attempt seeds spawned from one root seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def craft_many_fooling(model: ToyClassifier, n: int, seed: int, alpha: float = 0.9, max_iters: int = 500,
                       step_size: float = 0.05) -> list[CraftResult]:
    """``n`` fooling attempts with targets cycling through the classes; results in attempt order."""
    seeds = attempt_seeds(seed, n)

    def one(i: int) -> CraftResult:
        spec = CraftSpec(target=i % model.K + 1, alpha=alpha, step_size=step_size, max_iters=max_iters)
        return craft_fooling(model, spec, seeds[i])

    with ThreadPoolExecutor(max_workers=n_workers()) as pool:
        return list(pool.map(one, range(n)))


def craft_many_adversarial(model: ToyClassifier, bases: LabeledInputs, n: int, seed: int, alpha: float = 0.9,
                           max_iters: int = 500, step_size: float = 0.05) -> list[CraftResult]:
    """``n`` adversarial attempts: random domestic base, random target from the other classes."""
    if len(bases) == 0 or np.any(bases.truth < 1):
        raise InvalidInputError("adversarial bases must be domestic samples")
    seeds = attempt_seeds(seed, n)

    def one(i: int) -> CraftResult:
        rng = np.random.default_rng(seeds[i])
        j = int(rng.integers(len(bases)))
        base_class = int(bases.truth[j])
        others = [k for k in range(1, model.K + 1) if k != base_class]
        target = int(rng.choice(others))
        spec = CraftSpec(target=target, alpha=alpha, step_size=step_size, max_iters=max_iters)
        return craft_adversarial(model, bases.x[j], base_class, spec)

    with ThreadPoolExecutor(max_workers=n_workers()) as pool:
        return list(pool.map(one, range(n)))


def crafted_inputs(results: list[CraftResult], prefix: str) -> LabeledInputs:
    """Successful crafts as fooling-tagged inputs; ids keep the attempt index."""
    kept = [(i, r) for i, r in enumerate(results) if r.success]
    D = results[0].x.size if results else 0
    return LabeledInputs(
        [f"{prefix}/{i:06d}" for i, _ in kept],
        np.array([r.x for _, r in kept]).reshape(len(kept), D),
        np.full(len(kept), FOOLING, dtype=np.int64),
    )
