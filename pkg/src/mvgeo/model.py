"""Multi-branch softmax classifier with hand-written backpropagation.

Each feature view feeds its own stack of ReLU hidden layers; branch
outputs are concatenated, optionally passed through further ReLU layers,
and mapped to class probabilities by a softmax head.  The loss is summed
cross-entropy plus an L2 penalty on the output weight matrix only.
Training is mini-batch Adam with dev-set early stopping and learning-rate
annealing driven by the same stagnation counter.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

PROB_FLOOR = 1e-12
DENSIFY_LIMIT = 10_000


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the best snapshot seen so far."""

    def __init__(self, message: str, snapshot: "Model | None"):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass(frozen=True)
class BranchSpec:
    view: str
    input_dim: int
    hidden: tuple[int, ...] = ()

    @property
    def output_dim(self) -> int:
        return self.hidden[-1] if self.hidden else self.input_dim


@dataclass(frozen=True)
class ModelSpec:
    branches: tuple[BranchSpec, ...]
    num_classes: int
    post_hidden: tuple[int, ...] = ()

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if len({b.view for b in self.branches}) != len(self.branches):
            raise ValueError("duplicate view names")
        if not self.branches:
            raise ValueError("need at least one branch")

    @property
    def concat_dim(self) -> int:
        return sum(b.output_dim for b in self.branches)

    @property
    def views(self) -> list[str]:
        return [b.view for b in self.branches]

    def without_view(self, view: str) -> "ModelSpec":
        """Ablation is structural: the branch is absent, not zero-masked."""
        kept = tuple(b for b in self.branches if b.view != view)
        if len(kept) == len(self.branches):
            raise ValueError(f"no branch for view {view!r}")
        return replace(self, branches=kept)

    def to_dict(self) -> dict:
        return {
            "branches": [
                {"view": b.view, "input_dim": b.input_dim, "hidden": list(b.hidden)}
                for b in self.branches
            ],
            "num_classes": self.num_classes,
            "post_hidden": list(self.post_hidden),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        return cls(
            branches=tuple(
                BranchSpec(b["view"], b["input_dim"], tuple(b["hidden"]))
                for b in doc["branches"]
            ),
            num_classes=doc["num_classes"],
            post_hidden=tuple(doc["post_hidden"]),
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0001
    l2_weight: float = 0.1
    patience: int = 10
    anneal_factor: float = 0.5
    batch_size: int = 128
    max_epochs: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_weight < 0:
            raise ValueError("l2_weight must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class Model:
    spec: ModelSpec
    params: dict[str, np.ndarray]
    history: list[dict] = field(default_factory=list)

    def copy(self) -> "Model":
        return Model(self.spec, {k: v.copy() for k, v in self.params.items()},
                     copy.deepcopy(self.history))


def _layer_keys(spec: ModelSpec):
    """Flat parameter names in a fixed traversal order."""
    keys = []
    for i, branch in enumerate(spec.branches):
        for j in range(len(branch.hidden)):
            keys.append(f"branch{i}/h{j}/W")
            keys.append(f"branch{i}/h{j}/b")
    for j in range(len(spec.post_hidden)):
        keys.append(f"post/h{j}/W")
        keys.append(f"post/h{j}/b")
    keys.append("out/W")
    keys.append("out/b")
    return keys


def init_model(spec: ModelSpec, seed: int = 0) -> Model:
    """He-style scaled-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}

    def affine(name, fan_in, fan_out):
        limit = math.sqrt(6.0 / fan_in)
        params[name + "/W"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[name + "/b"] = np.zeros(fan_out, dtype=np.float64)

    for i, branch in enumerate(spec.branches):
        dim = branch.input_dim
        for j, width in enumerate(branch.hidden):
            affine(f"branch{i}/h{j}", dim, width)
            dim = width
    dim = spec.concat_dim
    for j, width in enumerate(spec.post_hidden):
        affine(f"post/h{j}", dim, width)
        dim = width
    affine("out", dim, spec.num_classes)
    return Model(spec, params)


def _as_batch(view: str, x, expected_dim: int):
    if sp.issparse(x):
        mat = x.tocsr()
    else:
        mat = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if mat.shape[1] != expected_dim:
        raise ValueError(
            f"view {view!r}: expected dimension {expected_dim}, got {mat.shape[1]}"
        )
    return mat


def _forward_cached(model: Model, views: dict) -> tuple[np.ndarray, dict]:
    spec = model.spec
    p = model.params
    cache: dict = {"branch": []}
    outputs = []
    n_rows = None
    for i, branch in enumerate(spec.branches):
        if branch.view not in views:
            raise ValueError(f"missing features for view {branch.view!r}")
        z = _as_batch(branch.view, views[branch.view], branch.input_dim)
        if n_rows is None:
            n_rows = z.shape[0]
        elif z.shape[0] != n_rows:
            raise ValueError(f"view {branch.view!r}: row count mismatch")
        acts = [z]
        for j in range(len(branch.hidden)):
            z = z @ p[f"branch{i}/h{j}/W"] + p[f"branch{i}/h{j}/b"]
            np.maximum(z, 0.0, out=z)
            acts.append(z)
        if not branch.hidden and sp.issparse(z):
            if branch.input_dim > DENSIFY_LIMIT:
                raise ValueError(
                    f"view {branch.view!r}: refusing to densify a "
                    f"{branch.input_dim}-dim sparse view; give the branch a hidden layer"
                )
            z = np.asarray(z.todense())
            acts[-1] = z
        outputs.append(z)
        cache["branch"].append(acts)
    h = np.concatenate(outputs, axis=1)
    cache["post"] = [h]
    for j in range(len(spec.post_hidden)):
        h = h @ p[f"post/h{j}/W"] + p[f"post/h{j}/b"]
        np.maximum(h, 0.0, out=h)
        cache["post"].append(h)
    logits = h @ p["out/W"] + p["out/b"]
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probs = exp / exp.sum(axis=1, keepdims=True)
    return probs, cache


def forward(model: Model, views: dict) -> np.ndarray:
    """Row-stochastic class probabilities for a batch of view blocks."""
    probs, _ = _forward_cached(model, views)
    return probs


def loss_and_gradients(
    model: Model, views: dict, labels: np.ndarray, l2_weight: float
) -> tuple[float, dict[str, np.ndarray]]:
    """Summed cross-entropy plus output-layer L2, with full backprop.

    ``labels`` is the one-hot (or row-stochastic) target matrix.
    """
    spec = model.spec
    p = model.params
    labels = np.asarray(labels, dtype=np.float64)
    probs, cache = _forward_cached(model, views)
    loss = -float(np.sum(labels * np.log(np.maximum(probs, PROB_FLOOR))))
    loss += l2_weight * float(np.sum(p["out/W"] ** 2))

    grads: dict[str, np.ndarray] = {}
    delta = probs - labels
    h_last = cache["post"][-1]
    grads["out/W"] = h_last.T @ delta + 2.0 * l2_weight * p["out/W"]
    grads["out/b"] = delta.sum(axis=0)
    delta = delta @ p["out/W"].T

    for j in reversed(range(len(spec.post_hidden))):
        delta = delta * (cache["post"][j + 1] > 0)
        grads[f"post/h{j}/W"] = cache["post"][j].T @ delta
        grads[f"post/h{j}/b"] = delta.sum(axis=0)
        delta = delta @ p[f"post/h{j}/W"].T

    offset = 0
    for i, branch in enumerate(spec.branches):
        width = branch.output_dim
        d = delta[:, offset : offset + width]
        offset += width
        acts = cache["branch"][i]
        for j in reversed(range(len(branch.hidden))):
            d = d * (acts[j + 1] > 0)
            a = acts[j]
            grads[f"branch{i}/h{j}/W"] = (a.T @ d) if not sp.issparse(a) else np.asarray((a.T @ d))
            grads[f"branch{i}/h{j}/b"] = d.sum(axis=0)
            if j > 0:
                d = d @ p[f"branch{i}/h{j}/W"].T
    return loss, grads


def _slice_views(views: dict, idx: np.ndarray) -> dict:
    return {name: mat[idx] for name, mat in views.items()}


def accuracy(model: Model, views: dict, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax matches the integer label."""
    probs = forward(model, views)
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))


def train(
    spec: ModelSpec,
    train_views: dict,
    train_labels: np.ndarray,
    dev_views: dict,
    dev_labels: np.ndarray,
    config: TrainConfig,
) -> tuple[Model, list[dict]]:
    """Mini-batch Adam with dev-accuracy early stopping.

    After each epoch the dev accuracy is evaluated; ``patience``
    consecutive non-improving evaluations stop training, and the learning
    rate is halved (by ``anneal_factor``) when the stagnation counter
    first reaches half the patience.  Returns the best-dev snapshot.
    """
    train_labels = np.asarray(train_labels, dtype=np.int64)
    dev_labels = np.asarray(dev_labels, dtype=np.int64)
    if train_labels.size == 0 or dev_labels.size == 0:
        raise ValueError("train and dev sets must be non-empty")
    onehot = np.eye(spec.num_classes, dtype=np.float64)[train_labels]

    model = init_model(spec, config.seed)
    rng = np.random.default_rng(config.seed + 1)
    adam_m = {k: np.zeros_like(v) for k, v in model.params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in model.params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    lr = config.learning_rate
    anneal_at = math.ceil(config.patience / 2)
    best_acc = -1.0
    best_model = model.copy()
    bad_evals = 0
    log: list[dict] = []
    n = len(train_labels)

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            loss, grads = loss_and_gradients(
                model, _slice_views(train_views, idx), onehot[idx], config.l2_weight
            )
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} (lr={lr:.3g}, "
                    f"batch rows {lo}..{lo + len(idx)})",
                    best_model,
                )
            epoch_loss += loss
            step += 1
            for key, grad in grads.items():
                adam_m[key] = beta1 * adam_m[key] + (1 - beta1) * grad
                adam_v[key] = beta2 * adam_v[key] + (1 - beta2) * grad * grad
                m_hat = adam_m[key] / (1 - beta1**step)
                v_hat = adam_v[key] / (1 - beta2**step)
                model.params[key] -= lr * m_hat / (np.sqrt(v_hat) + eps)

        dev_acc = accuracy(model, dev_views, dev_labels)
        log.append(
            {"epoch": epoch, "train_loss": epoch_loss / n, "dev_accuracy": dev_acc, "lr": lr}
        )
        if dev_acc > best_acc:
            best_acc = dev_acc
            best_model = model.copy()
            bad_evals = 0
        else:
            bad_evals += 1
            if bad_evals == anneal_at:
                lr *= config.anneal_factor
            if bad_evals >= config.patience:
                break

    best_model.history = log
    return best_model, log


def adam_step(model: Model, grads: dict, state: dict, lr: float) -> dict:
    """One in-place Adam update; ``state`` holds (m, v, t) and is returned."""
    if not state:
        state = {
            "m": {k: np.zeros_like(v) for k, v in model.params.items()},
            "v": {k: np.zeros_like(v) for k, v in model.params.items()},
            "t": 0,
        }
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    state["t"] += 1
    t = state["t"]
    for key, grad in grads.items():
        state["m"][key] = beta1 * state["m"][key] + (1 - beta1) * grad
        state["v"][key] = beta2 * state["v"][key] + (1 - beta2) * grad * grad
        m_hat = state["m"][key] / (1 - beta1**t)
        v_hat = state["v"][key] / (1 - beta2**t)
        model.params[key] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


def predict_user(
    model: Model, partition, features: dict
) -> tuple[int, tuple[float, float], list[str]]:
    """Predicted class and its centroid coordinate for one user.

    A missing view is replaced by a zero vector (mirroring the isolated
    node convention) and reported in the returned flags.
    """
    flags = []
    views = {}
    for branch in model.spec.branches:
        vec = features.get(branch.view)
        if vec is None:
            vec = np.zeros(branch.input_dim, dtype=np.float64)
            flags.append(f"missing_view:{branch.view}")
        views[branch.view] = vec.reshape(1, -1) if hasattr(vec, "reshape") else vec
    probs = forward(model, views)
    class_id = int(np.argmax(probs[0]))
    centroid = next(c.centroid for c in partition.classes if c.class_id == class_id)
    return class_id, centroid, flags


def save_model(model: Model, prefix: str | Path, provenance: dict | None = None) -> None:
    """Raw little-endian float64 blob plus a JSON layout sidecar."""
    prefix = Path(prefix)
    keys = _layer_keys(model.spec)
    layout = {}
    offset = 0
    with open(prefix.with_suffix(".params.bin"), "wb") as handle:
        for key in keys:
            arr = np.ascontiguousarray(model.params[key], dtype="<f8")
            handle.write(arr.tobytes())
            layout[key] = {"shape": list(arr.shape), "offset": offset}
            offset += arr.size
    doc = {
        "spec": model.spec.to_dict(),
        "layout": layout,
        "dtype": "<f8",
        "history": model.history,
    }
    if provenance:
        doc["_provenance"] = provenance
    prefix.with_suffix(".model.json").write_text(json.dumps(doc, sort_keys=True), "utf-8")


def load_model(prefix: str | Path) -> Model:
    prefix = Path(prefix)
    doc = json.loads(prefix.with_suffix(".model.json").read_text("utf-8"))
    spec = ModelSpec.from_dict(doc["spec"])
    blob = np.frombuffer(prefix.with_suffix(".params.bin").read_bytes(), dtype="<f8")
    params = {}
    for key, entry in doc["layout"].items():
        shape = tuple(entry["shape"])
        size = int(np.prod(shape))
        params[key] = blob[entry["offset"] : entry["offset"] + size].reshape(shape).copy()
    return Model(spec, params, history=doc.get("history", []))
