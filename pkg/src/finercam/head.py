"""Linear classifier heads over pooled embeddings.

Covers training (softmax cross-entropy + Adam), logit/confidence prediction,
reference-class ranking, the sorted weight-similarity profile, and head
persistence (FCT weights + JSON sidecar). Text-embedding heads reuse the same
container with unit-norm rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor_store
from .rng import StreamRng

ORIGINS = ("trained", "text_embeddings")


@dataclass(frozen=True)
class EmbeddingSet:
    """Pooled embeddings with integer labels."""

    embeddings: np.ndarray  # (N, K) float32
    labels: np.ndarray  # (N,) int
    split: str = "train"

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float32)
        lab = np.asarray(self.labels, dtype=np.int64)
        if emb.ndim != 2 or emb.shape[0] < 1:
            raise ValueError("embeddings must be a non-empty (N, K) matrix")
        if lab.shape != (emb.shape[0],):
            raise ValueError("labels must be a vector matching embeddings")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "labels", lab)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    epochs: int = 100
    batch_size: int = 256
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    use_bias: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "seed": self.seed,
            "use_bias": self.use_bias,
        }


@dataclass(frozen=True)
class ClassifierHead:
    """C x K weight matrix with optional bias and class names.

    ``origin`` records whether rows were trained or are encoded text prompts;
    text rows must be unit L2 norm (within 1e-4).
    """

    weights: np.ndarray  # (C, K) float32
    class_names: list[str]
    bias: np.ndarray | None = None
    origin: str = "trained"
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float32)
        if w.ndim != 2:
            raise ValueError("weights must be a (C, K) matrix")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if len(self.class_names) != w.shape[0]:
            raise ValueError("class_names length must equal the class count")
        if self.origin not in ORIGINS:
            raise ValueError(f"origin must be one of {ORIGINS}")
        bias = self.bias
        if bias is not None:
            bias = np.asarray(bias, dtype=np.float32)
            if bias.shape != (w.shape[0],) or not np.all(np.isfinite(bias)):
                raise ValueError("bias must be a finite C-vector")
        if self.origin == "text_embeddings":
            norms = np.linalg.norm(w.astype(np.float64), axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-4):
                raise ValueError("text-embedding head rows must be unit norm")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", bias)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def predict_logits(head: ClassifierHead, embedding: np.ndarray) -> np.ndarray:
    """Logits W.e (+ bias) for one K-vector, in float64."""
    e = np.asarray(embedding, dtype=np.float64)
    if e.shape != (head.dim,):
        raise ValueError(f"embedding must have shape ({head.dim},), got {e.shape}")
    logits = head.weights.astype(np.float64) @ e
    if head.bias is not None:
        logits = logits + head.bias.astype(np.float64)
    return logits


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max-subtracted)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def rank_reference_classes(logits: np.ndarray, target: int, count: int) -> list[int]:
    """Top ``count`` classes by descending logit, excluding ``target``.

    Ties break toward the smaller class id.
    """
    logits = np.asarray(logits, dtype=np.float64)
    num = logits.shape[0]
    if not 0 <= target < num:
        raise ValueError(f"target class {target} out of range")
    if count > num - 1:
        raise ValueError(f"cannot rank {count} references among {num - 1} other classes")
    order = sorted((i for i in range(num) if i != target), key=lambda i: (-logits[i], i))
    return order[:count]


def cross_entropy(head: ClassifierHead, embeddings: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy of a head on a labelled set."""
    x = np.asarray(embeddings, dtype=np.float64)
    logits = x @ head.weights.astype(np.float64).T
    if head.bias is not None:
        logits = logits + head.bias.astype(np.float64)
    logits = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(logits).sum(axis=1))
    picked = logits[np.arange(len(labels)), np.asarray(labels)]
    return float((log_z - picked).mean())


def train_head(train: EmbeddingSet, num_classes: int, config: TrainConfig | None = None,
               class_names: list[str] | None = None,
               loss_history: list[float] | None = None) -> ClassifierHead:
    """Train a linear head with Adam on softmax cross-entropy.

    Weights and bias start at zero; shuffling draws one deterministic
    permutation per epoch from the counter stream (seed, epoch). Identical
    inputs and seed reproduce the returned weights byte-for-byte. Passing a
    list as ``loss_history`` records the full-set loss after every epoch.
    """
    config = config or TrainConfig()
    x = train.embeddings.astype(np.float64)
    labels = train.labels
    n, dim = x.shape
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError("labels out of range for num_classes")

    w = np.zeros((num_classes, dim))
    b = np.zeros(num_classes) if config.use_bias else None
    m_w = np.zeros_like(w)
    v_w = np.zeros_like(w)
    m_b = np.zeros(num_classes)
    v_b = np.zeros(num_classes)
    onehot = np.eye(num_classes)[labels]
    t = 0

    for epoch in range(config.epochs):
        perm = StreamRng(config.seed, stream=epoch + 1).permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            xb = x[idx]
            logits = xb @ w.T
            if b is not None:
                logits = logits + b
            probs = softmax(logits)
            g = (probs - onehot[idx]) / len(idx)
            grad_w = g.T @ xb
            t += 1
            bc1 = 1.0 - config.beta1 ** t
            bc2 = 1.0 - config.beta2 ** t
            m_w = config.beta1 * m_w + (1.0 - config.beta1) * grad_w
            v_w = config.beta2 * v_w + (1.0 - config.beta2) * grad_w ** 2
            w = w - config.learning_rate * (m_w / bc1) / (np.sqrt(v_w / bc2) + config.eps)
            if b is not None:
                grad_b = g.sum(axis=0)
                m_b = config.beta1 * m_b + (1.0 - config.beta1) * grad_b
                v_b = config.beta2 * v_b + (1.0 - config.beta2) * grad_b ** 2
                b = b - config.learning_rate * (m_b / bc1) / (np.sqrt(v_b / bc2) + config.eps)
        if loss_history is not None:
            logits = x @ w.T
            if b is not None:
                logits = logits + b
            logits = logits - logits.max(axis=1, keepdims=True)
            log_z = np.log(np.exp(logits).sum(axis=1))
            loss_history.append(float((log_z - logits[np.arange(n), labels]).mean()))

    names = class_names if class_names is not None else [f"class_{i}" for i in range(num_classes)]
    return ClassifierHead(
        weights=w.astype(np.float32),
        bias=b.astype(np.float32) if b is not None else None,
        class_names=list(names),
        origin="trained",
        metadata={"train_config": config.to_dict()},
    )


def accuracy(head: ClassifierHead, data: EmbeddingSet) -> float:
    logits = data.embeddings.astype(np.float64) @ head.weights.astype(np.float64).T
    if head.bias is not None:
        logits = logits + head.bias.astype(np.float64)
    return float((logits.argmax(axis=1) == data.labels).mean())


# --------------------------------------------------------------------------
# Weight-similarity profile
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SimilarityProfile:
    """Class-averaged, rank-sorted cosine similarity between head rows."""

    mean_by_rank: np.ndarray  # (C-1,)
    std_by_rank: np.ndarray  # (C-1,)


def weight_similarity_profile(head: ClassifierHead) -> SimilarityProfile:
    """Cosine similarity of each class row to every other row, sorted
    descending per row, then averaged column-wise across classes.

    Self-similarity is excluded from the ranking entirely (rather than
    zeroed), so ``mean_by_rank`` has C-1 entries and is non-increasing.
    """
    w = head.weights.astype(np.float64)
    num = w.shape[0]
    if num < 2:
        raise ValueError("similarity profile needs at least 2 classes")
    norms = np.linalg.norm(w, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero-norm weight row")
    unit = w / norms[:, None]
    sim = unit @ unit.T
    rows = []
    for p in range(num):
        others = np.delete(sim[p], p)
        rows.append(np.sort(others)[::-1])
    stacked = np.stack(rows)
    return SimilarityProfile(
        mean_by_rank=stacked.mean(axis=0),
        std_by_rank=stacked.std(axis=0),
    )


def similarity_profile_csv(profile: SimilarityProfile) -> str:
    lines = ["rank,mean,std"]
    for i, (m, s) in enumerate(zip(profile.mean_by_rank, profile.std_by_rank), start=1):
        lines.append(f"{i},{float(m)!r},{float(s)!r}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Persistence: FCT weights + JSON sidecar
# --------------------------------------------------------------------------


def save_head(sidecar_path: str | Path, head: ClassifierHead) -> None:
    """Write ``<stem>.weights.fct`` (+ ``<stem>.bias.fct``) and the JSON
    sidecar naming them."""
    sidecar = Path(sidecar_path)
    stem = sidecar.name[: -len(".json")] if sidecar.name.endswith(".json") else sidecar.name
    weights_name = f"{stem}.weights.fct"
    bias_name = f"{stem}.bias.fct" if head.bias is not None else None
    tensor_store.write_tensor(sidecar.parent / weights_name, head.weights)
    if bias_name:
        tensor_store.write_tensor(sidecar.parent / bias_name, head.bias)
    doc = {
        "class_names": head.class_names,
        "origin": head.origin,
        "weights_file": weights_name,
        "bias_file": bias_name,
        "metadata": head.metadata,
    }
    sidecar.write_text(json.dumps(doc, indent=2) + "\n", "utf-8")


def load_head(sidecar_path: str | Path) -> ClassifierHead:
    sidecar = Path(sidecar_path)
    if not sidecar.is_file():
        raise FileNotFoundError(f"head sidecar not found: {sidecar}")
    doc = json.loads(sidecar.read_text("utf-8"))
    for key in ("class_names", "origin", "weights_file"):
        if key not in doc:
            raise ValueError(f"head sidecar missing {key!r}")
    weights = tensor_store.read_tensor(sidecar.parent / doc["weights_file"])
    bias = None
    if doc.get("bias_file"):
        bias = tensor_store.read_tensor(sidecar.parent / doc["bias_file"])
    return ClassifierHead(
        weights=weights,
        bias=bias,
        class_names=list(doc["class_names"]),
        origin=doc["origin"],
        metadata=doc.get("metadata", {}),
    )
