"""Scoring layer: hashed n-gram logistic classifier, gazetteer NER baseline,
and adapters for external scorers.

The classifier hashes word n-grams (orders 1-4) with FNV-1a 64 truncated to
the weight dimension and trains by adaptive-moment stochastic updates on
cross-entropy. Any object with `score(text) -> p_local` plugs into
bootstrapping and evaluation the same way.
"""

from __future__ import annotations

import json
import logging
import math
import struct
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .corpus import Article, Gazetteer, LOCAL, LabeledExample, NONLOCAL
from .text import tokenize

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"LWNG"
MODEL_VERSION = 1

_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3
_P_EPS = 1e-12


class Scorer(Protocol):
    def score(self, text: str) -> float: ...


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash; fixed here so featurization is portable."""
    h = _FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def hashed_ngram_counts(
    text: str, dim: int, orders: Sequence[int] = (1, 2, 3, 4)
) -> dict[int, int]:
    """Counts of word n-grams hashed into [0, dim)."""
    toks = tokenize(text)
    counts: dict[int, int] = {}
    for n in orders:
        for i in range(len(toks) - n + 1):
            gram = " ".join(toks[i : i + n])
            idx = fnv1a64(gram.encode("utf-8")) % dim
            counts[idx] = counts.get(idx, 0) + 1
    return counts


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@dataclass
class TrainConfig:
    """Training knobs; the seed is deliberately required."""

    seed: int
    dim: int = 1 << 20
    orders: tuple[int, ...] = (1, 2, 3, 4)
    learning_rate: float = 0.05
    epochs: int = 10
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "dim": self.dim,
            "orders": list(self.orders),
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
        }


class NgramLinearModel:
    """Logistic model over hashed n-gram counts: p = sigmoid(w . phi(x) + b)."""

    def __init__(
        self,
        dim: int,
        orders: tuple[int, ...],
        weights: np.ndarray,
        bias: float = 0.0,
        meta: dict | None = None,
    ):
        if weights.shape != (dim,):
            raise ValueError("weight vector does not match dim")
        self.dim = dim
        self.orders = tuple(orders)
        self.weights = weights.astype(np.float64, copy=False)
        self.bias = float(bias)
        self.meta = meta or {}

    @classmethod
    def zeros(cls, dim: int, orders: tuple[int, ...] = (1, 2, 3, 4)) -> "NgramLinearModel":
        return cls(dim, orders, np.zeros(dim, dtype=np.float64))

    def featurize(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        counts = hashed_ngram_counts(text, self.dim, self.orders)
        idx = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
        cnt = np.fromiter(counts.values(), dtype=np.float64, count=len(counts))
        return idx, cnt

    def _margin(self, idx: np.ndarray, cnt: np.ndarray) -> float:
        return float(self.weights[idx] @ cnt) + self.bias if idx.size else self.bias

    def score(self, text: str) -> float:
        """p_local for a feature text, clamped inside (0,1)."""
        idx, cnt = self.featurize(text)
        p = _sigmoid(self._margin(idx, cnt))
        return min(max(p, _P_EPS), 1.0 - _P_EPS)

    def loss(self, examples: Sequence[LabeledExample]) -> float:
        """Mean weighted cross-entropy over a dataset."""
        feats = [self.featurize(ex.features) for ex in examples]
        return self._loss_featurized(
            feats,
            np.array([ex.label for ex in examples], dtype=np.float64),
            np.array([ex.weight for ex in examples], dtype=np.float64),
        )

    def _loss_featurized(self, feats, labels: np.ndarray, weights: np.ndarray) -> float:
        total = 0.0
        for (idx, cnt), y, w in zip(feats, labels, weights):
            p = _sigmoid(self._margin(idx, cnt))
            p = min(max(p, _P_EPS), 1.0 - _P_EPS)
            total += w * -(y * math.log(p) + (1.0 - y) * math.log(1.0 - p))
        return total / len(labels)


def train(
    train_set: Sequence[LabeledExample],
    valid_set: Sequence[LabeledExample],
    config: TrainConfig,
) -> NgramLinearModel:
    """Fit the n-gram model by minimizing cross-entropy with Adam updates.

    A fixed seed makes the run bit-identical: the only randomness is the
    epoch shuffle. Per-epoch train/validation losses land in `model.meta`.
    """
    if not train_set:
        raise ValueError("empty training set")
    labels = {ex.label for ex in train_set}
    if labels != {LOCAL, NONLOCAL}:
        raise ValueError("degenerate labels: training set needs both classes")

    model = NgramLinearModel.zeros(config.dim, config.orders)
    feats = [model.featurize(ex.features) for ex in train_set]
    y = np.array([ex.label for ex in train_set], dtype=np.float64)
    wgt = np.array([ex.weight for ex in train_set], dtype=np.float64)
    valid_feats = [model.featurize(ex.features) for ex in valid_set]
    valid_y = np.array([ex.label for ex in valid_set], dtype=np.float64)
    valid_w = np.array([ex.weight for ex in valid_set], dtype=np.float64)

    m = np.zeros(config.dim, dtype=np.float64)
    v = np.zeros(config.dim, dtype=np.float64)
    m_b = v_b = 0.0
    step = 0
    rng = np.random.default_rng(config.seed)
    history: list[dict] = []

    for epoch in range(config.epochs):
        order = rng.permutation(len(train_set))
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grad = np.zeros(config.dim, dtype=np.float64)
            grad_b = 0.0
            for i in batch:
                idx, cnt = feats[i]
                p = _sigmoid(model._margin(idx, cnt))
                err = wgt[i] * (p - y[i])
                if idx.size:
                    np.add.at(grad, idx, err * cnt)
                grad_b += err
            grad /= len(batch)
            grad_b /= len(batch)

            step += 1
            m *= config.beta1
            m += (1.0 - config.beta1) * grad
            v *= config.beta2
            v += (1.0 - config.beta2) * grad * grad
            m_hat = m / (1.0 - config.beta1**step)
            v_hat = v / (1.0 - config.beta2**step)
            model.weights -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)

            m_b = config.beta1 * m_b + (1.0 - config.beta1) * grad_b
            v_b = config.beta2 * v_b + (1.0 - config.beta2) * grad_b * grad_b
            model.bias -= config.learning_rate * (
                (m_b / (1.0 - config.beta1**step))
                / (math.sqrt(v_b / (1.0 - config.beta2**step)) + config.epsilon)
            )

        train_loss = model._loss_featurized(feats, y, wgt)
        valid_loss = (
            model._loss_featurized(valid_feats, valid_y, valid_w) if valid_set else None
        )
        history.append({"epoch": epoch + 1, "train_loss": train_loss, "valid_loss": valid_loss})
        logger.info(
            "epoch %d/%d train_loss=%.6f valid_loss=%s",
            epoch + 1,
            config.epochs,
            train_loss,
            f"{valid_loss:.6f}" if valid_loss is not None else "n/a",
        )

    model.meta = {"config": config.to_dict(), "history": history}
    return model


def score(model: Scorer, text: str) -> float:
    """p_local of a feature text under any scorer."""
    return model.score(text)


def cross_entropy_gradient(
    model: NgramLinearModel, examples: Sequence[LabeledExample]
) -> tuple[np.ndarray, float]:
    """Analytic mean gradient of the loss, for finite-difference checks."""
    grad = np.zeros(model.dim, dtype=np.float64)
    grad_b = 0.0
    for ex in examples:
        idx, cnt = model.featurize(ex.features)
        p = _sigmoid(model._margin(idx, cnt))
        err = ex.weight * (p - ex.label)
        if idx.size:
            np.add.at(grad, idx, err * cnt)
        grad_b += err
    return grad / len(examples), grad_b / len(examples)


class NerBaseline:
    """Gazetteer baseline: Local (p=1) iff any location name occurs
    whole-token in the text, else NonLocal (p=0)."""

    def __init__(self, gazetteer: Gazetteer):
        self.gazetteer = gazetteer

    def score(self, text: str) -> float:
        return 1.0 if self.gazetteer.contains_any(text) else 0.0


def ner_predict(article: Article, gazetteer: Gazetteer) -> str:
    """Baseline verdict for a raw article: gazetteer hit in title or body."""
    if gazetteer.contains_any(article.title) or gazetteer.contains_any(article.body):
        return "Local"
    return "NonLocal"


class ExternalScorer:
    """Adapter for out-of-process scorers speaking the line protocol:
    one feature text per stdin line, one decimal probability per stdout line.
    """

    def __init__(self, command: Sequence[str]):
        self.command = list(command)

    def score(self, text: str) -> float:
        return self.score_batch([text])[0]

    def score_batch(self, texts: Sequence[str]) -> list[float]:
        # Feature texts are single-line by construction; flatten defensively.
        payload = "\n".join(" ".join(t.split()) for t in texts) + "\n"
        proc = subprocess.run(
            self.command, input=payload, capture_output=True, text=True, check=True
        )
        lines = proc.stdout.splitlines()
        if len(lines) != len(texts):
            raise ValueError(
                f"external scorer returned {len(lines)} lines for {len(texts)} inputs"
            )
        scores = []
        for line in lines:
            p = float(line.strip())
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"external scorer probability out of range: {p}")
            scores.append(p)
        return scores


def save_model(model: NgramLinearModel, path: str | Path) -> Path:
    """Serialize to the binary format: magic, version, dim, orders, bias, weights."""
    path = Path(path)
    header = struct.pack(
        "<4sIQB", MODEL_MAGIC, MODEL_VERSION, model.dim, len(model.orders)
    )
    header += bytes(model.orders)
    header += struct.pack("<d", model.bias)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(header + model.weights.astype("<f8").tobytes())
    tmp.replace(path)
    return path


def load_model(path: str | Path) -> NgramLinearModel:
    blob = Path(path).read_bytes()
    magic, version, dim, n_orders = struct.unpack_from("<4sIQB", blob, 0)
    if magic != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file (bad magic)")
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    offset = struct.calcsize("<4sIQB")
    orders = tuple(blob[offset : offset + n_orders])
    offset += n_orders
    (bias,) = struct.unpack_from("<d", blob, offset)
    offset += struct.calcsize("<d")
    weights = np.frombuffer(blob, dtype="<f8", offset=offset, count=dim).copy()
    return NgramLinearModel(dim, orders, weights, bias)


def save_model_meta(model: NgramLinearModel, path: str | Path) -> Path:
    path = Path(path)
    payload = {
        "dim": model.dim,
        "orders": list(model.orders),
        "bias": model.bias,
        **model.meta,
    }
    path.write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return path
