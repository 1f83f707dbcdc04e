"""Next-action decoder, the four training regimes and F1 evaluation."""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from sgcl.diff_core import tensor as T
from sgcl.diff_core.optim import AdamState, adam_step
from sgcl.diff_core.params import ParameterStore, add_linear, add_lstm, dense, lstm_step
from sgcl.diff_core.tensor import Tensor
from sgcl.encoder import EncodedBatch, EncoderConfig, build_batch, encode_batch, init_encoder
from sgcl.graph_core import ACTIONS, NUM_ACTIONS, SceneSequence, Vocab
from sgcl.pretrain import AugmentConfig, NumericError, augment_view

log = logging.getLogger(__name__)


class RegimeError(ValueError):
    """Regime and checkpoint do not fit together."""


class RegimeKind(str, enum.Enum):
    BASELINE_NOAUG = "baseline-noaug"
    BASELINE_AUG = "baseline-aug"
    URL = "url"
    PF = "pf"

    @property
    def pretrained(self) -> bool:
        return self in (RegimeKind.URL, RegimeKind.PF)


@dataclass
class TrainRegime:
    kind: RegimeKind
    epochs: int
    batch_size: int
    lr: float
    weight_decay: float
    seed: int = 0

    @classmethod
    def default(cls, kind: RegimeKind | str, seed: int = 0) -> "TrainRegime":
        kind = RegimeKind(kind)
        if kind.pretrained:
            return cls(kind, epochs=30, batch_size=64, lr=0.02, weight_decay=1e-5, seed=seed)
        return cls(kind, epochs=50, batch_size=64, lr=1e-3, weight_decay=5e-4, seed=seed)

    def check_checkpoint(self, has_checkpoint: bool) -> None:
        if self.kind.pretrained and not has_checkpoint:
            raise RegimeError(f"regime {self.kind.value} requires a pretrained encoder checkpoint")
        if not self.kind.pretrained and has_checkpoint:
            raise RegimeError(f"regime {self.kind.value} trains from scratch and forbids a checkpoint")


def init_decoder(enc_cfg: EncoderConfig, rng: np.random.Generator) -> ParameterStore:
    store = ParameterStore("decoder")
    add_lstm(store, "dec.lstm", enc_cfg.out_dim, enc_cfg.hidden_dim, rng)
    add_linear(store, "dec.out", enc_cfg.hidden_dim, NUM_ACTIONS, rng)
    return store


def decode_logits(context: Tensor, hidden: Tensor, cell: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    h, _ = lstm_step(context, hidden, cell, params, "dec.lstm")
    return dense(h, params, "dec.out")


def decode_action(enc, params: Mapping[str, Tensor]) -> np.ndarray:
    """Logits over the 7 actions for one EncoderOutput."""
    frozen = params.frozen() if isinstance(params, ParameterStore) else params
    logits = decode_logits(Tensor(enc.context), Tensor(enc.final_hidden), Tensor(enc.final_cell), frozen)
    return logits.data


def weighted_sampler(labels: Sequence[int], seed: int = 0) -> Iterator[int]:
    """Endless indices drawn with probability proportional to 1 / count(class)."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("weighted_sampler needs at least one label")
    counts = np.bincount(labels)
    weights = 1.0 / counts[labels]
    p = weights / weights.sum()
    rng = np.random.default_rng([seed, 11])
    while True:
        yield from rng.choice(len(labels), size=1024, p=p).tolist()


@dataclass
class Model:
    enc_cfg: EncoderConfig
    encoder: ParameterStore
    decoder: ParameterStore
    vocab: Vocab = field(default_factory=Vocab)

    def forward(self, seqs: Sequence[SceneSequence], train_encoder: bool = True) -> tuple[Tensor, EncodedBatch]:
        enc_params = self.encoder if train_encoder else self.encoder.frozen()
        enc = encode_batch(build_batch(seqs, self.vocab, self.enc_cfg.num_relations), enc_params, self.enc_cfg)
        return decode_logits(enc.context, enc.final_hidden, enc.final_cell, self.decoder), enc

    def logits(self, seqs: Sequence[SceneSequence], batch_size: int = 256) -> np.ndarray:
        enc_frozen, dec_frozen = self.encoder.frozen(), self.decoder.frozen()
        out = []
        for i in range(0, len(seqs), batch_size):
            chunk = seqs[i : i + batch_size]
            enc = encode_batch(build_batch(chunk, self.vocab, self.enc_cfg.num_relations), enc_frozen, self.enc_cfg)
            out.append(decode_logits(enc.context, enc.final_hidden, enc.final_cell, dec_frozen).data)
        return np.concatenate(out, axis=0) if out else np.zeros((0, NUM_ACTIONS))

    def predict(self, seqs: Sequence[SceneSequence]) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. the lowest class index on ties
        return np.argmax(self.logits(seqs), axis=1)


def new_model(enc_cfg: EncoderConfig, vocab: Vocab, seed: int = 0) -> Model:
    rng = np.random.default_rng([seed, 3])
    encoder = init_encoder(enc_cfg, vocab.d_node, rng)
    decoder = init_decoder(enc_cfg, rng)
    return Model(enc_cfg, encoder, decoder, vocab)


@dataclass
class TrainResult:
    model: Model
    history: list[float]


def train(
    regime: TrainRegime,
    dataset: Sequence[SceneSequence],
    enc_cfg: EncoderConfig,
    vocab: Vocab | None = None,
    pretrained_encoder: ParameterStore | None = None,
    aug_cfg: AugmentConfig | None = None,
) -> TrainResult:
    """Supervised next-action training under one of the four regimes."""
    vocab = vocab or Vocab()
    regime.check_checkpoint(pretrained_encoder is not None)
    if any(s.label is None for s in dataset):
        raise ValueError("supervised training needs labelled sequences")
    model = new_model(enc_cfg, vocab, regime.seed)
    if pretrained_encoder is not None:
        model.encoder.load_state(pretrained_encoder.state())
    aug_cfg = aug_cfg or AugmentConfig(seed=regime.seed)
    train_encoder = regime.kind != RegimeKind.URL
    params = {**model.encoder, **model.decoder} if train_encoder else dict(model.decoder)
    state = AdamState(lr=regime.lr, weight_decay=regime.weight_decay)
    labels = [s.label for s in dataset]
    sampler = weighted_sampler(labels, regime.seed)
    steps = math.ceil(len(dataset) / regime.batch_size)
    history = []
    for epoch in range(regime.epochs):
        losses = []
        for step in range(steps):
            idx = [next(sampler) for _ in range(regime.batch_size)]
            batch = [dataset[i] for i in idx]
            if regime.kind == RegimeKind.BASELINE_AUG:
                batch = [
                    augment_view(s, aug_cfg, np.random.default_rng([aug_cfg.seed, epoch, step, j]), vocab)
                    for j, s in enumerate(batch)
                ]
            logits, _ = model.forward(batch, train_encoder)
            loss = T.cross_entropy(logits, [s.label for s in batch])
            if not np.isfinite(loss.item()):
                raise NumericError(f"non-finite training loss at epoch {epoch + 1}")
            loss.backward()
            adam_step(params, state)
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
        log.info("%s epoch %d loss %.4f", regime.kind.value, epoch + 1, history[-1])
    return TrainResult(model, history)


# evaluation

@dataclass
class Metrics:
    per_class_f1: list[float]
    weighted_f1: float
    confusion: np.ndarray
    normalized_confusion: np.ndarray
    support: list[int]

    def to_json(self) -> dict:
        return {
            "per_class_f1": dict(zip(ACTIONS, self.per_class_f1)) if len(self.per_class_f1) == NUM_ACTIONS else self.per_class_f1,
            "weighted_f1": self.weighted_f1,
            "support": self.support,
            "confusion": self.confusion.tolist(),
            "normalized_confusion": self.normalized_confusion.tolist(),
        }


def metrics_from_confusion(confusion: np.ndarray) -> Metrics:
    """F1 per class (0 where P + R = 0) and support-weighted F1; rows are true classes."""
    cm = np.asarray(confusion, dtype=np.int64)
    tp = np.diag(cm).astype(float)
    pred = cm.sum(axis=0).astype(float)
    true = cm.sum(axis=1).astype(float)
    precision = np.divide(tp, pred, out=np.zeros_like(tp), where=pred > 0)
    recall = np.divide(tp, true, out=np.zeros_like(tp), where=true > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    weighted = float((f1 * true).sum() / true.sum()) if true.sum() > 0 else 0.0
    norm = np.divide(cm, true[:, None], out=np.zeros(cm.shape), where=true[:, None] > 0)
    return Metrics(f1.tolist(), weighted, cm, norm, true.astype(int).tolist())


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int], num_classes: int = NUM_ACTIONS) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def evaluate(model: Model, dataset: Sequence[SceneSequence]) -> Metrics:
    for s in dataset:
        if s.label is None:
            raise ValueError(f"sequence {s.id!r} has no label")
    y_pred = model.predict(dataset) if dataset else np.zeros(0, dtype=np.int64)
    return metrics_from_confusion(confusion_matrix([s.label for s in dataset], y_pred))


def write_metrics_csv(metrics: Metrics, path, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["class", "f1", "support", *[f"pred_{a}" for a in ACTIONS]])
        for c, action in enumerate(ACTIONS):
            w.writerow([action, repr(metrics.per_class_f1[c]), metrics.support[c], *metrics.confusion[c].tolist()])
        w.writerow(["weighted", repr(metrics.weighted_f1), sum(metrics.support), *[""] * NUM_ACTIONS])


def export_embeddings(model: Model, dataset: Sequence[SceneSequence]) -> list[dict]:
    from sgcl.encoder import encode_sequences

    outs = encode_sequences(dataset, model.encoder, model.enc_cfg, model.vocab)
    return [
        {
            "id": s.id,
            "video_id": s.video_id,
            "label": None if s.label is None else ACTIONS[s.label],
            "embedding": o.context,
        }
        for s, o in zip(dataset, outs)
    ]


def write_embeddings_csv(rows: Sequence[dict], path, header: str | None = None) -> None:
    width = len(rows[0]["embedding"]) if rows else 0
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["id", "video_id", "label", *[f"g{i}" for i in range(width)]])
        for r in rows:
            w.writerow([r["id"], r["video_id"], r["label"] or "", *[repr(float(v)) for v in r["embedding"]]])


def read_embeddings_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(lines)
    for r in reader:
        cols = sorted((k for k in r if k.startswith("g") and k[1:].isdigit()), key=lambda k: int(k[1:]))
        rows.append(
            {
                "id": r["id"],
                "video_id": r["video_id"],
                "label": r["label"] or None,
                "embedding": np.array([float(r[k]) for k in cols]),
            }
        )
    return rows
