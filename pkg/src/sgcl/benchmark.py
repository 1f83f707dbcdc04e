"""End-to-end synthetic benchmark: generate, pretrain, train all regimes, evaluate."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from sgcl import downstream, pretrain
from sgcl.config import RunConfig
from sgcl.downstream import Metrics, RegimeKind
from sgcl.encoder import encode_sequences, init_encoder
from sgcl.explain import extract_heatmap
from sgcl.graph_core import SceneSequence, Vocab, split_dataset
from sgcl.synthgen import default_motifs, generate_dataset

log = logging.getLogger(__name__)


@dataclass
class BenchmarkResult:
    metrics: dict[str, Metrics]
    pretrain_history: list[float]
    train_history: dict[str, list[float]]
    models: dict[str, downstream.Model] = field(repr=False)
    test: list[SceneSequence] = field(repr=False)
    seconds: float = 0.0

    def weighted_f1(self) -> dict[str, float]:
        return {k: m.weighted_f1 for k, m in self.metrics.items()}


def make_splits(cfg: RunConfig, vocab: Vocab) -> tuple[list[SceneSequence], list[SceneSequence]]:
    total = cfg.synth.count_train + cfg.synth.count_test
    data = generate_dataset(cfg.generator(), total, vocab)
    return split_dataset(data, cfg.synth.count_train / total, cfg.seed)


def run_benchmark(cfg: RunConfig, regimes=tuple(RegimeKind), vocab: Vocab | None = None) -> BenchmarkResult:
    vocab = vocab or Vocab()
    start = time.perf_counter()
    train, test = make_splits(cfg, vocab)
    rng = np.random.default_rng([cfg.seed, 5])
    encoder = init_encoder(cfg.encoder, vocab.d_node, rng)
    head = pretrain.init_projection(cfg.encoder.out_dim, cfg.pretrain, rng)
    pre = pretrain.pretrain_loop(train, encoder, head, cfg.encoder, cfg.augment, cfg.pretrain, vocab)
    log.info("pretraining done: %s", pre.history[-1])
    metrics, histories, models = {}, {}, {}
    for kind in regimes:
        kind = RegimeKind(kind)
        regime = cfg.regime(kind)
        result = downstream.train(regime, train, cfg.encoder, vocab, encoder if kind.pretrained else None, cfg.augment)
        metrics[kind.value] = downstream.evaluate(result.model, test)
        histories[kind.value] = result.history
        models[kind.value] = result.model
        log.info("%s weighted F1 %.4f", kind.value, metrics[kind.value].weighted_f1)
    return BenchmarkResult(metrics, pre.history, histories, models, test, time.perf_counter() - start)


def motif_attention_rate(model: downstream.Model, seqs: list[SceneSequence]) -> tuple[float, int]:
    """Share of correctly classified sequences whose marker outscores the distractors.

    Compares the marker node's mean spatial score with the mean over
    distractor nodes (ego excluded). Returns (rate, number of sequences used).
    """
    vocab = model.vocab
    motifs = {m.action: m for m in default_motifs(seqs[0].n)} if seqs else {}
    outs = encode_sequences(seqs, model.encoder, model.enc_cfg, vocab)
    preds = np.argmax(np.stack([downstream.decode_action(o, model.decoder) for o in outs]), axis=1) if outs else []
    wins = used = 0
    for seq, enc, pred in zip(seqs, outs, preds):
        if pred != seq.label:
            continue
        motif = motifs[seq.label]
        marker_cls = vocab.class_idx(motif.marker_class)
        marker_state = vocab.state_idx(motif.marker_state)
        heat = extract_heatmap(enc, seq, int(pred))
        marker_scores, other_scores = [], []
        for g, frame in zip(seq.graphs, heat.frames):
            for node, ns in zip(g.nodes, frame.nodes):
                if node.class_idx == vocab.ego_idx:
                    continue
                is_marker = node.class_idx == marker_cls and node.state_idx == marker_state
                (marker_scores if is_marker else other_scores).append(ns.score)
        if not other_scores:
            continue
        used += 1
        wins += np.mean(marker_scores) > np.mean(other_scores)
    return (wins / used if used else 0.0), used
