"""Graph contrastive pretraining: augmentations, projection head, InfoNCE."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from sgcl.diff_core import tensor as T
from sgcl.diff_core.optim import AdamState, adam_step
from sgcl.diff_core.params import ParameterStore, add_linear, dense
from sgcl.diff_core.tensor import Tensor
from sgcl.encoder import EncoderConfig, build_batch, encode_batch
from sgcl.graph_core import ProximityRel, SceneGraph, SceneSequence, Vocab

log = logging.getLogger(__name__)


class NumericError(FloatingPointError):
    pass


@dataclass
class AugmentConfig:
    drop_prob: float = 0.3
    permute_prob: float = 0.3
    seed: int = 0

    def __post_init__(self):
        for name in ("drop_prob", "permute_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass
class PretrainConfig:
    batch_size: int = 256
    epochs: int = 50
    tau: float = 0.5
    proj_dim: int = 32
    proj_hidden: int = 64
    lr: float = 1e-3
    weight_decay: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.tau <= 0:
            raise ValueError("tau must be positive")


# augmentations

def _drop_graph(g: SceneGraph, vocab: Vocab, drop_prob: float, rng: np.random.Generator) -> SceneGraph:
    rels = g.relations(vocab)
    dropped = set()
    for node in g.nodes:
        if node.class_idx == vocab.ego_idx or rels[node.id] != ProximityRel.VISIBLE:
            continue
        if rng.random() < drop_prob:
            dropped.add(node.id)
    if not dropped:
        return g
    return SceneGraph(
        tuple(n for n in g.nodes if n.id not in dropped),
        tuple(e for e in g.edges if e[0] not in dropped and e[1] not in dropped),
    )


def _permute_graph(g: SceneGraph, permute_prob: float, rng: np.random.Generator) -> SceneGraph:
    edges = []
    changed = False
    for s, d, r in g.edges:
        if rng.random() < permute_prob:
            if r == ProximityRel.VISIBLE:
                r = ProximityRel.NEAR
            elif r == ProximityRel.NEAR_COLLISION:
                r = ProximityRel.NEAR
            else:
                r = ProximityRel(int(r) + (1 if rng.random() < 0.5 else -1))
            changed = True
        edges.append((s, d, r))
    return SceneGraph(g.nodes, tuple(edges)) if changed else g


def _replace_graphs(seq: SceneSequence, graphs) -> SceneSequence:
    return SceneSequence(tuple(graphs), seq.frame_ids, seq.video_id, seq.label, seq.id)


def augment_drop_visible(seq: SceneSequence, cfg: AugmentConfig, rng: np.random.Generator, vocab: Vocab | None = None) -> SceneSequence:
    """Independently per frame, drop each visible agent with probability drop_prob."""
    vocab = vocab or Vocab()
    return _replace_graphs(seq, (_drop_graph(g, vocab, cfg.drop_prob, rng) for g in seq.graphs))


def augment_permute_proximity(seq: SceneSequence, cfg: AugmentConfig, rng: np.random.Generator) -> SceneSequence:
    """Independently per edge, move the relation one class up or down with probability permute_prob."""
    return _replace_graphs(seq, (_permute_graph(g, cfg.permute_prob, rng) for g in seq.graphs))


def augment_view(seq: SceneSequence, cfg: AugmentConfig, rng: np.random.Generator, vocab: Vocab | None = None) -> SceneSequence:
    return augment_permute_proximity(augment_drop_visible(seq, cfg, rng, vocab), cfg, rng)


# projection head and loss

def init_projection(out_dim: int, cfg: PretrainConfig, rng: np.random.Generator) -> ParameterStore:
    store = ParameterStore("projection")
    add_linear(store, "proj.0", out_dim, cfg.proj_hidden, rng)
    add_linear(store, "proj.1", cfg.proj_hidden, cfg.proj_dim, rng)
    return store


def project(g: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    z = dense(T.relu(dense(g, params, "proj.0")), params, "proj.1")
    return T.l2_normalize(z, axis=-1)


def info_nce(z1: Tensor, z2: Tensor, tau: float = 0.5) -> Tensor:
    """NT-Xent over the 2B views; row i of z1 and row i of z2 are positives."""
    if z1.shape != z2.shape or z1.ndim != 2:
        raise T.ShapeError(f"info_nce: view shapes {z1.shape} and {z2.shape} differ")
    b = z1.shape[0]
    if b == 0:
        raise ValueError("info_nce needs at least one pair")
    z = T.concat([z1, z2], axis=0)
    logits = T.mul(T.pairwise_cosine(z), 1.0 / tau)
    self_mask = np.where(np.eye(2 * b, dtype=bool), -np.inf, 0.0)
    positives = np.r_[np.arange(b, 2 * b), np.arange(b)]
    return T.cross_entropy(T.add(logits, self_mask), positives)


@dataclass
class PretrainResult:
    encoder: ParameterStore
    projection: ParameterStore
    history: list[float]


def _view_rng(seed: int, epoch: int, sample: int, view: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, sample, view])


def contrastive_loss(
    seqs: Sequence[SceneSequence],
    indices: Sequence[int],
    epoch: int,
    encoder: Mapping[str, Tensor],
    head: Mapping[str, Tensor],
    enc_cfg: EncoderConfig,
    aug_cfg: AugmentConfig,
    cfg: PretrainConfig,
    vocab: Vocab,
) -> Tensor:
    views = []
    for view in (1, 2):
        for i in indices:
            views.append(augment_view(seqs[i], aug_cfg, _view_rng(aug_cfg.seed, epoch, int(i), view), vocab))
    enc = encode_batch(build_batch(views, vocab, enc_cfg.num_relations), encoder, enc_cfg)
    z = project(enc.context, head)
    b = len(indices)
    return info_nce(z[:b], z[b:], cfg.tau)


def pretrain_loop(
    dataset: Sequence[SceneSequence],
    encoder: ParameterStore,
    head: ParameterStore,
    enc_cfg: EncoderConfig,
    aug_cfg: AugmentConfig,
    cfg: PretrainConfig,
    vocab: Vocab | None = None,
) -> PretrainResult:
    """Optimise encoder and head in place; returns the per-epoch mean loss."""
    if not dataset:
        raise ValueError("pretraining needs a non-empty dataset")
    vocab = vocab or Vocab()
    params = {**encoder, **head}
    state = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    order_rng = np.random.default_rng([cfg.seed, 7])
    history = []
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss = contrastive_loss(dataset, idx, epoch, encoder, head, enc_cfg, aug_cfg, cfg, vocab)
            if not np.isfinite(loss.item()):
                raise NumericError(f"non-finite contrastive loss at epoch {epoch + 1}")
            loss.backward()
            adam_step(params, state)
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
        log.info("pretrain epoch %d loss %.4f", epoch + 1, history[-1])
    return PretrainResult(encoder, head, history)
