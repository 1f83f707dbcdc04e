"""Spatio-temporal graph encoder.

Per frame: stacked multi-relational GIN convolutions, one self-attention
pooling step and a sum readout. The per-frame embeddings are then folded by
an LSTM with additive attention into a fixed-size context vector.

Sequences are encoded in batches: all frames of all sequences become one
disjoint-union graph, graph index ``b * n + t`` for sequence b, frame t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from sgcl.diff_core import tensor as T
from sgcl.diff_core.params import ParameterStore, add_linear, add_lstm, add_mlp, dense, lstm_step, mlp, uniform_fan_in
from sgcl.diff_core.tensor import Tensor
from sgcl.graph_core import NUM_RELATIONS, SceneSequence, Vocab, encode_features


@dataclass
class EncoderConfig:
    num_layers: int = 2
    hidden_dim: int = 64
    out_dim: int = 20
    pool_ratio: float = 0.5
    num_relations: int = NUM_RELATIONS
    seq_len: int = 5

    def __post_init__(self):
        if self.num_layers < 1 or self.hidden_dim < 1 or self.out_dim < 1 or self.seq_len < 1:
            raise ValueError("encoder layer count and dimensions must be >= 1")
        if not 0.0 < self.pool_ratio <= 1.0:
            raise ValueError(f"pool_ratio must lie in (0, 1], got {self.pool_ratio}")


@dataclass
class GraphBatch:
    x: np.ndarray  # (M, d_node)
    adj: list[sp.csr_matrix]  # one symmetric (M, M) matrix per relation
    adj_union: sp.csr_matrix
    graph_of_node: np.ndarray  # (M,)
    node_offsets: np.ndarray  # (G + 1,)
    batch_size: int
    seq_len: int

    @property
    def num_graphs(self) -> int:
        return len(self.node_offsets) - 1


def build_batch(seqs: Sequence[SceneSequence], vocab: Vocab, num_relations: int = NUM_RELATIONS) -> GraphBatch:
    if not seqs:
        raise ValueError("cannot batch zero sequences")
    n = seqs[0].n
    if any(s.n != n for s in seqs):
        raise ValueError("all sequences in a batch must have the same length")
    feats, rows, cols, rels, graph_ids, offsets = [], [], [], [], [], [0]
    for b, seq in enumerate(seqs):
        for t, g in enumerate(seq.graphs):
            base = offsets[-1]
            feats.append(encode_features(g, vocab))
            index = g.node_index()
            for s, d, r in g.edges:
                rows.append(base + index[s])
                cols.append(base + index[d])
                rels.append(int(r))
            graph_ids.append(np.full(g.num_nodes, b * n + t))
            offsets.append(base + g.num_nodes)
    m = offsets[-1]
    rows, cols, rels = np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(rels, dtype=np.int64)
    adj = []
    for r in range(num_relations):
        sel = rels == r
        a = sp.coo_matrix((np.ones(2 * sel.sum()), (np.r_[rows[sel], cols[sel]], np.r_[cols[sel], rows[sel]])), shape=(m, m))
        adj.append(a.tocsr())
    union = sp.coo_matrix((np.ones(2 * len(rows)), (np.r_[rows, cols], np.r_[cols, rows])), shape=(m, m)).tocsr()
    return GraphBatch(
        x=np.concatenate(feats, axis=0),
        adj=adj,
        adj_union=union,
        graph_of_node=np.concatenate(graph_ids),
        node_offsets=np.array(offsets),
        batch_size=len(seqs),
        seq_len=n,
    )


def init_encoder(cfg: EncoderConfig, d_node: int, rng: np.random.Generator) -> ParameterStore:
    store = ParameterStore("encoder")
    d_in = d_node
    for k in range(cfg.num_layers):
        for r in range(cfg.num_relations):
            store.add(f"conv{k}.rel{r}.weight", uniform_fan_in(rng, d_in, (d_in, d_in)))
        add_mlp(store, f"conv{k}.mlp", d_in, cfg.hidden_dim, cfg.hidden_dim, rng)
        d_in = cfg.hidden_dim
    h = cfg.hidden_dim
    store.add("pool.weight_self", uniform_fan_in(rng, h, (h, 1)))
    store.add("pool.weight_nbr", uniform_fan_in(rng, h, (h, 1)))
    store.add("pool.bias", np.zeros(1))
    add_linear(store, "readout", h, h, rng)
    add_lstm(store, "lstm", h, h, rng)
    add_linear(store, "attn.proj", 2 * h, h, rng)
    store.add("attn.vector", uniform_fan_in(rng, h, (h, 1)))
    add_linear(store, "context", h, cfg.out_dim, rng)
    return store


def mrgcn_layer(h: Tensor, adj: Sequence[sp.spmatrix], params: Mapping[str, Tensor], name: str) -> Tensor:
    """GIN update ``MLP(h_v + sum_r sum_{u in N_r(v)} W_r h_u)`` with eps = 0."""
    agg = h
    for r, a in enumerate(adj):
        agg = T.add(agg, T.matmul(T.spmm(a, h), params[f"{name}.rel{r}.weight"]))
    return mlp(agg, params, f"{name}.mlp")


def pool_size(n: int, ratio: float) -> int:
    # rounding guards against ratio * n landing a hair above an integer
    return max(1, math.ceil(round(ratio * n, 9)))


def select_top(scores: np.ndarray, graph_of_node: np.ndarray, node_offsets: np.ndarray, ratio: float) -> np.ndarray:
    """Per graph, indices of the ceil(ratio * N) highest scores (ties: lower index first).

    Returned grouped by graph, each group in descending score order.
    """
    m = len(scores)
    counts = np.diff(node_offsets)
    keep = np.array([pool_size(int(c), ratio) for c in counts])
    order = np.lexsort((np.arange(m), -scores, graph_of_node))
    rank = np.arange(m) - node_offsets[graph_of_node[order]]
    return order[rank < keep[graph_of_node[order]]]


def pool_scores(h: Tensor, adj_union: sp.spmatrix, params: Mapping[str, Tensor]) -> Tensor:
    s = T.add(T.matmul(h, params["pool.weight_self"]), T.spmm(adj_union, T.matmul(h, params["pool.weight_nbr"])))
    return T.reshape(T.add(s, params["pool.bias"]), (-1,))


def sagpool(
    h: Tensor,
    adj_union: sp.spmatrix,
    ratio: float,
    params: Mapping[str, Tensor],
    graph_of_node: np.ndarray | None = None,
    node_offsets: np.ndarray | None = None,
):
    """Self-attention pooling; returns (pooled features, pooled adjacency, scores, kept)."""
    n = h.shape[0]
    if n < 1:
        raise ValueError("sagpool needs at least one node")
    if graph_of_node is None:
        graph_of_node = np.zeros(n, dtype=np.int64)
        node_offsets = np.array([0, n])
    scores = pool_scores(h, adj_union, params)
    kept = select_top(scores.data, graph_of_node, node_offsets, ratio)
    gate = T.tanh(T.take(scores, kept))
    pooled = T.mul(T.take(h, kept), T.reshape(gate, (-1, 1)))
    adj_kept = sp.csr_matrix(adj_union)[kept][:, kept]
    return pooled, adj_kept, scores, kept


def readout(h: Tensor, params: Mapping[str, Tensor], membership: sp.spmatrix | None = None) -> Tensor:
    """Sum node rows per graph (``membership`` is graphs x nodes), then a linear layer."""
    if membership is None:
        summed = T.sum(h, axis=0, keepdims=True)
    else:
        summed = T.spmm(membership, h)
    return dense(summed, params, "readout")


def temporal_attention(frames: Sequence[Tensor], params: Mapping[str, Tensor]):
    """LSTM over frame embeddings (each (B, h)) with additive attention.

    Returns (context, alpha, h_n, c_n); alpha has shape (B, n).
    """
    if not frames:
        raise ValueError("temporal attention needs at least one frame")
    batch = frames[0].shape[0]
    d_h = params["lstm.weight_hh"].shape[0]
    h = Tensor(np.zeros((batch, d_h)))
    c = Tensor(np.zeros((batch, d_h)))
    hidden = []
    for e in frames:
        h, c = lstm_step(e, h, c, params, "lstm")
        hidden.append(h)
    logits = [
        T.matmul(T.tanh(dense(T.concat([h_i, h], axis=1), params, "attn.proj")), params["attn.vector"])
        for h_i in hidden
    ]
    alpha = T.softmax(T.concat(logits, axis=1), axis=1)
    mixed = hidden[0] * alpha[:, 0:1]
    for i in range(1, len(hidden)):
        mixed = mixed + hidden[i] * alpha[:, i : i + 1]
    context = dense(mixed, params, "context")
    return context, alpha, h, c


@dataclass
class EncodedBatch:
    context: Tensor  # (B, out_dim)
    alpha: Tensor  # (B, n)
    final_hidden: Tensor
    final_cell: Tensor
    scores: np.ndarray  # (M,) raw pooling scores for every node
    kept: np.ndarray  # kept node indices, grouped by graph
    batch: GraphBatch


def encode_batch(batch: GraphBatch, params: Mapping[str, Tensor], cfg: EncoderConfig) -> EncodedBatch:
    h = Tensor(batch.x)
    for k in range(cfg.num_layers):
        h = T.relu(mrgcn_layer(h, batch.adj, params, f"conv{k}"))
    pooled, _, scores, kept = sagpool(h, batch.adj_union, cfg.pool_ratio, params, batch.graph_of_node, batch.node_offsets)
    g = batch.num_graphs
    membership = sp.csr_matrix((np.ones(len(kept)), (batch.graph_of_node[kept], np.arange(len(kept)))), shape=(g, len(kept)))
    frame_emb = readout(pooled, params, membership)
    b, n = batch.batch_size, batch.seq_len
    frames = [T.take(frame_emb, np.arange(b) * n + t) for t in range(n)]
    context, alpha, h_n, c_n = temporal_attention(frames, params)
    return EncodedBatch(context, alpha, h_n, c_n, scores.data.copy(), kept, batch)


@dataclass
class EncoderOutput:
    context: np.ndarray
    final_hidden: np.ndarray
    final_cell: np.ndarray
    node_scores: list[np.ndarray]  # per frame, tanh gate value of every node
    kept_indices: list[list[int]]  # per frame, surviving node positions by descending score
    temporal_alpha: np.ndarray

    def to_json(self) -> dict:
        return {
            "context": self.context.tolist(),
            "node_scores": [s.tolist() for s in self.node_scores],
            "kept_indices": self.kept_indices,
            "temporal_alpha": self.temporal_alpha.tolist(),
        }


def split_outputs(enc: EncodedBatch) -> list[EncoderOutput]:
    batch = enc.batch
    off = batch.node_offsets
    gates = np.tanh(enc.scores)
    kept_by_graph: dict[int, list[int]] = {}
    for node in enc.kept:
        gi = int(batch.graph_of_node[node])
        kept_by_graph.setdefault(gi, []).append(int(node - off[gi]))
    out = []
    for b in range(batch.batch_size):
        graphs = range(b * batch.seq_len, (b + 1) * batch.seq_len)
        out.append(
            EncoderOutput(
                context=enc.context.data[b].copy(),
                final_hidden=enc.final_hidden.data[b].copy(),
                final_cell=enc.final_cell.data[b].copy(),
                node_scores=[gates[off[gi] : off[gi + 1]].copy() for gi in graphs],
                kept_indices=[kept_by_graph[gi] for gi in graphs],
                temporal_alpha=enc.alpha.data[b].copy(),
            )
        )
    return out


def encode_sequences(
    seqs: Sequence[SceneSequence],
    params: Mapping[str, Tensor],
    cfg: EncoderConfig,
    vocab: Vocab,
    batch_size: int = 256,
) -> list[EncoderOutput]:
    """Inference over many sequences; no gradients are recorded."""
    frozen = params.frozen() if isinstance(params, ParameterStore) else params
    out: list[EncoderOutput] = []
    for i in range(0, len(seqs), batch_size):
        chunk = seqs[i : i + batch_size]
        out.extend(split_outputs(encode_batch(build_batch(chunk, vocab, cfg.num_relations), frozen, cfg)))
    return out


def encode_sequence(seq: SceneSequence, cfg: EncoderConfig, params: Mapping[str, Tensor], vocab: Vocab) -> EncoderOutput:
    return encode_sequences([seq], params, cfg, vocab)[0]
