"""Spatial and temporal attention heatmaps, DOT/JSON export and 2-D projection."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from sgcl.encoder import EncoderOutput
from sgcl.graph_core import ACTIONS, SceneSequence, Vocab


@dataclass
class NodeScore:
    id: str
    score: float
    pruned: bool = False


@dataclass
class FrameHeat:
    frame_id: int
    nodes: list[NodeScore]


@dataclass
class Heatmap:
    frames: list[FrameHeat]
    temporal: list[float]
    predicted: str
    truth: str | None = None

    @property
    def spatial(self) -> list[dict[str, float]]:
        return [{n.id: n.score for n in f.nodes} for f in self.frames]


def minmax_normalize(scores: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1]; constant (incl. single-node) inputs map to 1."""
    scores = np.asarray(scores, dtype=float)
    lo, hi = scores.min(), scores.max()
    if hi - lo <= 0:
        return np.ones_like(scores)
    return (scores - lo) / (hi - lo)


def _action_name(a) -> str | None:
    if a is None:
        return None
    return a if isinstance(a, str) else ACTIONS[int(a)]


def extract_heatmap(enc: EncoderOutput, seq: SceneSequence, prediction, truth=None) -> Heatmap:
    """Per-frame min-max normalised pooling gates; nodes pruned by pooling score 0."""
    if len(enc.node_scores) != seq.n:
        raise ValueError(f"encoder output has {len(enc.node_scores)} frames, sequence has {seq.n}")
    frames = []
    for t, (g, raw) in enumerate(zip(seq.graphs, enc.node_scores)):
        if len(raw) != g.num_nodes:
            raise ValueError(f"frame {t}: {len(raw)} scores for {g.num_nodes} nodes")
        norm = minmax_normalize(raw)
        kept = set(enc.kept_indices[t])
        nodes = [
            NodeScore(node.id, float(norm[i]) if i in kept else 0.0, i not in kept)
            for i, node in enumerate(g.nodes)
        ]
        frames.append(FrameHeat(seq.frame_ids[t], nodes))
    if truth is None and seq.label is not None:
        truth = seq.label
    return Heatmap(frames, [float(a) for a in enc.temporal_alpha], _action_name(prediction), _action_name(truth))


def _fill(score: float) -> str:
    level = int(round(255 * (1.0 - min(max(score, 0.0), 1.0))))
    return f"#ff{level:02x}{level:02x}"


def _quote(text: str) -> str:
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(h: Heatmap, seq: SceneSequence, vocab: Vocab | None = None, comment: str | None = None) -> list[str]:
    """One undirected DOT graph per frame; fill goes white to red with the node score."""
    vocab = vocab or Vocab()
    out = []
    for t, (g, frame) in enumerate(zip(seq.graphs, h.frames)):
        scores = {n.id: n for n in frame.nodes}
        lines = []
        if comment:
            lines.append(f"// {comment}")
        lines.append(f"graph {_quote(f'{seq.id}_f{t}')} {{")
        lines.append(f"  label={_quote(f'frame {frame.frame_id} | temporal weight {h.temporal[t]:.3f}')};")
        lines.append("  labelloc=t;")
        lines.append("  node [style=filled, fontname=Helvetica];")
        for node in g.nodes:
            cls = vocab.agent_classes[node.class_idx]
            name = cls if node.state_idx is None else f"{cls}/{vocab.agent_states[node.state_idx]}"
            ns = scores[node.id]
            attrs = f"label={_quote(f'{name} ({ns.score:.2f})')}, fillcolor={_quote(_fill(ns.score))}"
            if ns.pruned:
                attrs += ", style=\"filled,dashed\""
            lines.append(f"  {_quote(node.id)} [{attrs}];")
        for s, d, r in g.edges:
            lines.append(f"  {_quote(s)} -- {_quote(d)} [label={_quote(r.label)}];")
        lines.append("}")
        out.append("\n".join(lines) + "\n")
    return out


def heatmap_to_json(h: Heatmap) -> dict:
    return {
        "prediction": h.predicted,
        "truth": h.truth,
        "temporal": list(h.temporal),
        "frames": [
            {"frame_id": f.frame_id, "nodes": [{"id": n.id, "score": n.score, "pruned": n.pruned} for n in f.nodes]}
            for f in h.frames
        ],
    }


def export_json(h: Heatmap) -> str:
    return json.dumps(heatmap_to_json(h), indent=2)


def heatmap_from_json(text: str) -> Heatmap:
    obj = json.loads(text)
    frames = [
        FrameHeat(int(f["frame_id"]), [NodeScore(n["id"], float(n["score"]), bool(n.get("pruned", False))) for n in f["nodes"]])
        for f in obj["frames"]
    ]
    return Heatmap(frames, [float(a) for a in obj["temporal"]], obj["prediction"], obj.get("truth"))


def pca_project(embeddings: np.ndarray) -> np.ndarray:
    """Project rows onto the top two principal directions of the centred data.

    Each direction's sign is fixed so its first non-zero loading is positive.
    """
    x = np.asarray(embeddings, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("pca_project needs at least two rows")
    centred = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centred, full_matrices=True)
    comps = vt[:2].copy()
    if comps.shape[0] < 2:
        comps = np.vstack([comps, np.zeros((2 - comps.shape[0], x.shape[1]))])
    for k in range(comps.shape[0]):
        nz = np.flatnonzero(np.abs(comps[k]) > 1e-12)
        if nz.size and comps[k, nz[0]] < 0:
            comps[k] = -comps[k]
    return centred @ comps.T


def write_projection_csv(rows: Sequence[dict], coords: np.ndarray, path, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["id", "video_id", "label", "x", "y"])
        for r, (x, y) in zip(rows, coords):
            w.writerow([r["id"], r["video_id"], r["label"] or "", repr(float(x)), repr(float(y))])
