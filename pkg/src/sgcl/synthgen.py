"""Synthetic scene-graph sequences whose next action is fixed by a marker motif.

Each action owns one marker agent (class, state) that follows a fixed
proximity track over the window. Distractor agents never share a marker's
(class, state) pair, so matching the marker triple recovers the label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from sgcl.graph_core import (
    ACTIONS,
    NUM_ACTIONS,
    ProximityRel,
    SceneNode,
    SceneSequence,
    Vocab,
    build_graph,
)

# RID sampling range for each proximity class, consistent with rid_to_proximity.
RID_RANGES = {
    ProximityRel.VISIBLE: (0.0, 0.15),
    ProximityRel.NEAR: (0.16, 0.30),
    ProximityRel.NEAR_COLLISION: (0.31, 1.0),
}
FRAME_SPACING = 5


@dataclass(frozen=True)
class MotifSpec:
    action: int
    marker_class: str
    marker_state: str | None
    proximity_track: tuple[ProximityRel, ...]

    def key(self) -> tuple:
        return (self.marker_class, self.marker_state, self.proximity_track)

    def resized(self, n: int) -> "MotifSpec":
        m = len(self.proximity_track)
        track = tuple(self.proximity_track[min(m - 1, (i * m) // n)] for i in range(n))
        return MotifSpec(self.action, self.marker_class, self.marker_state, track)


def _check_motifs(motifs: Sequence[MotifSpec]) -> None:
    n = {len(m.proximity_track) for m in motifs}
    if len(n) > 1:
        raise ValueError("motif proximity tracks differ in length")
    keys = [m.key() for m in motifs]
    if len(set(keys)) != len(keys):
        raise ValueError("two actions share a marker triple")
    actions = [m.action for m in motifs]
    if len(set(actions)) != len(actions):
        raise ValueError("duplicate action in motif table")


def motifs_from_json(obj: dict) -> list[MotifSpec]:
    motifs = [
        MotifSpec(
            action=ACTIONS.index(m["action"]),
            marker_class=m["marker_class"],
            marker_state=m.get("marker_state"),
            proximity_track=tuple(ProximityRel.from_label(r) for r in m["proximity_track"]),
        )
        for m in obj["motifs"]
    ]
    _check_motifs(motifs)
    return sorted(motifs, key=lambda m: m.action)


def motifs_to_json(motifs: Sequence[MotifSpec]) -> dict:
    return {
        "n": len(motifs[0].proximity_track) if motifs else 0,
        "motifs": [
            {
                "action": ACTIONS[m.action],
                "marker_class": m.marker_class,
                "marker_state": m.marker_state,
                "proximity_track": [r.label for r in m.proximity_track],
            }
            for m in motifs
        ],
    }


def default_motifs(n: int = 5) -> list[MotifSpec]:
    text = resources.files("sgcl").joinpath("data/motifs.json").read_text()
    motifs = motifs_from_json(json.loads(text))
    if len(motifs[0].proximity_track) != n:
        motifs = [m.resized(n) for m in motifs]
        _check_motifs(motifs)
    return motifs


def save_motifs(motifs: Sequence[MotifSpec], path) -> None:
    Path(path).write_text(json.dumps(motifs_to_json(motifs), indent=2) + "\n")


@dataclass
class GeneratorConfig:
    n: int = 5
    class_distribution: tuple[float, ...] = field(default_factory=lambda: (1.0 / NUM_ACTIONS,) * NUM_ACTIONS)
    distractor_range: tuple[int, int] = (1, 6)
    state_flip_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        dist = np.asarray(self.class_distribution, dtype=float)
        if dist.shape != (NUM_ACTIONS,) or np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
            raise ValueError("class_distribution must be 7 non-negative weights summing to 1")
        lo, hi = self.distractor_range
        if lo < 0 or lo > hi:
            raise ValueError(f"invalid distractor_range {self.distractor_range}")
        if not 0.0 <= self.state_flip_prob <= 1.0:
            raise ValueError("state_flip_prob must lie in [0, 1]")
        if self.n < 1:
            raise ValueError("n must be >= 1")


def _distractor_pairs(vocab: Vocab, motifs: Sequence[MotifSpec]) -> list[tuple[int, int | None]]:
    reserved = {(m.marker_class, m.marker_state) for m in motifs}
    pairs = []
    for ci, cls in enumerate(vocab.agent_classes):
        if ci == vocab.ego_idx:
            continue
        for state in (None, *vocab.agent_states):
            if (cls, state) not in reserved:
                pairs.append((ci, vocab.state_idx(state)))
    return pairs


def _sample_rid(rel: ProximityRel, rng: np.random.Generator) -> float:
    lo, hi = RID_RANGES[rel]
    return round(float(rng.uniform(lo, hi)), 3)


def _random_walk(n: int, rng: np.random.Generator) -> list[ProximityRel]:
    rel = int(rng.integers(3))
    track = []
    for _ in range(n):
        track.append(ProximityRel(rel))
        rel = int(np.clip(rel + rng.integers(-1, 2), 0, 2))
    return track


def generate_sequence(
    action: int,
    cfg: GeneratorConfig,
    rng: np.random.Generator,
    vocab: Vocab | None = None,
    motifs: Sequence[MotifSpec] | None = None,
    seq_id: str = "",
    video_id: str = "synth",
) -> SceneSequence:
    vocab = vocab or Vocab()
    motifs = motifs or default_motifs(cfg.n)
    motif = next((m for m in motifs if m.action == action), None)
    if motif is None:
        raise ValueError(f"no motif for action {action}")
    pairs = _distractor_pairs(vocab, motifs)

    k = int(rng.integers(cfg.distractor_range[0], cfg.distractor_range[1] + 1))
    # agent 0 is the marker; the rest are distractors
    agents = [(vocab.class_idx(motif.marker_class), vocab.state_idx(motif.marker_state), list(motif.proximity_track))]
    for _ in range(k):
        ci, si = pairs[int(rng.integers(len(pairs)))]
        agents.append((ci, si, _random_walk(cfg.n, rng)))
    order = rng.permutation(len(agents) + 1)  # position of ego + agents in the node list

    graphs = []
    for t in range(cfg.n):
        nodes: list[SceneNode | None] = [None] * (len(agents) + 1)
        nodes[order[0]] = SceneNode("ego", vocab.ego_idx)
        for j, (ci, si, track) in enumerate(agents):
            if j > 0 and rng.random() < cfg.state_flip_prob:
                same_class = [s for c, s in pairs if c == ci]
                si = same_class[int(rng.integers(len(same_class)))]
            nodes[order[j + 1]] = SceneNode(f"a{order[j + 1]}", ci, si, _sample_rid(track[t], rng))
        graphs.append(build_graph(nodes, vocab))
    return SceneSequence(
        graphs=tuple(graphs),
        frame_ids=tuple(range(0, cfg.n * FRAME_SPACING, FRAME_SPACING)),
        video_id=video_id,
        label=action,
        id=seq_id,
    )


def generate_dataset(
    cfg: GeneratorConfig,
    count: int,
    vocab: Vocab | None = None,
    motifs: Sequence[MotifSpec] | None = None,
    prefix: str = "s",
) -> list[SceneSequence]:
    """``count`` labelled sequences; sequence i draws from its own (seed, i) stream."""
    if count < 0:
        raise ValueError("count must be >= 0")
    vocab = vocab or Vocab()
    motifs = motifs or default_motifs(cfg.n)
    label_rng = np.random.default_rng([cfg.seed, 0])
    labels = label_rng.choice(NUM_ACTIONS, size=count, p=np.asarray(cfg.class_distribution))
    out = []
    for i, action in enumerate(labels):
        rng = np.random.default_rng([cfg.seed, 1, i])
        out.append(
            generate_sequence(
                int(action),
                cfg,
                rng,
                vocab,
                motifs,
                seq_id=f"{prefix}{cfg.seed}_{i:05d}",
                video_id=f"synth{i // 100:03d}",
            )
        )
    return out


def motif_oracle(seq: SceneSequence, vocab: Vocab | None = None, motifs: Sequence[MotifSpec] | None = None) -> int | None:
    """Recover the label by matching each agent's (class, state, track) to the motif table."""
    vocab = vocab or Vocab()
    motifs = motifs or default_motifs(seq.n)
    table = {m.key(): m.action for m in motifs}
    tracks: dict[str, list] = {}
    for g in seq.graphs:
        rels = g.relations(vocab)
        for node in g.nodes:
            if node.class_idx == vocab.ego_idx:
                continue
            state = None if node.state_idx is None else vocab.agent_states[node.state_idx]
            tracks.setdefault(node.id, []).append((vocab.agent_classes[node.class_idx], state, rels[node.id]))
    for obs in tracks.values():
        if len(obs) != seq.n or len({(c, s) for c, s, _ in obs}) != 1:
            continue
        key = (obs[0][0], obs[0][1], tuple(r for _, _, r in obs))
        if key in table:
            return table[key]
    return None
