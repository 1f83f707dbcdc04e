"""Scene-graph data model, proximity mapping, feature encoding and dataset I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ACTIONS = ("Stop", "Mov", "TurRht", "TurLft", "MovRht", "MovLft", "Ovtak")
NUM_ACTIONS = len(ACTIONS)
EGO = "Ego"

DEFAULT_AGENT_CLASSES = ("Ego", "Car", "LarVeh", "Bus", "Cyc", "Ped", "TL", "OthVeh")
DEFAULT_AGENT_STATES = ("MovTow", "MovAway", "Stopped", "HazLit", "Red", "Amber", "Green")

# Upper RID bound (inclusive) of the two lower proximity classes.
VISIBLE_MAX_RID = 0.15
NEAR_MAX_RID = 0.30


class GraphError(ValueError):
    """A graph or sequence violates a structural invariant."""


class DatasetParseError(ValueError):
    pass


class ProximityRel(IntEnum):
    VISIBLE = 0
    NEAR = 1
    NEAR_COLLISION = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "ProximityRel":
        try:
            return cls[label.upper()]
        except KeyError:
            raise GraphError(f"unknown proximity relation {label!r}") from None


NUM_RELATIONS = len(ProximityRel)


def rid_to_proximity(rid: float) -> ProximityRel:
    if not (0.0 <= rid <= 1.0) or math.isnan(rid):
        raise ValueError(f"relative inverse depth must lie in [0, 1], got {rid}")
    if rid <= VISIBLE_MAX_RID:
        return ProximityRel.VISIBLE
    if rid <= NEAR_MAX_RID:
        return ProximityRel.NEAR
    return ProximityRel.NEAR_COLLISION


@dataclass(frozen=True)
class Vocab:
    agent_classes: tuple[str, ...] = DEFAULT_AGENT_CLASSES
    agent_states: tuple[str, ...] = DEFAULT_AGENT_STATES
    actions: tuple[str, ...] = ACTIONS

    def __post_init__(self):
        object.__setattr__(self, "agent_classes", tuple(self.agent_classes))
        object.__setattr__(self, "agent_states", tuple(self.agent_states))
        object.__setattr__(self, "actions", tuple(self.actions))
        for kind, labels in (("agent class", self.agent_classes), ("agent state", self.agent_states)):
            if len(set(labels)) != len(labels):
                raise ValueError(f"duplicate {kind} labels in vocabulary")
        if EGO not in self.agent_classes:
            raise ValueError('vocabulary must contain the "Ego" agent class')
        if self.actions != ACTIONS:
            raise ValueError(f"action labels must be exactly {ACTIONS}")

    @property
    def ego_idx(self) -> int:
        return self.agent_classes.index(EGO)

    @property
    def d_node(self) -> int:
        return len(self.agent_classes) + len(self.agent_states)

    def class_idx(self, label: str) -> int:
        try:
            return self.agent_classes.index(label)
        except ValueError:
            raise GraphError(f"unknown agent class {label!r}") from None

    def state_idx(self, label: str | None) -> int | None:
        if label is None:
            return None
        try:
            return self.agent_states.index(label)
        except ValueError:
            raise GraphError(f"unknown agent state {label!r}") from None

    def action_idx(self, label: str) -> int:
        try:
            return ACTIONS.index(label)
        except ValueError:
            raise GraphError(f"unknown action {label!r}") from None

    def to_json(self) -> dict:
        return {"agent_classes": list(self.agent_classes), "agent_states": list(self.agent_states)}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocab":
        return cls(tuple(obj["agent_classes"]), tuple(obj.get("agent_states", ())))


def load_vocab(path) -> Vocab:
    return Vocab.from_json(json.loads(Path(path).read_text()))


def save_vocab(vocab: Vocab, path) -> None:
    Path(path).write_text(json.dumps(vocab.to_json(), indent=2) + "\n")


@dataclass(frozen=True)
class SceneNode:
    id: str
    class_idx: int
    state_idx: int | None = None
    rid: float | None = None


Edge = tuple[str, str, ProximityRel]


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple[SceneNode, ...]
    edges: tuple[Edge, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple((s, d, ProximityRel(r)) for s, d, r in self.edges))

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def node_index(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    def relations(self, vocab: Vocab) -> dict[str, ProximityRel]:
        """Map each non-ego node id to its relation with the ego node."""
        ego_id = self.nodes[self.ego_position(vocab)].id
        return {(s if d == ego_id else d): r for s, d, r in self.edges}

    def validate(self, vocab: Vocab) -> None:
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate node ids")
        for n in self.nodes:
            if not 0 <= n.class_idx < len(vocab.agent_classes):
                raise GraphError(f"node {n.id!r}: class index {n.class_idx} out of range")
            if n.state_idx is not None and not 0 <= n.state_idx < len(vocab.agent_states):
                raise GraphError(f"node {n.id!r}: state index {n.state_idx} out of range")
            if n.rid is not None and not 0.0 <= n.rid <= 1.0:
                raise GraphError(f"node {n.id!r}: rid {n.rid} outside [0, 1]")
        egos = [n.id for n in self.nodes if n.class_idx == vocab.ego_idx]
        if len(egos) != 1:
            raise GraphError(f"expected exactly one ego node, found {len(egos)}")
        ego = egos[0]
        seen: set[frozenset] = set()
        linked: dict[str, int] = {}
        for s, d, _ in self.edges:
            if s not in ids or d not in ids:
                raise GraphError(f"edge ({s}, {d}) references a missing node")
            key = frozenset((s, d))
            if key in seen:
                raise GraphError(f"duplicate edge between {s!r} and {d!r}")
            seen.add(key)
            if ego not in (s, d) or s == d:
                raise GraphError(f"edge ({s}, {d}) does not connect an agent to the ego node")
            other = s if d == ego else d
            linked[other] = linked.get(other, 0) + 1
        for nid in ids:
            if nid != ego and linked.get(nid) != 1:
                raise GraphError(f"node {nid!r} must have exactly one edge to the ego node")

    def ego_position(self, vocab: Vocab) -> int:
        return next(i for i, n in enumerate(self.nodes) if n.class_idx == vocab.ego_idx)


@dataclass(frozen=True)
class SceneSequence:
    graphs: tuple[SceneGraph, ...]
    frame_ids: tuple[int, ...]
    video_id: str = ""
    label: int | None = None
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "frame_ids", tuple(int(f) for f in self.frame_ids))

    @property
    def n(self) -> int:
        return len(self.graphs)

    def validate(self, vocab: Vocab) -> None:
        if not self.graphs:
            raise GraphError(f"sequence {self.id!r}: no frames")
        if len(self.frame_ids) != len(self.graphs):
            raise GraphError(f"sequence {self.id!r}: {len(self.frame_ids)} frame ids for {len(self.graphs)} graphs")
        if any(b <= a for a, b in zip(self.frame_ids, self.frame_ids[1:])):
            raise GraphError(f"sequence {self.id!r}: frame ids not strictly increasing")
        if self.label is not None and not 0 <= self.label < NUM_ACTIONS:
            raise GraphError(f"sequence {self.id!r}: label {self.label} out of range")
        for g in self.graphs:
            try:
                g.validate(vocab)
            except GraphError as err:
                raise GraphError(f"sequence {self.id!r}: {err}") from None


def build_graph(nodes: Sequence[SceneNode], vocab: Vocab) -> SceneGraph:
    """Star graph linking each agent to the ego node by its RID proximity class."""
    egos = [n for n in nodes if n.class_idx == vocab.ego_idx]
    if len(egos) != 1:
        raise GraphError(f"expected exactly one ego node, found {len(egos)}")
    ego = egos[0]
    edges = []
    for n in nodes:
        if n is ego:
            continue
        if n.rid is None:
            raise GraphError(f"node {n.id!r} has no relative inverse depth")
        edges.append((n.id, ego.id, rid_to_proximity(n.rid)))
    g = SceneGraph(tuple(nodes), tuple(edges))
    g.validate(vocab)
    return g


def encode_features(g: SceneGraph, vocab: Vocab) -> np.ndarray:
    n_cls = len(vocab.agent_classes)
    x = np.zeros((g.num_nodes, vocab.d_node))
    for row, node in enumerate(g.nodes):
        x[row, node.class_idx] = 1.0
        if node.state_idx is not None:
            x[row, n_cls + node.state_idx] = 1.0
    return x


@dataclass(frozen=True)
class LabeledFrame:
    frame_id: int
    graph: SceneGraph
    action: int


def window_video(
    frames: Sequence[LabeledFrame],
    n: int = 5,
    stride: int = 5,
    video_id: str = "",
    step: int = 1,
) -> list[SceneSequence]:
    """Cut a video into n-frame windows labelled with the following frame's action.

    ``stride`` downsamples (keep every stride-th frame) before windowing;
    ``step`` is the offset between consecutive window starts.
    """
    if n < 1 or stride < 1 or step < 1:
        raise ValueError("n, stride and step must be >= 1")
    kept = list(frames)[::stride]
    out = []
    for start in range(0, len(kept) - n, step):
        window = kept[start : start + n]
        out.append(
            SceneSequence(
                graphs=tuple(f.graph for f in window),
                frame_ids=tuple(f.frame_id for f in window),
                video_id=video_id,
                label=kept[start + n].action,
                id=f"{video_id}_{window[0].frame_id}",
            )
        )
    return out


def split_dataset(seqs: Sequence, ratio: float = 0.8, seed: int = 0) -> tuple[list, list]:
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    order = np.random.default_rng(seed).permutation(len(seqs))
    n_train = int(math.floor(ratio * len(seqs) + 0.5))
    train = [seqs[i] for i in order[:n_train]]
    val = [seqs[i] for i in order[n_train:]]
    return train, val


# JSONL serialisation

def sequence_to_json(seq: SceneSequence, vocab: Vocab) -> dict:
    frames = []
    for fid, g in zip(seq.frame_ids, seq.graphs):
        frames.append(
            {
                "frame_id": fid,
                "nodes": [
                    {
                        "id": n.id,
                        "cls": vocab.agent_classes[n.class_idx],
                        "state": None if n.state_idx is None else vocab.agent_states[n.state_idx],
                        "rid": n.rid,
                    }
                    for n in g.nodes
                ],
                "edges": [{"src": s, "dst": d, "rel": r.label} for s, d, r in g.edges],
            }
        )
    return {
        "id": seq.id,
        "video_id": seq.video_id,
        "label": None if seq.label is None else ACTIONS[seq.label],
        "frames": frames,
    }


def sequence_from_json(obj: dict, vocab: Vocab) -> SceneSequence:
    graphs = []
    frame_ids = []
    for frame in obj["frames"]:
        nodes = tuple(
            SceneNode(
                id=str(n["id"]),
                class_idx=vocab.class_idx(n["cls"]),
                state_idx=vocab.state_idx(n.get("state")),
                rid=None if n.get("rid") is None else float(n["rid"]),
            )
            for n in frame["nodes"]
        )
        if "edges" in frame:
            edges = tuple((str(e["src"]), str(e["dst"]), ProximityRel.from_label(e["rel"])) for e in frame["edges"])
            graphs.append(SceneGraph(nodes, edges))
        else:
            graphs.append(build_graph(nodes, vocab))
        frame_ids.append(int(frame["frame_id"]))
    label = obj.get("label")
    return SceneSequence(
        graphs=tuple(graphs),
        frame_ids=tuple(frame_ids),
        video_id=str(obj.get("video_id", "")),
        label=None if label is None else vocab.action_idx(label),
        id=str(obj["id"]),
    )


def save_dataset(seqs: Iterable[SceneSequence], path, vocab: Vocab | None = None) -> None:
    vocab = vocab or Vocab()
    with open(path, "w") as fh:
        for seq in seqs:
            fh.write(json.dumps(sequence_to_json(seq, vocab)) + "\n")


def load_dataset(path, vocab: Vocab | None = None) -> list[SceneSequence]:
    """Read and validate a JSONL dataset.

    Raises DatasetParseError (with line number) for malformed records and
    GraphError (with sequence id) for invariant violations.
    """
    vocab = vocab or Vocab()
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                seq = sequence_from_json(obj, vocab)
            except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as err:
                raise DatasetParseError(f"{path}:{lineno}: malformed record ({err})") from None
            except GraphError as err:
                raise GraphError(f"{path}:{lineno}: sequence {obj.get('id')!r}: {err}") from None
            seq.validate(vocab)
            out.append(seq)
    return out
