import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgcl.graph_core import (
    ACTIONS,
    DatasetParseError,
    GraphError,
    LabeledFrame,
    ProximityRel,
    SceneGraph,
    SceneNode,
    SceneSequence,
    Vocab,
    build_graph,
    encode_features,
    load_dataset,
    load_vocab,
    rid_to_proximity,
    save_dataset,
    save_vocab,
    split_dataset,
    window_video,
)

V = Vocab()
VIS, NEAR, NC = ProximityRel.VISIBLE, ProximityRel.NEAR, ProximityRel.NEAR_COLLISION


def ego(nid="ego"):
    return SceneNode(nid, V.ego_idx)


def agent(nid, rid, cls="Car", state=None):
    return SceneNode(nid, V.class_idx(cls), V.state_idx(state), rid)


# proximity

@pytest.mark.parametrize(
    "rid, rel",
    [(0.0, VIS), (0.10, VIS), (0.15, VIS), (0.16, NEAR), (0.20, NEAR), (0.30, NEAR),
     (0.31, NC), (0.50, NC), (1.0, NC), (0.150000001, NEAR), (0.300000001, NC)],
)
def test_proximity_table(rid, rel):
    assert rid_to_proximity(rid) is rel


@pytest.mark.parametrize("rid", [-1e-9, 1.0000001, float("nan"), 2.0])
def test_proximity_domain(rid):
    with pytest.raises(ValueError):
        rid_to_proximity(rid)


@given(st.floats(0, 1), st.floats(0, 1))
def test_proximity_monotone(a, b):
    lo, hi = sorted((a, b))
    assert rid_to_proximity(lo) <= rid_to_proximity(hi)


def test_relation_order_and_labels():
    assert list(ProximityRel) == [VIS, NEAR, NC]
    assert VIS < NEAR < NC
    for rel in ProximityRel:
        assert ProximityRel.from_label(rel.label) is rel
    assert [r.label for r in ProximityRel] == ["visible", "near", "near_collision"]


# vocab

def test_vocab_defaults():
    assert V.agent_classes[0] == "Ego"
    assert V.actions == ACTIONS and len(ACTIONS) == 7
    assert V.d_node == len(V.agent_classes) + len(V.agent_states) == 15


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(agent_classes=("Car", "Bus")),
        dict(agent_classes=("Ego", "Car", "Car")),
        dict(agent_states=("Red", "Red")),
        dict(actions=("Stop", "Mov")),
    ],
)
def test_vocab_rejects(kwargs):
    with pytest.raises(ValueError):
        Vocab(**kwargs)


def test_vocab_file_round_trip(tmp_path):
    v = Vocab(agent_classes=("Car", "Ego"), agent_states=())
    save_vocab(v, tmp_path / "v.json")
    assert load_vocab(tmp_path / "v.json") == v
    assert v.ego_idx == 1 and v.d_node == 2


# build_graph

def test_build_single_agent():
    g = build_graph([ego(), agent("a", 0.05)], V)
    assert g.edges == (("a", "ego", VIS),)


def test_build_empty_scene():
    g = build_graph([ego()], V)
    assert g.num_nodes == 1 and g.edges == ()


def test_build_two_agents():
    g = build_graph([ego(), agent("a", 0.2), agent("b", 0.9)], V)
    assert {r for _, _, r in g.edges} == {NEAR, NC}
    assert g.relations(V) == {"a": NEAR, "b": NC}


def test_build_ego_rid_ignored():
    g = build_graph([SceneNode("ego", V.ego_idx, rid=0.99), agent("a", 0.1)], V)
    assert g.relations(V) == {"a": VIS}


@pytest.mark.parametrize("nodes", [[agent("a", 0.1)], [ego("e1"), ego("e2"), agent("a", 0.1)]])
def test_build_ego_count(nodes):
    with pytest.raises(GraphError, match="exactly one ego"):
        build_graph(nodes, V)


def test_build_missing_rid():
    with pytest.raises(GraphError, match="relative inverse depth"):
        build_graph([ego(), agent("a", None)], V)


node_lists = st.lists(
    st.tuples(st.integers(1, len(V.agent_classes) - 1), st.one_of(st.none(), st.integers(0, 6)), st.floats(0, 1)),
    max_size=15,
)


@given(node_lists, st.integers(0, 15))
def test_build_always_star(specs, ego_pos):
    nodes = [SceneNode(f"n{i}", c, s, r) for i, (c, s, r) in enumerate(specs)]
    nodes.insert(min(ego_pos, len(nodes)), ego())
    g = build_graph(nodes, V)
    g.validate(V)
    assert len(g.edges) == len(specs)
    assert all("ego" in (s, d) for s, d, _ in g.edges)


# validation

def test_validate_rejects_agent_edge():
    g = SceneGraph((ego(), agent("a", 0.1), agent("b", 0.1)), (("a", "ego", VIS), ("a", "b", VIS)))
    with pytest.raises(GraphError):
        g.validate(V)


def test_validate_rejects_missing_edge_and_dupes():
    with pytest.raises(GraphError, match="exactly one edge"):
        SceneGraph((ego(), agent("a", 0.1)), ()).validate(V)
    with pytest.raises(GraphError, match="duplicate edge"):
        SceneGraph((ego(), agent("a", 0.1)), (("a", "ego", VIS), ("ego", "a", NEAR))).validate(V)
    with pytest.raises(GraphError, match="missing node"):
        SceneGraph((ego(),), (("x", "ego", VIS),)).validate(V)
    with pytest.raises(GraphError, match="duplicate node"):
        SceneGraph((ego(), ego()), ()).validate(V)


def test_validate_ranges():
    with pytest.raises(GraphError, match="class index"):
        SceneGraph((ego(), SceneNode("a", 99, None, 0.1)), (("a", "ego", VIS),)).validate(V)
    with pytest.raises(GraphError, match="rid"):
        SceneGraph((ego(), SceneNode("a", 1, None, 1.5)), (("a", "ego", VIS),)).validate(V)


def test_sequence_validate():
    g = build_graph([ego()], V)
    SceneSequence((g, g), (0, 5), label=0).validate(V)
    with pytest.raises(GraphError, match="strictly increasing"):
        SceneSequence((g, g), (5, 5), id="x").validate(V)
    with pytest.raises(GraphError, match="label"):
        SceneSequence((g,), (0,), label=7).validate(V)
    with pytest.raises(GraphError, match="no frames"):
        SceneSequence((), ()).validate(V)


# features

def test_features_small_vocab():
    v = Vocab(agent_classes=("Ego", "A", "B"), agent_states=("s0", "s1"))
    g = SceneGraph((SceneNode("e", 0), SceneNode("x", 2, 1, 0.5)), (("x", "e", NC),))
    x = encode_features(g, v)
    np.testing.assert_array_equal(x, [[1, 0, 0, 0, 0], [0, 0, 1, 0, 1]])


@given(node_lists)
def test_features_one_hot(specs):
    nodes = [ego()] + [SceneNode(f"n{i}", c, s, r) for i, (c, s, r) in enumerate(specs)]
    x = encode_features(build_graph(nodes, V), V)
    n_cls = len(V.agent_classes)
    assert x.shape == (len(nodes), V.d_node)
    assert np.all(x[:, :n_cls].sum(1) == 1)
    assert np.all(x[:, n_cls:].sum(1) <= 1)
    for row, node in zip(x, nodes):
        assert row[node.class_idx] == 1


# windowing

def frames(count, first_action=0):
    g = build_graph([ego()], V)
    return [LabeledFrame(i, g, (first_action + i) % 7) for i in range(count)]


def test_window_six_frames():
    out = window_video(frames(6), n=5, stride=1)
    assert len(out) == 1
    assert out[0].label == 5 and out[0].frame_ids == (0, 1, 2, 3, 4)


def test_window_five_frames():
    assert window_video(frames(5), n=5, stride=1) == []


def test_window_downsampled_clip():
    out = window_video(frames(60), n=5, stride=5, video_id="v")
    assert len(out) == 7
    assert out[0].frame_ids == (0, 5, 10, 15, 20)
    assert out[0].label == 25 % 7
    assert out[-1].label == 55 % 7
    assert all(s.video_id == "v" for s in out)


@given(st.integers(0, 60), st.integers(1, 6), st.integers(1, 4))
def test_window_labels_exist(count, n, stride):
    fr = frames(count)
    kept = fr[::stride]
    out = window_video(fr, n=n, stride=stride)
    assert len(out) == max(0, len(kept) - n)
    pos = {f.frame_id: i for i, f in enumerate(kept)}
    for seq in out:
        nxt = pos[seq.frame_ids[-1]] + 1
        assert nxt < len(kept) and seq.label == kept[nxt].action


@given(st.integers(0, 40), st.integers(1, 6))
def test_window_step_n_partitions(count, n):
    fr = frames(count)
    out = window_video(fr, n=n, stride=1, step=n)
    covered = [fid for s in out for fid in s.frame_ids]
    assert covered == list(range(len(covered)))
    assert len(covered) >= count - 2 * n


def test_window_bad_args():
    with pytest.raises(ValueError):
        window_video(frames(3), n=0)


# splits

def test_split_sizes():
    tr, va = split_dataset(list(range(10)), 0.8, 0)
    assert (len(tr), len(va)) == (8, 2)
    tr, va = split_dataset(list(range(7)), 0.5, 0)
    assert (len(tr), len(va)) == (4, 3)


@given(st.integers(0, 200), st.floats(0.01, 0.99), st.integers(0, 2**32 - 1))
def test_split_properties(n, ratio, seed):
    items = list(range(n))
    tr, va = split_dataset(items, ratio, seed)
    assert len(tr) == math.floor(ratio * n + 0.5)
    assert sorted(tr + va) == items
    assert (tr, va) == split_dataset(items, ratio, seed)


@pytest.mark.parametrize("ratio", [0.0, 1.0, -0.1])
def test_split_bad_ratio(ratio):
    with pytest.raises(ValueError):
        split_dataset([1, 2], ratio)


# JSONL

def test_empty_file(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text("")
    assert load_dataset(p) == []


@settings(max_examples=30, deadline=None)
@given(st.lists(node_lists, min_size=1, max_size=4), st.one_of(st.none(), st.integers(0, 6)))
def test_round_trip(tmp_path_factory, graphs, label):
    gs = []
    for specs in graphs:
        nodes = [ego()] + [SceneNode(f"n{i}", c, s, r) for i, (c, s, r) in enumerate(specs)]
        gs.append(build_graph(nodes, V))
    seq = SceneSequence(tuple(gs), tuple(range(0, 3 * len(gs), 3)), "vid", label, "q1")
    p = tmp_path_factory.mktemp("rt") / "d.jsonl"
    save_dataset([seq, seq], p)
    first = p.read_text()
    back = load_dataset(p)
    assert back == [seq, seq]
    save_dataset(back, p)
    assert p.read_text() == first


def _record(nodes, edges=None):
    frame = {"frame_id": 0, "nodes": nodes}
    if edges is not None:
        frame["edges"] = edges
    return {"id": "r1", "video_id": "v", "label": "Mov", "frames": [frame]}


def test_edges_derived_from_rid(tmp_path):
    rec = _record([{"id": "e", "cls": "Ego", "state": None, "rid": None},
                   {"id": "a", "cls": "Car", "state": "MovTow", "rid": 0.2}])
    p = tmp_path / "d.jsonl"
    p.write_text(json.dumps(rec) + "\n")
    (seq,) = load_dataset(p)
    assert seq.graphs[0].edges == (("a", "e", NEAR),)
    assert seq.label == ACTIONS.index("Mov")


def test_two_egos_rejected(tmp_path):
    rec = _record([{"id": "e1", "cls": "Ego", "state": None, "rid": None},
                   {"id": "e2", "cls": "Ego", "state": None, "rid": None}], edges=[])
    p = tmp_path / "d.jsonl"
    p.write_text(json.dumps(rec) + "\n")
    with pytest.raises(GraphError, match="r1"):
        load_dataset(p)


def test_malformed_line_number(tmp_path):
    good = _record([{"id": "e", "cls": "Ego", "state": None, "rid": None}], edges=[])
    p = tmp_path / "d.jsonl"
    p.write_text(json.dumps(good) + "\n{not json\n")
    with pytest.raises(DatasetParseError, match=":2:"):
        load_dataset(p)
    p.write_text(json.dumps({"frames": []}) + "\n")
    with pytest.raises(DatasetParseError, match=":1:"):
        load_dataset(p)


def test_unknown_label_is_parse_error(tmp_path):
    rec = _record([{"id": "e", "cls": "Ego", "state": None, "rid": None}], edges=[])
    rec["frames"][0]["nodes"][0]["cls"] = "Spaceship"
    p = tmp_path / "d.jsonl"
    p.write_text(json.dumps(rec) + "\n")
    with pytest.raises(GraphError, match=r":1:.*Spaceship"):
        load_dataset(p)
