import json
import os
from pathlib import Path

import numpy as np
import pydot
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgcl.encoder import EncoderConfig, EncoderOutput, encode_sequence, encode_sequences, init_encoder
from sgcl.explain import (
    export_dot,
    export_json,
    extract_heatmap,
    heatmap_from_json,
    minmax_normalize,
    pca_project,
    write_projection_csv,
)
from sgcl.graph_core import SceneNode, SceneSequence, Vocab, build_graph
from sgcl.synthgen import GeneratorConfig, generate_dataset

V = Vocab()
GOLDEN = Path(__file__).parent / "golden" / "tiny.dot"


def fake_output(scores, kept, alpha):
    return EncoderOutput(
        context=np.zeros(3),
        final_hidden=np.zeros(2),
        final_cell=np.zeros(2),
        node_scores=[np.asarray(s, float) for s in scores],
        kept_indices=kept,
        temporal_alpha=np.asarray(alpha, float),
    )


def tiny_sequence():
    def frame(r1, r2):
        return build_graph(
            [SceneNode("ego", V.ego_idx), SceneNode("tl", V.class_idx("TL"), V.state_idx("Red"), r1),
             SceneNode("truck", V.class_idx("LarVeh"), V.state_idx("HazLit"), r2)],
            V,
        )

    return SceneSequence((frame(0.2, 0.1), frame(0.25, 0.5)), (0, 5), "vid", 0, "tiny")


def test_minmax_cases():
    np.testing.assert_allclose(minmax_normalize([-0.5, 0.0, 0.5]), [0, 0.5, 1])
    np.testing.assert_array_equal(minmax_normalize([0.3]), [1.0])
    np.testing.assert_array_equal(minmax_normalize([0.2, 0.2]), [1.0, 1.0])


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=12))
def test_minmax_idempotent_in_range(xs):
    once = minmax_normalize(xs)
    assert np.all((once >= 0) & (once <= 1))
    np.testing.assert_allclose(minmax_normalize(once), once, atol=1e-12)


def test_heatmap_hand_scores():
    seq = tiny_sequence()
    enc = fake_output([[-0.5, 0.0, 0.5], [0.1, 0.9, 0.3]], [[2, 1], [1, 2]], [0.25, 0.75])
    h = extract_heatmap(enc, seq, 3)
    assert h.spatial[0] == {"ego": 0.0, "tl": 0.5, "truck": 1.0}
    assert [n.pruned for n in h.frames[0].nodes] == [True, False, False]
    assert h.spatial[1]["ego"] == 0.0 and h.spatial[1]["tl"] == 1.0
    assert h.temporal == [0.25, 0.75]
    assert (h.predicted, h.truth) == ("TurLft", "Stop")


def test_heatmap_single_node_frame():
    g = build_graph([SceneNode("ego", V.ego_idx)], V)
    seq = SceneSequence((g,), (0,), label=None)
    h = extract_heatmap(fake_output([[0.2]], [[0]], [1.0]), seq, "Mov")
    assert h.spatial == [{"ego": 1.0}] and h.truth is None


def test_heatmap_mismatch():
    with pytest.raises(ValueError):
        extract_heatmap(fake_output([[0.1, 0.2]], [[0]], [1.0]), tiny_sequence(), 0)
    with pytest.raises(ValueError):
        extract_heatmap(fake_output([[0.1, 0.2, 0.3]], [[0]], [1.0]), tiny_sequence(), 0)


@pytest.fixture(scope="module")
def real():
    cfg = EncoderConfig()
    params = init_encoder(cfg, V.d_node, np.random.default_rng(0))
    seqs = generate_dataset(GeneratorConfig(seed=8, distractor_range=(0, 6)), 100)
    return seqs, encode_sequences(seqs, params, cfg, V)


def test_heatmap_from_encoder(real):
    seqs, outs = real
    for seq, enc in zip(seqs[:20], outs[:20]):
        h = extract_heatmap(enc, seq, 0)
        assert h.temporal == enc.temporal_alpha.tolist()
        assert sum(h.temporal) == pytest.approx(1.0, abs=1e-6)
        for frame, g in zip(h.spatial, seq.graphs):
            assert set(frame) == {n.id for n in g.nodes}
            assert all(0.0 <= s <= 1.0 for s in frame.values())


def test_dot_fuzz_parses(real):
    seqs, outs = real
    for seq, enc in zip(seqs, outs):
        h = extract_heatmap(enc, seq, 1)
        docs = export_dot(h, seq, V, comment="cfg 0123")
        assert len(docs) == seq.n
        for doc, g in zip(docs, seq.graphs):
            (parsed,) = pydot.graph_from_dot_data(doc)
            names = {n.get_name().strip('"') for n in parsed.get_nodes()} - {"node", "graph", "edge"}
            assert names == {n.id for n in g.nodes}
            assert len(parsed.get_edges()) == len(g.edges)


def test_dot_fill_endpoints():
    seq = tiny_sequence()
    enc = fake_output([[-1.0, 0.0, 1.0], [0.0, 1.0, 0.5]], [[0, 1, 2], [0, 1, 2]], [0.5, 0.5])
    doc = export_dot(extract_heatmap(enc, seq, 0), seq, V)[0]
    assert '"ego" [label="Ego (0.00)", fillcolor="#ffffff"]' in doc
    assert '"truck" [label="LarVeh/HazLit (1.00)", fillcolor="#ff0000"]' in doc
    assert '[label="near"]' in doc and "temporal weight 0.500" in doc


def test_dot_escapes_quotes():
    g = build_graph([SceneNode('e"go', V.ego_idx)], V)
    seq = SceneSequence((g,), (0,), id='we"ird')
    doc = export_dot(extract_heatmap(fake_output([[0.0]], [[0]], [1.0]), seq, 0), seq, V)[0]
    (parsed,) = pydot.graph_from_dot_data(doc)
    assert len(parsed.get_nodes()) >= 1


def golden_docs():
    cfg = EncoderConfig(hidden_dim=8, out_dim=4, seq_len=2)
    seq = tiny_sequence()
    params = init_encoder(cfg, V.d_node, np.random.default_rng(2024))
    enc = encode_sequence(seq, cfg, params, V)
    return "".join(export_dot(extract_heatmap(enc, seq, 0), seq, V))


def test_dot_golden():
    text = golden_docs()
    if os.environ.get("SGCL_REGEN_GOLDEN"):
        GOLDEN.write_text(text)
    assert text == GOLDEN.read_text()


def test_json_round_trip(real):
    seqs, outs = real
    for seq, enc in zip(seqs[:10], outs[:10]):
        h = extract_heatmap(enc, seq, 2)
        text = export_json(h)
        assert heatmap_from_json(text) == h
        obj = json.loads(text)
        assert set(obj) == {"prediction", "truth", "temporal", "frames"}
        assert len(obj["temporal"]) == seq.n


# projection

def test_pca_identical_rows():
    out = pca_project(np.tile(np.arange(20.0), (4, 1)))
    assert np.all(out == out[0])


def test_pca_variance_order(real):
    _, outs = real
    out = pca_project(np.stack([o.context for o in outs]))
    assert out.shape == (100, 2)
    assert out[:, 0].var() >= out[:, 1].var()


def test_pca_hand_triangle():
    # triangle in the plane z = 3; centred covariance is diag(8, 2/3, 0)
    x = np.array([[-2.0, 0.0, 3.0], [2.0, 0.0, 3.0], [0.0, 1.0, 3.0]])
    expected = np.array([[-2.0, -1 / 3], [2.0, -1 / 3], [0.0, 2 / 3]])
    np.testing.assert_allclose(pca_project(x), expected, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 30), st.integers(0, 2**31))
def test_pca_preserves_planar_distances(m, seed):
    rng = np.random.default_rng(seed)
    plane = rng.normal(size=(m, 2)) * [3.0, 1.0]
    basis, _ = np.linalg.qr(rng.normal(size=(20, 2)))
    x = plane @ basis.T + rng.normal(size=20)
    out = pca_project(x)
    d_in = np.linalg.norm(x[:, None] - x[None], axis=-1)
    d_out = np.linalg.norm(out[:, None] - out[None], axis=-1)
    np.testing.assert_allclose(d_out, d_in, atol=1e-9)


def test_pca_rejects_single_row():
    with pytest.raises(ValueError):
        pca_project(np.zeros((1, 20)))


def test_projection_csv(tmp_path):
    rows = [{"id": "a", "video_id": "v", "label": "Stop"}, {"id": "b", "video_id": "v", "label": None}]
    write_projection_csv(rows, np.array([[0.5, 1.0], [-0.5, -1.0]]), tmp_path / "p.csv", header="h")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines == ["# h", "id,video_id,label,x,y", "a,v,Stop,0.5,1.0", "b,v,,-0.5,-1.0"]
