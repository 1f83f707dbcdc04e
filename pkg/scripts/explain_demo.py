"""Train a small PF model and write heatmaps for a few correctly classified test sequences.

    python scripts/explain_demo.py --out runs/explain_demo --count 3
    dot -Tpng runs/explain_demo/<seq>_f0.dot -o f0.png   # optional, needs graphviz
"""

import argparse
import json
from pathlib import Path

import numpy as np

from sgcl import downstream, pretrain
from sgcl.benchmark import make_splits
from sgcl.config import load_config
from sgcl.encoder import encode_sequences, init_encoder
from sgcl.explain import export_dot, extract_heatmap, heatmap_to_json
from sgcl.graph_core import Vocab

parser = argparse.ArgumentParser()
parser.add_argument("--out", default="runs/explain_demo")
parser.add_argument("--count", type=int, default=3)
parser.add_argument("--set", action="append", default=[])
args = parser.parse_args()

defaults = ["synth.count_train=700", "synth.count_test=100", "pretrain.epochs=5", "pretrain.batch_size=64",
            "train.epochs=5", "train.lr=0.005"]
cfg = load_config(None, [*defaults, *args.set])
vocab = Vocab()
train, test = make_splits(cfg, vocab)
rng = np.random.default_rng([cfg.seed, 5])
encoder = init_encoder(cfg.encoder, vocab.d_node, rng)
head = pretrain.init_projection(cfg.encoder.out_dim, cfg.pretrain, rng)
pretrain.pretrain_loop(train, encoder, head, cfg.encoder, cfg.augment, cfg.pretrain, vocab)
model = downstream.train(cfg.regime("pf"), train, cfg.encoder, vocab, encoder, cfg.augment).model

out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)
written = 0
for seq, enc in zip(test, encode_sequences(test, model.encoder, model.enc_cfg, vocab)):
    pred = int(np.argmax(downstream.decode_action(enc, model.decoder)))
    if pred != seq.label:
        continue
    heat = extract_heatmap(enc, seq, pred)
    for k, text in enumerate(export_dot(heat, seq, vocab, comment=f"config_hash={cfg.digest()}")):
        (out / f"{seq.id}_f{k}.dot").write_text(text)
    (out / f"{seq.id}_heatmap.json").write_text(json.dumps(heatmap_to_json(heat), indent=2) + "\n")
    print(f"{seq.id}: {heat.predicted}; temporal {np.round(heat.temporal, 3).tolist()}")
    written += 1
    if written == args.count:
        break
print(f"heatmaps in {out}")
