"""Pretraining loss curves for several batch sizes.

Prints the epoch-10 / epoch-1 loss ratio per (batch size, seed), together with
the loss a perfectly aligned encoder would reach for that batch size.

    python scripts/contrastive_curve.py --batch 64 256 --seeds 0 1 2 --epochs 10
"""

import argparse
import math

import numpy as np

from sgcl.benchmark import make_splits
from sgcl.config import load_config
from sgcl.encoder import init_encoder
from sgcl.graph_core import Vocab
from sgcl.pretrain import AugmentConfig, PretrainConfig, init_projection, pretrain_loop

parser = argparse.ArgumentParser()
parser.add_argument("--batch", type=int, nargs="+", default=[64, 256])
parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
parser.add_argument("--epochs", type=int, default=10)
parser.add_argument("--lr", type=float, default=1e-3)
args = parser.parse_args()

vocab = Vocab()
cfg = load_config(None)
train, _ = make_splits(cfg, vocab)
for b in args.batch:
    tau = cfg.pretrain.tau
    # positive at cosine 1, the other 2B-2 views orthogonal
    floor = -1 / tau + math.log(math.exp(1 / tau) + 2 * b - 2)
    chance = math.log(2 * b - 1)
    print(f"batch {b}: chance {chance:.3f}, aligned floor {floor:.3f}, best possible ratio {floor / chance:.3f}")
    for seed in args.seeds:
        rng = np.random.default_rng([seed, 5])
        enc = init_encoder(cfg.encoder, vocab.d_node, rng)
        pcfg = PretrainConfig(batch_size=b, epochs=args.epochs, lr=args.lr, seed=seed)
        head = init_projection(cfg.encoder.out_dim, pcfg, rng)
        hist = pretrain_loop(train, enc, head, cfg.encoder, AugmentConfig(seed=seed), pcfg, vocab).history
        print(f"  seed {seed}: {' '.join(f'{h:.3f}' for h in hist)}  ratio {hist[-1] / hist[0]:.3f}")
