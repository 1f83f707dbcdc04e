"""Weighted F1 of PF fine-tuning as a function of learning rate.

Pretrains once with the configured settings, then fine-tunes at each rate.

    python scripts/finetune_lr_sweep.py --lr 0.02 0.005 0.001 --set pretrain.epochs=20
"""

import argparse

import numpy as np

from sgcl import downstream, pretrain
from sgcl.benchmark import make_splits
from sgcl.config import load_config
from sgcl.encoder import init_encoder
from sgcl.graph_core import Vocab

parser = argparse.ArgumentParser()
parser.add_argument("--lr", type=float, nargs="+", default=[0.02, 0.005, 0.001])
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--set", action="append", default=[])
args = parser.parse_args()

vocab = Vocab()
cfg = load_config(None, [*args.set, f"seed={args.seed}"])
train, test = make_splits(cfg, vocab)
rng = np.random.default_rng([cfg.seed, 5])
encoder = init_encoder(cfg.encoder, vocab.d_node, rng)
head = pretrain.init_projection(cfg.encoder.out_dim, cfg.pretrain, rng)
pretrain.pretrain_loop(train, encoder, head, cfg.encoder, cfg.augment, cfg.pretrain, vocab)
for lr in args.lr:
    regime = cfg.regime("pf")
    regime.lr = lr
    result = downstream.train(regime, train, cfg.encoder, vocab, encoder, cfg.augment)
    f1 = downstream.evaluate(result.model, test).weighted_f1
    print(f"lr {lr:g}: weighted F1 {f1:.4f}, final train loss {result.history[-1]:.4f}")
