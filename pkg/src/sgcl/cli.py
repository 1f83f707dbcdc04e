"""Command-line entry point: ``sgcl <command> [options]``.

Exit codes: 0 success, 2 usage, 3 configuration, 4 data validation,
5 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from sgcl import downstream, explain, pretrain
from sgcl.config import ConfigError, RunConfig, load_config
from sgcl.diff_core.checkpoint import CheckpointError, read_checkpoint, save_checkpoint
from sgcl.diff_core.params import ParameterStore
from sgcl.downstream import RegimeError, RegimeKind
from sgcl.encoder import EncoderConfig, encode_sequences, init_encoder
from sgcl.graph_core import (
    DatasetParseError,
    GraphError,
    Vocab,
    load_dataset,
    load_vocab,
    save_dataset,
    save_vocab,
    split_dataset,
)
from sgcl.synthgen import default_motifs, generate_dataset, save_motifs

log = logging.getLogger("sgcl")

EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4, 5


class UsageError(Exception):
    pass


def _stamp(cfg: RunConfig) -> str:
    return f"config_hash={cfg.digest()} seed={cfg.seed}"


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _vocab(args) -> Vocab:
    if args.vocab:
        return load_vocab(args.vocab)
    if getattr(args, "dataset", None):
        sidecar = Path(args.dataset).with_name("vocab.json")
        if sidecar.is_file():
            return load_vocab(sidecar)
    return Vocab()


def _require_file(path, what: str) -> Path:
    if path is None:
        raise ConfigError(f"--{what} is required")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _write_loss_csv(path: Path, history, cfg: RunConfig) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {_stamp(cfg)}\n")
        w = csv.writer(fh)
        w.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(history, start=1):
            w.writerow([epoch, repr(loss)])


def _meta(cfg: RunConfig, vocab: Vocab, enc_cfg: EncoderConfig, tag: str) -> dict:
    return {
        "tag": tag,
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "encoder_config": enc_cfg.__dict__,
        "vocab": vocab.to_json(),
    }


def _load_model(path: Path) -> tuple[downstream.Model, dict]:
    header, by_role = read_checkpoint(path)
    meta = header["meta"]
    if "decoder" not in by_role:
        raise CheckpointError(f"{path}: not a trained model (no decoder parameters)")
    enc_cfg = EncoderConfig(**meta["encoder_config"])
    vocab = Vocab.from_json(meta["vocab"])
    model = downstream.new_model(enc_cfg, vocab)
    model.encoder.load_state(by_role["encoder"])
    model.decoder.load_state(by_role["decoder"])
    return model, meta


# commands

def cmd_synth(args, cfg: RunConfig) -> None:
    out = _out_dir(args)
    vocab = _vocab(args)
    gen = cfg.generator()
    total = cfg.synth.count_train + cfg.synth.count_test
    data = generate_dataset(gen, total, vocab)
    ratio = cfg.synth.count_train / total if cfg.synth.count_test else None
    if ratio is None:
        train, test = data, []
    else:
        train, test = split_dataset(data, ratio, cfg.seed)
    save_dataset(train, out / "train.jsonl", vocab)
    save_dataset(test, out / "test.jsonl", vocab)
    save_vocab(vocab, out / "vocab.json")
    save_motifs(default_motifs(gen.n), out / "motifs.json")
    print(f"wrote {len(train)} train / {len(test)} test sequences to {out}")


def cmd_pretrain(args, cfg: RunConfig) -> None:
    vocab = _vocab(args)
    data = load_dataset(_require_file(args.dataset, "dataset"), vocab)
    if not data:
        raise GraphError("pretraining dataset is empty")
    out = _out_dir(args)
    rng = np.random.default_rng([cfg.seed, 5])
    encoder = init_encoder(cfg.encoder, vocab.d_node, rng)
    head = pretrain.init_projection(cfg.encoder.out_dim, cfg.pretrain, rng)
    result = pretrain.pretrain_loop(data, encoder, head, cfg.encoder, cfg.augment, cfg.pretrain, vocab)
    save_checkpoint(out / "pretrained.ckpt", [encoder, head], _meta(cfg, vocab, cfg.encoder, "pretrained"))
    _write_loss_csv(out / "pretrain_loss.csv", result.history, cfg)
    print(f"pretrained encoder written to {out / 'pretrained.ckpt'}; final loss {result.history[-1]:.4f}")


def cmd_train(args, cfg: RunConfig) -> None:
    regime = cfg.regime(args.regime)
    regime.check_checkpoint(args.checkpoint is not None)
    vocab = _vocab(args)
    data = load_dataset(_require_file(args.dataset, "dataset"), vocab)
    if not data:
        raise GraphError("training dataset is empty")
    pretrained = None
    enc_cfg = cfg.encoder
    if args.checkpoint is not None:
        header, by_role = read_checkpoint(_require_file(args.checkpoint, "checkpoint"))
        enc_cfg = EncoderConfig(**header["meta"]["encoder_config"])
        pretrained = ParameterStore("encoder")
        for name, value in by_role["encoder"].items():
            pretrained.add(name, value)
    out = _out_dir(args)
    result = downstream.train(regime, data, enc_cfg, vocab, pretrained, cfg.augment)
    name = regime.kind.value
    meta = _meta(cfg, vocab, enc_cfg, name)
    meta["regime"] = regime.__dict__ | {"kind": name}
    save_checkpoint(out / f"{name}.ckpt", [result.model.encoder, result.model.decoder], meta)
    _write_loss_csv(out / f"{name}_loss.csv", result.history, cfg)
    print(f"{name} model written to {out / f'{name}.ckpt'}; final loss {result.history[-1]:.4f}")


def cmd_eval(args, cfg: RunConfig) -> None:
    ckpt = _require_file(args.checkpoint, "checkpoint")
    model, meta = _load_model(ckpt)
    data = load_dataset(_require_file(args.dataset, "dataset"), model.vocab)
    metrics = downstream.evaluate(model, data)
    out = _out_dir(args)
    name = args.name or ckpt.stem
    doc = {"config_hash": cfg.digest(), "seed": cfg.seed, "model_config_hash": meta.get("config_hash"), **metrics.to_json()}
    (out / f"{name}_metrics.json").write_text(json.dumps(doc, indent=2) + "\n")
    downstream.write_metrics_csv(metrics, out / f"{name}_metrics.csv", _stamp(cfg))
    print(f"{name}: weighted F1 {metrics.weighted_f1:.4f}")


def cmd_embed(args, cfg: RunConfig) -> None:
    ckpt = _require_file(args.checkpoint, "checkpoint")
    model, _ = _load_model(ckpt)
    data = load_dataset(_require_file(args.dataset, "dataset"), model.vocab)
    rows = downstream.export_embeddings(model, data)
    out = _out_dir(args)
    path = out / f"{args.name or ckpt.stem}_embeddings.csv"
    downstream.write_embeddings_csv(rows, path, _stamp(cfg))
    print(f"wrote {len(rows)} embeddings to {path}")


def cmd_project(args, cfg: RunConfig) -> None:
    src = _require_file(args.embeddings, "embeddings")
    rows = downstream.read_embeddings_csv(src)
    if len(rows) < 2:
        raise GraphError("projection needs at least two embeddings")
    coords = explain.pca_project(np.stack([r["embedding"] for r in rows]))
    out = _out_dir(args)
    path = out / (src.stem.replace("_embeddings", "") + "_projection.csv")
    explain.write_projection_csv(rows, coords, path, _stamp(cfg))
    print(f"wrote 2-D projection to {path}")


def cmd_explain(args, cfg: RunConfig) -> None:
    ckpt = _require_file(args.checkpoint, "checkpoint")
    model, _ = _load_model(ckpt)
    data = load_dataset(_require_file(args.dataset, "dataset"), model.vocab)
    matches = [s for s in data if s.id == args.seq]
    if not matches:
        raise GraphError(f"sequence {args.seq!r} not found in {args.dataset}")
    seq = matches[0]
    enc = encode_sequences([seq], model.encoder, model.enc_cfg, model.vocab)[0]
    pred = int(np.argmax(downstream.decode_action(enc, model.decoder)))
    heat = explain.extract_heatmap(enc, seq, pred)
    out = _out_dir(args) / "explain"
    out.mkdir(exist_ok=True)
    for k, text in enumerate(explain.export_dot(heat, seq, model.vocab, comment=_stamp(cfg))):
        (out / f"{seq.id}_f{k}.dot").write_text(text)
    doc = explain.heatmap_to_json(heat) | {"config_hash": cfg.digest(), "seed": cfg.seed}
    (out / f"{seq.id}_heatmap.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(f"{seq.id}: predicted {heat.predicted}, truth {heat.truth}; heatmaps in {out}")


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "eval": cmd_eval,
    "embed": cmd_embed,
    "project": cmd_project,
    "explain": cmd_explain,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--seed", type=int, help="run seed (overrides config)")
    common.add_argument("--out", default="runs", help="output directory")
    common.add_argument("--vocab", help="vocabulary JSON")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="sgcl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p = sub.add_parser("pretrain", parents=[common], help="contrastive pretraining")
    p.add_argument("--dataset")
    p = sub.add_parser("train", parents=[common], help="supervised action prediction")
    p.add_argument("--dataset")
    p.add_argument("--regime", required=True, choices=[k.value for k in RegimeKind])
    p.add_argument("--checkpoint", help="pretrained encoder (url/pf only)")
    for name, desc in (("eval", "per-class and weighted F1 on the test split"), ("embed", "export sequence embeddings to CSV")):
        p = sub.add_parser(name, parents=[common], help=desc)
        p.add_argument("--dataset")
        p.add_argument("--checkpoint")
        p.add_argument("--name", help="output file prefix (default: checkpoint stem)")
    p = sub.add_parser("project", parents=[common], help="PCA of an embeddings CSV to 2-D")
    p.add_argument("--embeddings")
    p = sub.add_parser("explain", parents=[common], help="attention heatmaps for one sequence")
    p.add_argument("--dataset")
    p.add_argument("--checkpoint")
    p.add_argument("--seq", required=True, help="sequence id")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = load_config(args.config, overrides)
        print(_stamp(cfg))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with FileLock(str(out / ".sgcl.lock"), timeout=5):
            COMMANDS[args.command](args, cfg)
    except (ConfigError, RegimeError, Timeout) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (GraphError, DatasetParseError, CheckpointError, KeyError, ValueError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (pretrain.NumericError, FloatingPointError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
