"""Command-line entry point: ``rhnet <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import hrs
from .corpus import generate_synthetic, load_corpus, split_bags, write_corpus
from .embeddings import EmbeddingTable, load_text_embeddings, write_text_embeddings
from .pipeline import (Config, evaluate, export, init_model, joint_train, load_model,
                       pretrain_detector, pretrain_encoder, save_model)

log = logging.getLogger("rhnet")

TEST_FRACTION = 0.2


def _load_config(path: Optional[str]) -> Config:
    if path is None:
        return Config()
    return Config.from_json(path)


def _resolve(path: Optional[str], base: Path) -> Optional[Path]:
    if path is None:
        return None
    p = Path(path)
    return p if p.is_absolute() else base / p


def cmd_generate(args) -> int:
    spec = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    test_fraction = float(spec.pop("test_fraction", TEST_FRACTION))
    syn = generate_synthetic(spec, args.seed)
    train, test = split_bags(syn.bags, test_fraction, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(train, out / "train.jsonl")
    write_corpus(test, out / "test.jsonl")
    write_text_embeddings(EmbeddingTable.from_dict(syn.gold.entities), out / "entities.txt")
    write_text_embeddings(EmbeddingTable.from_dict(syn.gold.relations), out / "relations.txt")
    dim = len(next(iter(syn.gold.relations.values())))
    config = {"relation_dim": dim, "entity_embeddings": "entities.txt",
              "relation_embeddings": "relations.txt", "seed": args.seed}
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(train)} train and {len(test)} test bags to {out}")
    return 0


def cmd_pretrain(args) -> int:
    config = _load_config(args.config)
    base = Path(args.config).parent if args.config else Path(".")
    bags = load_corpus(args.corpus)
    tables = {}
    for key, field_name, dim in (("words", "word_embeddings", config.word_dim),
                                 ("entities", "entity_embeddings", config.relation_dim),
                                 ("relations", "relation_embeddings", config.relation_dim)):
        path = _resolve(getattr(config, field_name), base)
        if path is not None:
            tables[key] = load_text_embeddings(path, dim)
    model = init_model(config, bags, **tables)
    enc = pretrain_encoder(model, bags)
    rew = pretrain_detector(model, bags)
    save_model(model, args.out)
    print(f"pretrained: encoder loss {enc[-1] if enc else float('nan'):.4f}, "
          f"detector reward {rew[-1] if rew else float('nan'):.4f} -> {args.out}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    model = load_model(args.init, config)
    bags = load_corpus(args.corpus)
    hist = joint_train(model, bags)
    save_model(model, args.out)
    last = hist.hrs_loss[-1] if hist.hrs_loss else float("nan")
    print(f"trained {len(hist.hrs_loss)} iterations, hrs loss {last:.4f} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.ckpt)
    bags = load_corpus(args.test)
    report = evaluate(model, bags)
    export(report, args.out)
    m = report.metrics()
    print(f"auc {m['auc']:.4f}  P@N mean {report.p_at_n['mean']:.4f} -> {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    from .checks import run_gradcheck
    result = run_gradcheck(_load_config(args.config), args.h)
    for name in sorted(k for k in result if k not in ("max", "seconds")):
        print(f"{name:24s} {result[name]:.3e}")
    ok = result["max"] < args.tol
    print(f"max relative error {result['max']:.3e} ({'ok' if ok else 'FAIL'}) "
          f"in {result['seconds']:.1f}s")
    return 0 if ok else 1


def cmd_inspect_tree(args) -> int:
    model = load_model(args.ckpt)
    print(hrs.render_tree(model.tree))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rhnet", description="Hierarchical relation extraction "
                                 "with RL bag denoising.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic corpus with planted noise")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("pretrain", help="encoder and detector pretraining")
    p.add_argument("--config")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="joint detector / tree-search training")
    p.add_argument("--config")
    p.add_argument("--corpus", required=True)
    p.add_argument("--init", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="held-out evaluation and report export")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the composite loss")
    p.add_argument("--config")
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect-tree", help="print the relation tree of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.set_defaults(func=cmd_inspect_tree)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # one-line diagnostic, no traceback
        msg = str(exc).splitlines()[0] if str(exc) else ""
        print(f"rhnet {args.command}: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
