"""Command-line entry point: ``qaspr <command> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import checkpoint
from .config import PRESETS, ConfigError, RunConfig, load_json, make_config, preset
from .evaluation import MetricsReport, evaluate
from .kg import load_inductive_split
from .masking import rng_stream
from .reasoner import forward, init_params
from .rules import mine_confidence, table_to_csv
from .toy import toy_grad_check
from .training import fit

logger = logging.getLogger("qaspr")

VARIANTS = {
    "full": {},
    "no-mask": {"masking_enabled": False},
    "no-score": {"scoring_enabled": False},
}
DEFAULT_PE_GRID = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_json(path: str, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_config_file(path: str) -> dict:
    if os.path.exists(path):
        return load_json(path)
    name = os.path.splitext(os.path.basename(path))[0]
    if name in PRESETS:
        return preset(name)
    raise ConfigError([f"config file {path!r} not found"])


def _overrides(args) -> dict:
    out = {
        "train_dir": args.train_dir,
        "ind_dir": args.ind_dir,
        "out": args.out,
        "seed": args.seed,
        "eval_seed": args.eval_seed,
        "threads": args.threads,
        "eval_mask": args.eval_mask,
        "p_e": args.p_e,
    }
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError([f"--set expects KEY=VALUE, got {item!r}"])
        out[key.strip()] = value.strip()
    return out


def resolve_config(args, base: dict | None = None) -> RunConfig:
    layers = [base or {}]
    if getattr(args, "config", None):
        layers.append(_resolve_config_file(args.config))
    layers.append(_overrides(args))
    return make_config(*layers)


def _load(cfg: RunConfig):
    if not cfg.train_dir or not cfg.ind_dir:
        raise ConfigError(["train_dir and ind_dir are required"])
    split = load_inductive_split(cfg.train_dir, cfg.ind_dir)
    return split, mine_confidence(split.train_graph)


def _meta(cfg: RunConfig, n_relations: int, **extra) -> dict:
    return {
        "d": cfg.d,
        "L": cfg.L,
        "K": cfg.K,
        "relation_count": n_relations,
        "seed": cfg.seed,
        "config": cfg.to_json(),
        **extra,
    }


def _metrics_json(report: MetricsReport, cfg: RunConfig) -> dict:
    report.dataset, report.version, report.config = cfg.dataset, cfg.version, cfg.to_json()
    return report.to_json(timestamp=_timestamp())


def _write_ranks(path: str, report: MetricsReport, split) -> None:
    vocab = split.ind_vocab
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("query_head,query_rel,target,rank\n")
        for (s, r, t), rank in zip(report.queries, report.ranks):
            fh.write(f"{vocab.entities[s]},{vocab.relations[r]},{vocab.entities[t]},{rank}\n")


# ---------------------------------------------------------------------------


def cmd_mine_rules(args) -> int:
    cfg = resolve_config(args)
    split, table = _load(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "rules.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(table_to_csv(table, split.train_vocab.relations))
    print(path)
    return 0


def train_run(cfg: RunConfig, split=None, table=None):
    if split is None:
        split, table = _load(cfg)
    result = fit(
        split, table, cfg.reasoner(), cfg.mask(), cfg.train(),
        eval_seed=cfg.eval_seed, eval_mask=cfg.eval_mask, threads=cfg.threads,
    )
    return split, table, result


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    split, table, result = train_run(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    meta = _meta(cfg, split.train_graph.n_relations, best_epoch=result.best_epoch)
    checkpoint.save(os.path.join(cfg.out, "best.ckpt"), result.best_params, meta)
    with open(os.path.join(cfg.out, "curve.jsonl"), "w", encoding="utf-8") as fh:
        for rec in result.curve:
            fh.write(json.dumps(rec) + "\n")
    valid = result.best_valid
    valid.seed = cfg.eval_seed
    _write_json(os.path.join(cfg.out, "valid_metrics.json"), _metrics_json(valid, cfg))
    _write_json(os.path.join(cfg.out, "config.json"), cfg.to_json())
    print(json.dumps({"checkpoint": os.path.join(cfg.out, "best.ckpt"), "valid_mrr": valid.mrr}))
    return 0


def eval_run(cfg: RunConfig, params, split=None, table=None) -> tuple[MetricsReport, object]:
    if split is None:
        split, table = _load(cfg)
    report = evaluate(
        split, table, params, cfg.reasoner(), cfg.mask(),
        eval_seed=cfg.eval_seed, eval_mask=cfg.eval_mask, threads=cfg.threads,
    )
    return report, split


def cmd_eval(args) -> int:
    params, meta = checkpoint.load(args.checkpoint)
    base = dict(meta["config"])
    if args.out is None:
        base["out"] = os.path.dirname(os.path.abspath(args.checkpoint))
    cfg = resolve_config(args, base)
    report, split = eval_run(cfg, params)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "metrics.json")
    _write_json(path, _metrics_json(report, cfg))
    if args.ranks_csv:
        _write_ranks(os.path.join(cfg.out, "ranks.csv"), report, split)
    print(json.dumps({"metrics": path, "mrr": report.mrr, "hits1": report.hits1, "hits10": report.hits10}))
    return 0


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    split, table = _load(cfg)
    out_dir = os.path.join(cfg.out, "ablate")
    os.makedirs(out_dir, exist_ok=True)
    runs: list[tuple[str, RunConfig]] = []
    variants = [args.variant] if args.variant else list(VARIANTS)
    for name in variants:
        runs.append((name, dataclasses.replace(cfg, **VARIANTS[name])))
    if args.pe_grid is not None or not args.variant:
        grid = _parse_grid(args.pe_grid) if args.pe_grid else DEFAULT_PE_GRID
        for pe in grid:
            runs.append((f"pe_{pe:g}", dataclasses.replace(cfg, p_e=pe)))
    summary = {}
    for name, run_cfg in runs:
        _, _, result = train_run(run_cfg, split, table)
        report, _ = eval_run(run_cfg, result.best_params, split, table)
        data = _metrics_json(report, run_cfg)
        _write_json(os.path.join(out_dir, f"{name}.json"), data)
        summary[name] = {"mrr": report.mrr, "hits1": report.hits1, "hits10": report.hits10}
        logger.info("ablate %s: mrr %.4f", name, report.mrr)
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    print(json.dumps(summary))
    return 0


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError([f"--pe-grid must be comma-separated numbers, got {text!r}"]) from None


def cmd_inspect_mask(args) -> int:
    base = {}
    params = None
    if args.checkpoint:
        params, meta = checkpoint.load(args.checkpoint)
        base = dict(meta["config"])
    cfg = resolve_config(args, base)
    split, table = _load(cfg)
    graph, vocab = (split.ind_graph, split.ind_vocab) if args.graph == "ind" else (split.train_graph, split.train_vocab)
    if params is None:
        params = init_params(graph.n_relations, cfg.reasoner(), cfg.seed)
    if args.head not in vocab.entity_ids:
        raise ConfigError([f"unknown entity {args.head!r} in the {args.graph} graph"])
    if args.relation not in vocab.relation_ids:
        raise ConfigError([f"unknown relation {args.relation!r}"])
    s, r = vocab.entity_ids[args.head], vocab.relation_ids[args.relation]
    mcfg = dataclasses.replace(cfg.mask(), seed=cfg.eval_seed)
    res = forward((s, r), graph, table, params, cfg.reasoner(), mcfg, stream_key=(args.query_index,))
    hops = []
    for frontier, mask in zip(res.state.frontiers, res.state.hop_masks):
        hop = mask.to_json()
        hop["frontier"] = [vocab.entities[v] for v in frontier]
        hop["candidates"] = [vocab.relations[x] for x in mask.candidates]
        hop["retained"] = [vocab.relations[x] for x in mask.retained]
        hop["confidence"] = {vocab.relations[x]: c for x, c in mask.confidence.items()}
        hop["removal_prob"] = {vocab.relations[x]: p for x, p in mask.removal_prob.items()}
        hops.append(hop)
    print(json.dumps({"query": [args.head, args.relation], "hops": hops}, indent=2))
    return 0


def cmd_grad_check(args) -> int:
    report = toy_grad_check()
    data = report.to_json()
    data["tolerance"] = args.tolerance
    data["passed"] = report.passed(args.tolerance)
    print(json.dumps(data, indent=2))
    return 0 if data["passed"] else 1


# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file or preset name (e.g. presets/wn18rr_v1.json)")
    p.add_argument("--train-dir")
    p.add_argument("--ind-dir")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--eval-seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--eval-mask", choices=["sampled", "none"])
    p.add_argument("--p-e", type=float)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config field")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qaspr", description="Inductive KG completion with masked path reasoning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine-rules", help="dump single-rule confidences as CSV")
    _common(p)
    p.set_defaults(func=cmd_mine_rules)

    p = sub.add_parser("train", help="train and keep the best validation checkpoint")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="filtered MRR / Hits@k on the inductive test split")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ranks-csv", action="store_true", help="also write per-query ranks")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="full / no-mask / no-score variants and a p_e sweep")
    _common(p)
    p.add_argument("--variant", choices=list(VARIANTS))
    p.add_argument("--pe-grid", help="comma-separated p_e values")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect-mask", help="print the per-hop masks for one query as JSON")
    _common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--head", required=True)
    p.add_argument("--relation", required=True)
    p.add_argument("--graph", choices=["train", "ind"], default="ind")
    p.add_argument("--query-index", type=int, default=0)
    p.set_defaults(func=cmd_inspect_mask)

    p = sub.add_parser("grad-check", help="finite-difference check of every backward rule on a toy graph")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("QASPR_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "problems": exc.problems}), file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
