"""Command-line entry point: ``blocknas <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
130 interrupted (a resumable checkpoint is left in the run directory).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from blocknas import graphdata as gd
from blocknas.config import ConfigError, RunConfig, load_config
from blocknas.gnn import (
    CheckpointError,
    build_model,
    evaluate_model,
    init_rng,
    load_model,
    save_model,
    train_model,
)
from blocknas.search import (
    Interrupted,
    PoolFileError,
    SearchError,
    SyntheticEvaluator,
    TrainingEvaluator,
    TransferError,
    ablation_csv,
    diversity_ablation,
    load_pool,
    load_run,
    prepare_dataset,
    report,
    search_arch,
    search_blocks,
    transfer,
)
from blocknas.space import ArchCode, BlockCode, CodeError, parse_code, standard_architecture

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_INTERRUPTED = 0, 1, 2, 130


class UsageError(Exception):
    """Bad input detected after argument parsing; maps to exit code 2."""


def _say(**fields) -> None:
    print(" ".join(f"{k}={_value(v)}" for k, v in fields.items()), flush=True)


def _value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _depths(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated positive integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"depths must be positive integers, got {text!r}")
    return values


# --- shared helpers -------------------------------------------------------

def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        if args.jobs < 1:
            raise ConfigError("jobs", "must be >= 1")
        changes["jobs"] = args.jobs
    if getattr(args, "out", None) is not None:
        changes["output_dir"] = str(args.out)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _dataset(cfg: RunConfig):
    if cfg.dataset is None:
        raise ConfigError("dataset", "this command needs a dataset")
    try:
        return prepare_dataset(cfg.dataset)
    except (gd.DataFormatError, gd.SplitError, FileNotFoundError) as exc:
        raise ConfigError("dataset", str(exc)) from None


def _evaluator(cfg: RunConfig):
    if cfg.evaluator.kind == "synthetic":
        return SyntheticEvaluator(cfg.evaluator.family, cfg.space), "synthetic"
    data = _dataset(cfg)
    return TrainingEvaluator(data, cfg.model, cfg.space, cfg.seed), data.name


def _progress(row) -> None:
    _say(episode=row.episode, epsilon=row.epsilon, reward=row.reward, best=row.best_so_far,
         loss=row.loss, failed=int(row.failed), wall_ms=round(row.wall_ms, 1))


def _snapshot(cfg: RunConfig, dataset_name: str) -> dict:
    snap = cfg.snapshot()
    snap["dataset_name"] = dataset_name
    return snap


def _finish(run, run_dir: Path, hidden: int) -> None:
    paths = report(run, run_dir, hidden)
    _say(status="done", stage=run.stage, episodes=run.episodes_done, best=run.best_score,
         best_episode=run.best_episode, transferred=int(run.transferred), run_dir=run_dir)
    for role, path in sorted(paths.items()):
        _say(file=role, path=path)


def _load_gbp(path):
    try:
        pool, doc = load_pool(path)
    except PoolFileError as exc:
        raise UsageError(str(exc)) from None
    if not len(pool):
        raise UsageError(f"{path}: block pool is empty")
    return pool, doc


def _read_code_file(path) -> tuple[object, dict]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        code = parse_code(text)
    except CodeError as exc:
        raise UsageError(f"{path}: {exc}") from None
    doc = json.loads(text)
    return code, doc if isinstance(doc, dict) else {}


# --- commands -------------------------------------------------------------

def cmd_data_inspect(args) -> int:
    try:
        g = gd.load_dataset(args.path, args.format)
    except FileNotFoundError:
        raise UsageError(f"{args.path}: no such file or directory") from None
    except (gd.DataFormatError, OSError, ValueError) as exc:
        raise UsageError(f"{args.path}: {exc}") from None
    print(g.summary())
    _say(nodes=g.num_nodes, edges=g.raw_edge_count, undirected_edges=g.num_edges,
         features=g.num_features, classes=g.num_classes)
    try:
        if args.split == "semi":
            split = gd.semi_split(g, args.per_class, args.n_val, args.n_test, args.seed)
        else:
            split = gd.full_split(g, seed=args.seed)
        train, val, test = split.sizes()
        _say(split=args.split, train=train, val=val, test=test)
    except gd.SplitError as exc:
        _say(split=args.split, status="infeasible", reason=json.dumps(str(exc)))
    return EXIT_OK


def _search(args, stage: str) -> int:
    cfg = _config(args)
    pool = None
    if stage in ("arch", "transfer"):
        if not args.gbp:
            raise UsageError(f"{'search arch' if stage == 'arch' else 'transfer'} needs --gbp <file>")
        pool, doc = _load_gbp(args.gbp)
        if stage == "transfer" and int(doc.get("hidden", cfg.model.hidden)) != cfg.model.hidden:
            raise UsageError(f"block pool was searched with hidden size {doc.get('hidden')}, "
                             f"configuration uses {cfg.model.hidden}")
    evaluator, name = _evaluator(cfg)
    run_dir = Path(cfg.output_dir)
    common = dict(seed=cfg.seed, run_dir=run_dir, resume=args.resume, config=_snapshot(cfg, name),
                  jobs=cfg.jobs, checkpoint_every=cfg.checkpoint_every, on_episode=_progress)
    budget = args.episodes
    _say(status="start", stage=stage, seed=cfg.seed, evaluator=cfg.evaluator.kind, run_dir=run_dir)
    if stage == "block":
        _, run = search_blocks(cfg.space, cfg.agent, evaluator, budget or cfg.budget.block_episodes,
                               pool_capacity=cfg.budget.pool_size, **common)
    elif stage == "arch":
        _, run = search_arch(pool, cfg.space, cfg.agent, evaluator, budget or cfg.budget.arch_episodes,
                             **common)
    else:
        _, run = transfer(args.gbp, cfg.space, cfg.agent, evaluator, cfg.model.hidden,
                          budget or cfg.budget.arch_episodes, **common)
    _finish(run, run_dir, cfg.model.hidden)
    return EXIT_OK


def cmd_search(args) -> int:
    return _search(args, args.stage)


def cmd_transfer(args) -> int:
    return _search(args, "transfer")


def _model_from_code(code, doc: dict, cfg: RunConfig, gbp, in_dim: int, num_classes: int):
    if isinstance(code, BlockCode):
        arch = standard_architecture(cfg.space, cfg.model.dropout, cfg.model.alpha)
        pool = [code]
    else:
        if gbp:
            pool = list(_load_gbp(gbp)[0].codes)
        elif "pool" in doc:
            try:
                pool = [BlockCode.from_lists(b) for b in doc["pool"]]
            except (CodeError, TypeError, ValueError) as exc:
                raise UsageError(f"code file pool: {exc}") from None
        else:
            raise UsageError("an architecture code needs its blocks: add --gbp or a 'pool' field")
        arch = code
    try:
        return build_model(arch, pool, in_dim, num_classes, cfg.model, init_rng(cfg.seed))
    except CodeError as exc:
        raise UsageError(f"code does not decode: {exc}") from None


def cmd_train(args) -> int:
    cfg = _config(args)
    code, doc = _read_code_file(args.code)
    data = _dataset(cfg)
    m = _model_from_code(code, doc, cfg, args.gbp, data.in_dim, data.num_classes)
    _say(status="start", depth=m.depth, epochs=cfg.model.epochs, seed=cfg.seed)
    r = train_model(m, data.graph, data.split, data.adj, cfg.seed, data.features)
    target = Path(args.checkpoint) if args.checkpoint else Path(cfg.output_dir) / "model.npz"
    target.parent.mkdir(parents=True, exist_ok=True)
    save_model(target, m, cfg.seed, r, {"dataset": data.name})
    _say(val_accuracy=r.val_accuracy, test_accuracy=r.test_accuracy, train_loss=r.final_train_loss,
         epochs=r.epochs_run, best_epoch=r.best_epoch, failed=int(r.failed), checkpoint=target)
    return EXIT_RUNTIME if r.failed else EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    try:
        m, meta = load_model(args.checkpoint)
    except CheckpointError as exc:
        raise UsageError(str(exc)) from None
    data = _dataset(cfg)
    if (m.in_dim, m.num_classes) != (data.in_dim, data.num_classes):
        raise UsageError(f"checkpoint expects {m.in_dim} features / {m.num_classes} classes, "
                         f"dataset has {data.in_dim} / {data.num_classes}")
    acc = evaluate_model(m, data.graph, data.split, data.adj, data.features)
    _say(train_accuracy=acc["train"], val_accuracy=acc["val"], test_accuracy=acc["test"], depth=m.depth)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _config(args)
    code, _ = _read_code_file(args.block)
    if not isinstance(code, BlockCode):
        raise UsageError(f"{args.block}: expected a block code")
    data = _dataset(cfg)
    try:
        rows = diversity_ablation(code, args.depths, data, cfg.model, cfg.seed, cfg.space)
    except CodeError as exc:
        raise UsageError(str(exc)) from None
    text = ablation_csv(rows)
    target = Path(args.csv) if args.csv else Path(cfg.output_dir) / "ablation.csv"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text)
    sys.stdout.write(text)
    _say(status="done", csv=target)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        run = load_run(args.run_dir)
    except SearchError as exc:
        raise UsageError(str(exc)) from None
    hidden = int(run.config.get("model", {}).get("hidden", 32))
    dest = Path(args.out) if args.out else Path(args.run_dir)
    _finish(run, dest, hidden)
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser, resume: bool = True) -> None:
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--jobs", type=int, help="maximum concurrent evaluations")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    if resume:
        p.add_argument("--resume", action="store_true", help="continue from the run directory's checkpoint")
        p.add_argument("--episodes", type=int, help="override the episode budget")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blocknas", description="Block-wise GNN architecture search.")
    sub = parser.add_subparsers(dest="command", required=True)

    data = sub.add_parser("data", help="dataset utilities")
    data_sub = data.add_subparsers(dest="action", required=True)
    insp = data_sub.add_parser("inspect", help="print dataset counts and split sizes")
    insp.add_argument("path", help="dataset directory or .npz file")
    insp.add_argument("--format", choices=("planetoid", "csv", "npz"), help="skip format detection")
    insp.add_argument("--split", choices=("semi", "full"), default="semi")
    insp.add_argument("--per-class", type=int, default=20, help="semi split: training nodes per class")
    insp.add_argument("--n-val", type=int, default=500)
    insp.add_argument("--n-test", type=int, default=1000)
    insp.add_argument("--seed", type=int, default=0, help="split seed")
    insp.set_defaults(func=cmd_data_inspect)

    search = sub.add_parser("search", help="run a search stage")
    search_sub = search.add_subparsers(dest="stage", required=True)
    sb = search_sub.add_parser("blocks", help="block-wise search; writes gbp.json")
    sb.add_argument("config")
    _add_run_flags(sb)
    sb.set_defaults(func=cmd_search, stage="block")
    sa = search_sub.add_parser("arch", help="architecture-wise search over a block pool")
    sa.add_argument("config")
    sa.add_argument("--gbp", help="block pool file from a block search (required)")
    _add_run_flags(sa)
    sa.set_defaults(func=cmd_search, stage="arch")

    tr = sub.add_parser("transfer", help="architecture search on a new dataset with an existing block pool")
    tr.add_argument("config")
    tr.add_argument("--gbp", help="block pool file (required)")
    _add_run_flags(tr)
    tr.set_defaults(func=cmd_transfer)

    train = sub.add_parser("train", help="train one model from a code file")
    train.add_argument("code", help="block or architecture code file")
    train.add_argument("config")
    train.add_argument("--gbp", help="block pool for architecture codes without a 'pool' field")
    train.add_argument("--checkpoint", help="checkpoint path (default <out>/model.npz)")
    _add_run_flags(train, resume=False)
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a trained checkpoint")
    ev.add_argument("checkpoint")
    ev.add_argument("config")
    ev.set_defaults(func=cmd_eval)

    ab = sub.add_parser("ablate", help="ablation studies")
    ab_sub = ab.add_subparsers(dest="study", required=True)
    div = ab_sub.add_parser("diversity", help="searched block versus single-type chain across depths")
    div.add_argument("block", help="block code file")
    div.add_argument("config")
    div.add_argument("--depths", type=_depths, default=[4, 8, 16, 32], help="comma-separated, e.g. 4,8,16")
    div.add_argument("--csv", help="CSV path (default <out>/ablation.csv)")
    _add_run_flags(div, resume=False)
    div.set_defaults(func=cmd_ablate)

    rep = sub.add_parser("report", help="rewrite report files from a run directory")
    rep.add_argument("run_dir")
    rep.add_argument("--out", help="destination (default: the run directory)")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, TransferError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Interrupted as exc:
        where = f"; resume with --resume from {exc.directory}" if exc.directory else ""
        print(f"interrupted: checkpoint at episode {exc.episode}{where}", file=sys.stderr)
        return EXIT_INTERRUPTED
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_INTERRUPTED
    except (SearchError, OSError, ArithmeticError, ValueError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
