"""Batch command-line frontend.

Subcommands: select-orders, build-train, infer, evaluate, stats.  All
randomness is surfaced as --seed flags; with mock backends and fixed
seeds every command is byte-deterministic.  A `key = value` config file
supplies defaults, flags override it, and the backend auth token comes
from the environment (MVABSA_BACKEND_TOKEN).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import aggregate as agg
from . import data as data_mod
from . import orders as orders_mod
from .backend import Backend, BackendError, TableBackend, UniformRandomBackend
from .decoding import constrained_generate
from .evaluation import (
    MatchCounts,
    RunRecord,
    aggregate_runs,
    format_report,
    match_counts,
    read_records,
    write_record,
)
from .remote import RemoteBackend, read_config_file, remote_config
from .schema import ElementOrder, SentimentTuple, normalize_term, parse_target
from .tokenizers import load_tokenizer_artifact, word_tokenizer_for

STRATEGIES = ("vote", "rank", "random", "svp-random", "svp-heuristic", "svp-rank")
DEFAULTS = {"m": 5, "seed": 0, "jobs": 1, "max_tokens": 256, "fraction": 1.0, "split_seed": 0}


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _apply_config(args: argparse.Namespace) -> None:
    if not getattr(args, "config", None):
        overlay = {}
    else:
        overlay = read_config_file(args.config)
    for key, value in overlay.items():
        dest = key.replace("-", "_")
        if getattr(args, dest, None) is None and hasattr(args, dest):
            kind = type(DEFAULTS.get(dest, ""))
            setattr(args, dest, kind(value) if dest in DEFAULTS else value)
    for dest, value in DEFAULTS.items():
        if getattr(args, dest, None) is None and hasattr(args, dest):
            setattr(args, dest, value)


def make_backend(spec: str | None, seed: int, config: str | None = None) -> Backend:
    """Build a backend from a URL or a mock:<spec> string."""
    if spec is None:
        return RemoteBackend(remote_config(config))
    if spec.startswith(("http://", "https://")):
        cfg = remote_config(config) if config else None
        if cfg is not None and cfg.base_url != spec:
            from dataclasses import replace

            cfg = replace(cfg, base_url=spec)
        return RemoteBackend(cfg) if cfg else RemoteBackend.from_url(spec)
    if spec.startswith("mock:"):
        parts = spec.split(":")
        kind = parts[1] if len(parts) > 1 else "uniform"
        if kind == "uniform":
            mock_seed = int(parts[2]) if len(parts) > 2 else seed
            return UniformRandomBackend(seed=mock_seed)
        if kind == "table":
            if len(parts) < 3:
                raise ValueError("mock:table needs a path: mock:table:<file.json>")
            return _table_backend_from_json(":".join(parts[2:]), seed)
        raise ValueError(f"unknown mock backend kind {kind!r}")
    raise ValueError(f"backend must be an http(s) URL or mock:<spec>, got {spec!r}")


def _table_backend_from_json(path: str, seed: int) -> TableBackend:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    scores = {(i, t): float(v) for i, t, v in payload.get("scores", [])}
    next_table = {
        (i, tuple(prefix)): (int(token), float(logprob))
        for i, prefix, token, logprob in payload.get("next", [])
    }
    return TableBackend(
        score_table=scores or None,
        next_table=next_table or None,
        seed=int(payload.get("seed", seed)),
    )


def _load_split(args, path: str, split: str):
    categories_from = [path] + list(getattr(args, "categories_from", None) or [])
    categories = data_mod.scan_categories(categories_from, args.task)
    task = data_mod.make_task(args.task, args.dataset_name or "", categories)
    return data_mod.load_dataset(path, task, split)


def _parse_set_spec(spec: str) -> tuple[str, str, str]:
    parts = spec.split(":", 2)
    if len(parts) != 3:
        raise ValueError(f"expected task:dataset:path, got {spec!r}")
    return parts[0], parts[1], parts[2]


# --- select-orders -----------------------------------------------------------


def cmd_select_orders(args: argparse.Namespace) -> int:
    dataset = _load_split(args, args.dataset, "train")
    if not dataset:
        return _fail(f"no examples in {args.dataset}")
    if args.fraction < 1.0:
        dataset = data_mod.subsample(dataset, args.fraction, args.seed)
    backend = make_backend(args.backend, args.seed, args.config)
    if not backend.capabilities.supports_score:
        return _fail("backend does not support scoring")
    task = dataset[0].task
    n_orders = len(orders_mod.enumerate_orders(task))
    if not 1 <= args.m <= n_orders:
        return _fail(f"--m must be in [1, {n_orders}] for task {task.name}")
    try:
        scored = orders_mod.rank_orders(dataset, backend, task, length_normalized=not args.raw_score)
    except BackendError as exc:
        return _fail(str(exc))
    for s in scored:
        print(f"{s.order.marker_string()}\t{s.score:.6f}\tn={s.sample_count}")
    selected = [s.order for s in scored[: args.m]]
    orders_mod.save_orders(args.out, selected)
    print(f"wrote {len(selected)} orders to {args.out}")
    return 0


# --- build-train -------------------------------------------------------------


def _write_pairs(pairs, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for pair in pairs:
            if "\t" in pair.input or "\t" in pair.target:
                raise ValueError("tab characters in pair text would corrupt the TSV output")
            handle.write(f"{pair.input}\t{pair.target}\n")


def cmd_build_train(args: argparse.Namespace) -> int:
    if args.multitask:
        return _build_train_multitask(args)
    if not args.task or not args.dataset:
        return _fail("--task and --dataset are required unless --multitask is given")
    dataset = _load_split(args, args.dataset, "train")
    task = dataset[0].task
    orders = orders_mod.load_orders(args.orders_file[0], task)
    if args.fraction < 1.0:
        dataset = data_mod.subsample(dataset, args.fraction, args.seed)
    pairs = data_mod.build_training_pairs(dataset, orders)
    _write_pairs(pairs, args.out)
    print(f"wrote {len(pairs)} pairs ({len(dataset)} examples x {len(orders)} orders) to {args.out}")
    return 0


def _build_train_multitask(args: argparse.Namespace) -> int:
    if not args.train:
        return _fail("--multitask requires at least one --train task:dataset:path")
    if len(args.orders_file) != len(args.train):
        return _fail("--multitask needs one --orders-file per --train set, in the same order")
    train_sets = []
    orders_by_dataset = {}
    for spec, orders_path in zip(args.train, args.orders_file):
        task_name, dataset_name, path = _parse_set_spec(spec)
        examples = data_mod.load_dataset_auto(path, task_name, dataset_name, "train")
        if args.fraction < 1.0:
            examples = data_mod.subsample(examples, args.fraction, args.seed)
        task = examples[0].task if examples else data_mod.make_task(task_name, dataset_name)
        train_sets.append((task, examples))
        orders_by_dataset[(task.name, task.dataset)] = orders_mod.load_orders(orders_path, task)
    test_sets = []
    for spec in args.test or []:
        task_name, dataset_name, path = _parse_set_spec(spec)
        examples = data_mod.load_dataset_auto(path, task_name, dataset_name, "test")
        test_sets.append((examples[0].task if examples else None, examples))
    train, dev = data_mod.build_multitask(train_sets, test_sets, args.split_seed)
    train_pairs = data_mod.build_training_pairs_multi(train, orders_by_dataset)
    _write_pairs(train_pairs, args.out)
    dev_out = args.dev_out or f"{args.out}.dev"
    dev_pairs = data_mod.build_training_pairs_multi(dev, orders_by_dataset)
    _write_pairs(dev_pairs, dev_out)
    print(f"wrote {len(train_pairs)} train pairs to {args.out} and {len(dev_pairs)} dev pairs to {dev_out}")
    return 0


# --- infer ---------------------------------------------------------------------


def _tuple_to_json(t: SentimentTuple) -> dict:
    out = {"aspect": t.aspect, "polarity": t.polarity}
    if t.category is not None:
        out["category"] = t.category
    if t.opinion is not None:
        out["opinion"] = t.opinion
    return out


def _json_to_tuple(payload: dict) -> SentimentTuple:
    return SentimentTuple(
        aspect=payload["aspect"],
        polarity=payload["polarity"],
        category=payload.get("category"),
        opinion=payload.get("opinion"),
    )


def _infer_orders(args, task, dataset) -> list[ElementOrder]:
    if args.strategy == "svp-heuristic":
        return [agg.single_view_order("heuristic", task)]
    if args.strategy == "svp-random":
        return [agg.single_view_order("random", task, seed=args.seed)]
    ranked = orders_mod.load_orders(args.orders_file[0], task)
    if not ranked:
        raise ValueError(f"orders file {args.orders_file[0]} is empty")
    if args.strategy == "svp-rank":
        return [ranked[0]]
    return ranked[: args.m]


def _aggregate(strategy: str, views: list[agg.ViewPrediction], seed: int) -> list[SentimentTuple]:
    if strategy == "vote":
        return agg.vote(views)
    if strategy == "rank":
        return agg.rank_select(views)
    if strategy == "random":
        return agg.random_select(views, seed)
    return agg.vote(views)  # svp-* run one view; vote over one view is identity


def cmd_infer(args: argparse.Namespace) -> int:
    dataset = _load_split(args, args.dataset, "test")
    if not dataset:
        return _fail(f"no examples in {args.dataset}")
    task = dataset[0].task
    backend = make_backend(args.backend, args.seed, args.config)
    orders = _infer_orders(args, task, dataset)

    if args.vocab:
        tokenizer = load_tokenizer_artifact(args.vocab)
    elif isinstance(backend, RemoteBackend):
        artifact = backend.info().get("tokenizer_artifact")
        if not artifact:
            return _fail("remote backend advertises no tokenizer artifact; pass --vocab")
        tokenizer = load_tokenizer_artifact(artifact)
    else:
        tokenizer = word_tokenizer_for((ex.sentence for ex in dataset), task)

    prefix = data_mod.task_prefix(task) if args.multitask else None

    def run_sentence(index_example):
        index, example = index_example
        views = []
        for order in orders:
            result = constrained_generate(
                backend,
                example.sentence,
                order,
                task,
                tokenizer,
                max_tokens=args.max_tokens,
                task_prefix=prefix,
            )
            parsed, _ = parse_target(result.text, task)
            views.append(
                {
                    "order": order.marker_string(),
                    "text": result.text,
                    "score": result.sequence_score,
                    "truncated": result.truncated,
                    "tuples": [_tuple_to_json(t) for t in parsed],
                }
            )
        view_objs = [
            agg.ViewPrediction.from_tuples(
                ElementOrder.from_marker_string(v["order"]),
                [_json_to_tuple(t) for t in v["tuples"]],
                v["score"],
                v["truncated"],
            )
            for v in views
        ]
        final = _aggregate(args.strategy, view_objs, args.seed)
        return {
            "id": index,
            "sentence": example.sentence,
            "views": views,
            "final": [_tuple_to_json(t) for t in final],
            "error": None,
        }

    records = []
    failures = 0
    meta = {
        "meta": {
            "task": task.name,
            "dataset": task.dataset,
            "strategy": args.strategy,
            "m": len(orders),
            "seed": args.seed,
        }
    }
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        for index, outcome in enumerate(pool.map(_safe(run_sentence), enumerate(dataset))):
            if isinstance(outcome, Exception):
                failures += 1
                records.append(
                    {
                        "id": index,
                        "sentence": dataset[index].sentence,
                        "views": [],
                        "final": [],
                        "error": str(outcome),
                    }
                )
            else:
                records.append(outcome)
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(meta, sort_keys=True) + "\n")
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
    print(f"wrote {len(records)} records to {args.out} ({failures} failures)")
    return 1 if failures else 0


def _safe(fn):
    def wrapper(item):
        try:
            return fn(item)
        except Exception as exc:  # recorded per sentence; the run continues
            return exc

    return wrapper


# --- evaluate ---------------------------------------------------------------


def _read_predictions(path: str) -> tuple[dict, list[dict]]:
    meta: dict = {}
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        payload = json.loads(line)
        if "meta" in payload:
            meta = payload["meta"]
        else:
            records.append(payload)
    return meta, records


def cmd_evaluate(args: argparse.Namespace) -> int:
    if args.runs:
        return _evaluate_runs(args)
    meta, records = _read_predictions(args.pred)
    task_name = args.task or meta.get("task")
    if not task_name:
        return _fail("no task: pass --task or use a predictions file with a meta line")
    args.task = task_name
    gold = _load_split(args, args.gold, "test")

    if len(records) != len(gold):
        return _fail(f"prediction/gold size mismatch: {len(records)} vs {len(gold)}")
    mismatched = [
        r["id"]
        for r, ex in zip(records, gold)
        if normalize_term(r["sentence"]) != normalize_term(ex.sentence)
    ]
    if mismatched:
        return _fail(f"prediction/gold sentences differ at ids: {mismatched[:20]}")

    strategy = args.strategy or meta.get("strategy", "vote")
    totals = MatchCounts()
    for record, example in zip(records, gold):
        if args.strategy and record["views"]:
            views = [
                agg.ViewPrediction.from_tuples(
                    ElementOrder.from_marker_string(v["order"]),
                    [_json_to_tuple(t) for t in v["tuples"]],
                    v["score"],
                    v["truncated"],
                )
                for v in record["views"]
            ]
            pred = _aggregate(args.strategy, views, args.seed)
        else:
            pred = [_json_to_tuple(t) for t in record["final"]]
        totals = totals + match_counts(pred, list(example.gold))
    print(format_report(totals, label=f"{task_name} {args.dataset_name or meta.get('dataset', '')}".strip()))
    if args.record:
        from .evaluation import micro_f1

        precision, recall, f1 = micro_f1(totals)
        record = RunRecord(
            task=task_name,
            dataset=args.dataset_name or meta.get("dataset", ""),
            seed=args.seed if args.seed is not None else int(meta.get("seed", 0)),
            m=int(meta.get("m", args.m or 0)),
            strategy=strategy,
            precision=precision,
            recall=recall,
            f1=f1,
        )
        write_record(record, args.record)
        print(f"wrote record to {args.record}")
    return 0


def _evaluate_runs(args: argparse.Namespace) -> int:
    records = read_records(args.runs)
    if not records:
        return _fail("--runs needs at least one record file")
    for metric in ("precision", "recall", "f1"):
        mean, stdev = aggregate_runs([getattr(r, metric) for r in records])
        print(f"{metric}: mean={mean:.4f} stdev={stdev:.4f} over {len(records)} runs")
    return 0


# --- stats -------------------------------------------------------------------


def cmd_stats(args: argparse.Namespace) -> int:
    groups = []
    for spec in args.spec:
        parts = spec.split(":", 3)
        if len(parts) != 4:
            return _fail(f"expected task:dataset:split:path, got {spec!r}")
        task_name, dataset_name, split, path = parts
        examples = data_mod.load_dataset_auto(path, task_name, dataset_name, split)
        task = examples[0].task if examples else data_mod.make_task(
            task_name, dataset_name, ("PLACEHOLDER",) if task_name.upper() != "ASTE" else ()
        )
        groups.append((task, split, examples))
    rows = data_mod.dataset_stats(groups)
    print(data_mod.format_stats(rows))
    if args.expect:
        expected = json.loads(Path(args.expect).read_text(encoding="utf-8"))["rows"]
        failures = _check_expectations(rows, expected)
        for failure in failures:
            print(f"expect mismatch: {failure}", file=sys.stderr)
        if failures:
            return 1
        print(f"all {len(expected)} expectations match")
    return 0


def _check_expectations(rows, expected) -> list[str]:
    by_key = {(r.task, r.dataset, r.split): r for r in rows}
    failures = []
    for want in expected:
        key = (want["task"].upper(), want["dataset"], want["split"])
        row = by_key.get(key)
        if row is None:
            failures.append(f"{key}: no such loaded split")
            continue
        for field_name in ("sentences", "pos", "neu", "neg", "categories"):
            if field_name in want and getattr(row, field_name) != want[field_name]:
                failures.append(
                    f"{key}: {field_name}={getattr(row, field_name)} expected {want[field_name]}"
                )
    return failures


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvabsa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, backend=False):
        p.add_argument("--config", help="key = value config file with flag defaults")
        p.add_argument("--seed", type=int, default=None, help="seed for all randomness (default 0)")
        if backend:
            p.add_argument("--backend", help="backend URL or mock:<spec> (e.g. mock:uniform:7)")

    p = sub.add_parser("select-orders", help="rank element orders by conditional-generation score")
    common(p, backend=True)
    p.add_argument("--task", required=True, choices=["asqp", "acos", "aste", "tasd"])
    p.add_argument("--dataset", required=True, help="training split file")
    p.add_argument("--dataset-name", default=None)
    p.add_argument("--categories-from", nargs="*", help="extra files to scan for category vocabulary")
    p.add_argument("--m", type=int, default=None, help="orders to keep (default 5)")
    p.add_argument("--fraction", type=float, default=None, help="score on a seeded subsample")
    p.add_argument("--raw-score", action="store_true", help="rank by total instead of mean log-likelihood")
    p.add_argument("--out", required=True, help="orders file to write (one marker string per line)")
    p.set_defaults(func=cmd_select_orders)

    p = sub.add_parser("build-train", help="emit input<TAB>target training pairs")
    common(p)
    p.add_argument("--task", choices=["asqp", "acos", "aste", "tasd"])
    p.add_argument("--dataset", help="training split file")
    p.add_argument("--dataset-name", default=None)
    p.add_argument("--categories-from", nargs="*")
    p.add_argument("--orders-file", action="append", required=True)
    p.add_argument("--fraction", type=float, default=None, help="low-resource subsample fraction")
    p.add_argument("--multitask", action="store_true", help="assemble a prefixed multi-task corpus")
    p.add_argument("--train", action="append", help="task:dataset:path (repeatable, multitask mode)")
    p.add_argument("--test", action="append", help="task:dataset:path test sets for leakage filtering")
    p.add_argument("--split-seed", type=int, default=None, help="seed for the 9:1 train/dev split")
    p.add_argument("--dev-out", help="dev pairs output (multitask; default <out>.dev)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_train)

    p = sub.add_parser("infer", help="constrained multi-view generation plus aggregation")
    common(p, backend=True)
    p.add_argument("--task", required=True, choices=["asqp", "acos", "aste", "tasd"])
    p.add_argument("--dataset", required=True, help="file with sentences to label")
    p.add_argument("--dataset-name", default=None)
    p.add_argument("--categories-from", nargs="*")
    p.add_argument("--orders-file", action="append", default=None)
    p.add_argument("--strategy", choices=STRATEGIES, default="vote")
    p.add_argument("--m", type=int, default=None, help="views to run (default 5)")
    p.add_argument("--max-tokens", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None, help="concurrent sentences (default 1)")
    p.add_argument("--vocab", help="tokenizer artifact (JSON vocab or hf:<name>)")
    p.add_argument("--multitask", action="store_true", help="prefix inputs with 'TASK: dataset: '")
    p.add_argument("--out", required=True, help="predictions JSONL")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="micro P/R/F1 of predictions against gold")
    common(p)
    p.add_argument("--pred", help="predictions JSONL from infer")
    p.add_argument("--gold", help="gold split file")
    p.add_argument("--task", choices=["asqp", "acos", "aste", "tasd"])
    p.add_argument("--dataset-name", default=None)
    p.add_argument("--categories-from", nargs="*")
    p.add_argument("--strategy", choices=STRATEGIES, help="re-aggregate stored views offline")
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--record", help="write a machine-readable run record JSON")
    p.add_argument("--runs", nargs="*", help="aggregate mean/stdev over run record files")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="dataset statistics (sentences and polarity counts)")
    common(p)
    p.add_argument("--spec", action="append", required=True, help="task:dataset:split:path (repeatable)")
    p.add_argument("--expect", help="JSON expectations; non-zero exit on mismatch")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _apply_config(args)
    try:
        return args.func(args)
    except (BackendError, ValueError, OSError, data_mod.DatasetError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
