from __future__ import annotations

import json
from pathlib import Path

import pytest

import table8
from multiview_absa.backend import UniformRandomBackend
from multiview_absa.cli import main
from multiview_absa.data import load_dataset_auto
from multiview_absa.orders import demark, enumerate_orders, load_orders, rank_orders
from multiview_absa.schema import build_input, serialize_target
from multiview_absa.tokenizers import word_tokenizer_for

TOY_LINES = [
    "the sushi was great####[['sushi', 'FOOD#QUALITY', 'positive', 'great']]",
    "service was slow and rude####[['service', 'SERVICE#GENERAL', 'negative', 'slow'], ['service', 'SERVICE#GENERAL', 'negative', 'rude']]",
    "decent prices overall####[['prices', 'RESTAURANT#PRICES', 'positive', 'decent']]",
    "the room felt fine####[['room', 'AMBIENCE#GENERAL', 'neutral', 'fine']]",
]


@pytest.fixture()
def toy_train(tmp_path):
    path = tmp_path / "toy_train.txt"
    path.write_text("".join(line + "\n" for line in TOY_LINES), encoding="utf-8")
    return path


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# --- select-orders -----------------------------------------------------------


def test_select_orders_writes_m_lines(toy_train, tmp_path, capsys):
    out = tmp_path / "orders.txt"
    code, stdout, _ = run(
        ["select-orders", "--task", "asqp", "--dataset", str(toy_train), "--backend", "mock:uniform:3",
         "--m", "24", "--out", str(out)],
        capsys,
    )
    assert code == 0
    assert len(out.read_text().splitlines()) == 24
    assert len([l for l in stdout.splitlines() if l.startswith("[")]) == 24


def test_select_orders_default_m_is_5(toy_train, tmp_path, capsys):
    out = tmp_path / "orders.txt"
    code, _, _ = run(
        ["select-orders", "--task", "asqp", "--dataset", str(toy_train), "--backend", "mock:uniform:3",
         "--out", str(out)],
        capsys,
    )
    assert code == 0
    assert len(out.read_text().splitlines()) == 5


def test_select_orders_matches_oracle_sort(toy_train, tmp_path, capsys):
    out = tmp_path / "orders.txt"
    code, _, _ = run(
        ["select-orders", "--task", "asqp", "--dataset", str(toy_train), "--backend", "mock:uniform:9",
         "--m", "24", "--out", str(out)],
        capsys,
    )
    assert code == 0
    dataset = load_dataset_auto(toy_train, "asqp", "")
    oracle = [s.order for s in rank_orders(dataset, UniformRandomBackend(seed=9), dataset[0].task)]
    assert load_orders(out) == oracle


def test_select_orders_m_out_of_range_fails(toy_train, tmp_path, capsys):
    code, _, err = run(
        ["select-orders", "--task", "asqp", "--dataset", str(toy_train), "--backend", "mock:uniform",
         "--m", "25", "--out", str(tmp_path / "o.txt")],
        capsys,
    )
    assert code == 1
    assert "must be in [1, 24]" in err


# --- build-train -------------------------------------------------------------


def test_build_train_row_count_on_benchmark(benchmark_files, tmp_path, capsys):
    train = benchmark_files[("ASQP", "rest15", "train")]
    orders_file = tmp_path / "orders.txt"
    code, _, _ = run(
        ["select-orders", "--task", "asqp", "--dataset", str(train), "--backend", "mock:uniform:1",
         "--m", "5", "--out", str(orders_file)],
        capsys,
    )
    assert code == 0
    pairs = tmp_path / "pairs.tsv"
    code, stdout, _ = run(
        ["build-train", "--task", "asqp", "--dataset", str(train), "--orders-file", str(orders_file),
         "--out", str(pairs)],
        capsys,
    )
    assert code == 0
    assert len(pairs.read_text(encoding="utf-8").splitlines()) == 4170
    assert "834 examples x 5 orders" in stdout


def test_build_train_fraction_floor(benchmark_files, tmp_path, capsys):
    train = benchmark_files[("ASQP", "rest15", "train")]
    orders_file = tmp_path / "orders.txt"
    run(
        ["select-orders", "--task", "asqp", "--dataset", str(train), "--backend", "mock:uniform:1",
         "--m", "5", "--out", str(orders_file)],
        capsys,
    )
    pairs = tmp_path / "pairs.tsv"
    code, _, _ = run(
        ["build-train", "--task", "asqp", "--dataset", str(train), "--orders-file", str(orders_file),
         "--fraction", "0.01", "--seed", "7", "--out", str(pairs)],
        capsys,
    )
    assert code == 0
    assert len(pairs.read_text(encoding="utf-8").splitlines()) == 8 * 5


def test_build_train_multitask_prefixes(toy_train, tmp_path, capsys):
    aste = tmp_path / "aste_train.txt"
    aste.write_text("laptop was loud####[['laptop', 'loud', 'negative']]\n", encoding="utf-8")
    orders_a = tmp_path / "oa.txt"
    orders_b = tmp_path / "ob.txt"
    run(["select-orders", "--task", "asqp", "--dataset", str(toy_train), "--backend", "mock:uniform:1",
         "--m", "2", "--out", str(orders_a)], capsys)
    run(["select-orders", "--task", "aste", "--dataset", str(aste), "--backend", "mock:uniform:1",
         "--m", "2", "--out", str(orders_b)], capsys)
    pairs = tmp_path / "pairs.tsv"
    code, _, _ = run(
        ["build-train", "--multitask",
         "--train", f"asqp:rest15:{toy_train}", "--train", f"aste:laptop14:{aste}",
         "--orders-file", str(orders_a), "--orders-file", str(orders_b),
         "--split-seed", "0", "--out", str(pairs)],
        capsys,
    )
    assert code == 0
    rows = pairs.read_text(encoding="utf-8").splitlines()
    rows += (tmp_path / "pairs.tsv.dev").read_text(encoding="utf-8").splitlines()
    assert len(rows) == (4 + 1) * 2
    assert all(r.startswith(("ASQP: rest15: ", "ASTE: laptop14: ")) for r in rows)


def test_build_train_multitask_filters_leaks(toy_train, tmp_path, capsys):
    leak_test = tmp_path / "aste_test.txt"
    leak_test.write_text("THE SUSHI WAS GREAT####[['sushi', 'great', 'positive']]\n", encoding="utf-8")
    orders_a = tmp_path / "oa.txt"
    run(["select-orders", "--task", "asqp", "--dataset", str(toy_train), "--backend", "mock:uniform:1",
         "--m", "1", "--out", str(orders_a)], capsys)
    pairs = tmp_path / "pairs.tsv"
    code, _, _ = run(
        ["build-train", "--multitask", "--train", f"asqp:rest15:{toy_train}",
         "--test", f"aste:rest15:{leak_test}",
         "--orders-file", str(orders_a), "--split-seed", "1", "--out", str(pairs)],
        capsys,
    )
    assert code == 0
    rows = pairs.read_text(encoding="utf-8").splitlines()
    rows += (tmp_path / "pairs.tsv.dev").read_text(encoding="utf-8").splitlines()
    assert len(rows) == 3
    assert not any("sushi was great" in r for r in rows)


# --- infer / evaluate -----------------------------------------------------------


def scripted_table_file(tmp_path, dataset, task, orders, targets_by_sentence_order):
    """Build a mock:table JSON whose next-token entries emit fixed targets."""
    tokenizer = word_tokenizer_for((ex.sentence for ex in dataset), task)
    next_rows = []
    for ex in dataset:
        for order in orders:
            target = targets_by_sentence_order(ex, order)
            input_text = build_input(ex.sentence, order)
            ids = list(tokenizer.encode(target)) + [tokenizer.eos_id]
            for k, token in enumerate(ids):
                next_rows.append([input_text, ids[:k], token, -0.5])
    path = tmp_path / "table.json"
    path.write_text(json.dumps({"next": next_rows}), encoding="utf-8")
    return path


def test_infer_vote_matches_oracle(toy_train, tmp_path, capsys):
    dataset = load_dataset_auto(toy_train, "asqp", "")
    task = dataset[0].task
    orders = enumerate_orders(task)[:5]
    orders_file = tmp_path / "orders.txt"
    orders_file.write_text("".join(o.marker_string() + "\n" for o in orders), encoding="utf-8")

    def target_for(ex, order):
        # three of five views agree with gold; two emit a decoy with a
        # different in-sentence aspect, which voting must drop (2 < 5/2)
        if orders.index(order) < 3:
            return serialize_target(ex.gold, order)
        from dataclasses import replace

        decoy = replace(ex.gold[0], aspect=ex.sentence.split()[0])
        return serialize_target((decoy,), order)

    table = scripted_table_file(tmp_path, dataset, task, orders, target_for)
    preds = tmp_path / "preds.jsonl"
    code, _, _ = run(
        ["infer", "--task", "asqp", "--dataset", str(toy_train), "--backend", f"mock:table:{table}",
         "--orders-file", str(orders_file), "--m", "5", "--strategy", "vote", "--out", str(preds)],
        capsys,
    )
    assert code == 0
    records = [json.loads(l) for l in preds.read_text(encoding="utf-8").splitlines()][1:]
    for record, ex in zip(records, dataset):
        got = {(t["aspect"], t.get("category"), t.get("opinion"), t["polarity"]) for t in record["final"]}
        want = {(t.aspect, t.category, t.opinion, t.polarity) for t in ex.gold}
        assert got == want


def test_infer_m1_identity(toy_train, tmp_path, capsys):
    dataset = load_dataset_auto(toy_train, "asqp", "")
    task = dataset[0].task
    orders = enumerate_orders(task)[:1]
    orders_file = tmp_path / "orders.txt"
    orders_file.write_text(orders[0].marker_string() + "\n", encoding="utf-8")
    table = scripted_table_file(
        tmp_path, dataset, task, orders, lambda ex, order: serialize_target(ex.gold, order)
    )
    preds = tmp_path / "preds.jsonl"
    code, _, _ = run(
        ["infer", "--task", "asqp", "--dataset", str(toy_train), "--backend", f"mock:table:{table}",
         "--orders-file", str(orders_file), "--m", "1", "--out", str(preds)],
        capsys,
    )
    assert code == 0
    records = [json.loads(l) for l in preds.read_text(encoding="utf-8").splitlines()][1:]
    for record in records:
        assert record["final"] == record["views"][0]["tuples"]


def test_infer_svp_heuristic_uses_single_order(toy_train, tmp_path, capsys):
    preds = tmp_path / "preds.jsonl"
    code, _, _ = run(
        ["infer", "--task", "asqp", "--dataset", str(toy_train), "--backend", "mock:uniform:5",
         "--strategy", "svp-heuristic", "--out", str(preds)],
        capsys,
    )
    assert code == 0
    records = [json.loads(l) for l in preds.read_text(encoding="utf-8").splitlines()][1:]
    for record in records:
        assert [v["order"] for v in record["views"]] == ["[A][O][C][S]"]


def test_evaluate_identity_f1_one(toy_train, tmp_path, capsys):
    dataset = load_dataset_auto(toy_train, "asqp", "")
    task = dataset[0].task
    orders = enumerate_orders(task)[:2]
    orders_file = tmp_path / "orders.txt"
    orders_file.write_text("".join(o.marker_string() + "\n" for o in orders), encoding="utf-8")
    table = scripted_table_file(
        tmp_path, dataset, task, orders, lambda ex, order: serialize_target(ex.gold, order)
    )
    preds = tmp_path / "preds.jsonl"
    run(
        ["infer", "--task", "asqp", "--dataset", str(toy_train), "--backend", f"mock:table:{table}",
         "--orders-file", str(orders_file), "--m", "2", "--out", str(preds)],
        capsys,
    )
    record = tmp_path / "run.json"
    code, stdout, _ = run(
        ["evaluate", "--pred", str(preds), "--gold", str(toy_train), "--record", str(record)],
        capsys,
    )
    assert code == 0
    assert "f1=1.0000" in stdout
    payload = json.loads(record.read_text(encoding="utf-8"))
    assert payload["f1"] == 1.0 and payload["m"] == 2


def test_evaluate_empty_predictions_zero(toy_train, tmp_path, capsys):
    dataset = load_dataset_auto(toy_train, "asqp", "")
    preds = tmp_path / "preds.jsonl"
    lines = [json.dumps({"meta": {"task": "ASQP", "dataset": "", "strategy": "vote", "m": 1, "seed": 0}})]
    for i, ex in enumerate(dataset):
        lines.append(json.dumps({"id": i, "sentence": ex.sentence, "views": [], "final": [], "error": None}))
    preds.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    code, stdout, _ = run(["evaluate", "--pred", str(preds), "--gold", str(toy_train)], capsys)
    assert code == 0
    assert "recall=0.0000" in stdout and "f1=0.0000" in stdout


def test_evaluate_misalignment_lists_ids(toy_train, tmp_path, capsys):
    preds = tmp_path / "preds.jsonl"
    lines = [json.dumps({"meta": {"task": "ASQP", "dataset": "", "strategy": "vote", "m": 1, "seed": 0}})]
    dataset = load_dataset_auto(toy_train, "asqp", "")
    for i, ex in enumerate(dataset):
        sentence = "completely different" if i == 2 else ex.sentence
        lines.append(json.dumps({"id": i, "sentence": sentence, "views": [], "final": [], "error": None}))
    preds.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    code, _, err = run(["evaluate", "--pred", str(preds), "--gold", str(toy_train)], capsys)
    assert code == 1
    assert "[2]" in err


def test_evaluate_runs_aggregation(tmp_path, capsys):
    from multiview_absa.evaluation import RunRecord, write_record

    paths = []
    for seed, f1 in enumerate([0.5, 0.7, 0.6]):
        path = tmp_path / f"run{seed}.json"
        write_record(RunRecord("ASQP", "rest15", seed, 5, "vote", f1, f1, f1), path)
        paths.append(str(path))
    code, stdout, _ = run(["evaluate", "--runs", *paths], capsys)
    assert code == 0
    assert "f1: mean=0.6000 stdev=0.1000 over 3 runs" in stdout


# --- stats ---------------------------------------------------------------------


def test_stats_reproduces_published_counts(benchmark_files, benchmark_expect_file, capsys):
    specs = []
    for (task, dataset, split), path in benchmark_files.items():
        specs += ["--spec", f"{task.lower()}:{dataset}:{split}:{path}"]
    code, stdout, _ = run(["stats", *specs, "--expect", str(benchmark_expect_file)], capsys)
    assert code == 0
    assert "all 30 expectations match" in stdout
    assert any(line.split() == ["ASQP", "rest15", "train", "834", "1005", "34", "315", "13"]
               for line in stdout.splitlines())
    assert any(line.split() == ["TASD", "rest15", "dev", "10", "6", "0", "7", "13"]
               for line in stdout.splitlines())


def test_stats_expect_mismatch_fails(benchmark_files, tmp_path, capsys):
    bad = table8.expectations()
    bad["rows"][0]["sentences"] += 1
    expect = tmp_path / "bad.json"
    expect.write_text(json.dumps(bad), encoding="utf-8")
    (task, dataset, split) = ("ASQP", "rest15", "train")
    path = benchmark_files[(task, dataset, split)]
    rows = [r for r in bad["rows"] if (r["task"], r["dataset"], r["split"]) == (task, dataset, split)]
    expect.write_text(json.dumps({"rows": rows}), encoding="utf-8")
    code, _, err = run(
        ["stats", "--spec", f"asqp:rest15:train:{path}", "--expect", str(expect)], capsys
    )
    assert code == 1
    assert "sentences=834 expected 835" in err


def test_stats_empty_file_zeros(tmp_path, capsys):
    empty = tmp_path / "empty.txt"
    empty.write_text("", encoding="utf-8")
    code, stdout, _ = run(["stats", "--spec", f"aste:none:test:{empty}"], capsys)
    assert code == 0
    assert any(line.split() == ["ASTE", "none", "test", "0", "0", "0", "0", "0"]
               for line in stdout.splitlines())


# --- config file ---------------------------------------------------------------


def test_config_file_supplies_defaults(toy_train, tmp_path, capsys):
    config = tmp_path / "run.conf"
    config.write_text("m = 3\nseed = 4\n", encoding="utf-8")
    out = tmp_path / "orders.txt"
    code, _, _ = run(
        ["select-orders", "--config", str(config), "--task", "asqp", "--dataset", str(toy_train),
         "--backend", "mock:uniform", "--out", str(out)],
        capsys,
    )
    assert code == 0
    assert len(out.read_text().splitlines()) == 3


def test_flags_override_config(toy_train, tmp_path, capsys):
    config = tmp_path / "run.conf"
    config.write_text("m = 3\n", encoding="utf-8")
    out = tmp_path / "orders.txt"
    code, _, _ = run(
        ["select-orders", "--config", str(config), "--task", "asqp", "--dataset", str(toy_train),
         "--backend", "mock:uniform", "--m", "2", "--out", str(out)],
        capsys,
    )
    assert code == 0
    assert len(out.read_text().splitlines()) == 2


# --- pipeline determinism -------------------------------------------------------


def run_pipeline(workdir: Path, toy_train: Path, capsys) -> dict[str, bytes]:
    workdir.mkdir(exist_ok=True)
    orders_file = workdir / "orders.txt"
    pairs = workdir / "pairs.tsv"
    preds = workdir / "preds.jsonl"
    record = workdir / "run.json"
    for argv in (
        ["select-orders", "--task", "asqp", "--dataset", str(toy_train), "--backend", "mock:uniform:2",
         "--m", "5", "--out", str(orders_file)],
        ["build-train", "--task", "asqp", "--dataset", str(toy_train), "--orders-file", str(orders_file),
         "--out", str(pairs)],
        ["infer", "--task", "asqp", "--dataset", str(toy_train), "--backend", "mock:uniform:2",
         "--orders-file", str(orders_file), "--m", "5", "--seed", "0", "--jobs", "2",
         "--max-tokens", "200", "--out", str(preds)],
        ["evaluate", "--pred", str(preds), "--gold", str(toy_train), "--record", str(record)],
    ):
        code = main(argv)
        capsys.readouterr()
        assert code == 0, argv
    return {p.name: p.read_bytes() for p in (orders_file, pairs, preds, record)}


def test_pipeline_byte_identical_across_runs(toy_train, tmp_path, capsys):
    first = run_pipeline(tmp_path / "run1", toy_train, capsys)
    second = run_pipeline(tmp_path / "run2", toy_train, capsys)
    assert first == second
