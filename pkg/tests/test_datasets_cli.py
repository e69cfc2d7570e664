"""Bundle preparation, loading, config parsing, and the CLI surface."""

import json

import numpy as np
import pytest

from kgnp.cli import main
from kgnp.config import TrainConfig, load_config, parse_config_text
from kgnp.datasets import SplitSpec, eval_graph_for, load_bundle, prepare_bundle
from kgnp.errors import DataError, UsageError
from kgnp.kg import build_graph

from conftest import random_graph


def toy_source(seed=0, n_nodes=200, n_edges=160):
    """Sparse enough that removing test entities plus one-hop leaves a graph."""
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n_edges):
        h, t = rng.integers(n_nodes, size=2)
        records.append((f"n{h}", f"bg{rng.integers(3)}", f"n{t}"))
    for _ in range(6):
        h, t = rng.integers(n_nodes, size=2)
        records.append((f"n{h}", "task_test", f"n{t}"))
    for _ in range(12):
        h, t = rng.integers(n_nodes, size=2)
        records.append((f"n{h}", "task_train", f"n{t}"))
    return build_graph(records)


def test_prepare_inductive_hygiene(tmp_path):
    source = toy_source()
    spec = SplitSpec(["task_test"], [], ["task_train"])
    out = prepare_bundle(source, spec, tmp_path / "b", K=3, n_cand=5, seed=0)
    bundle = load_bundle(out)
    test_records = bundle.task_records["test"]
    test_entities = {name for rec in test_records
                     for tr in rec["support"] + rec["queries"] for name in (tr[0], tr[2])}
    bg_entities = set(bundle.bg.entity_names)
    assert test_entities and not (test_entities & bg_entities)
    # task relations never appear as background edges
    assert "task_test" not in bundle.bg.relation_names
    assert "task_train" not in bundle.bg.relation_names


def test_prepare_unknown_relation_rejected(tmp_path):
    with pytest.raises(DataError, match="nonexistent"):
        prepare_bundle(toy_source(), SplitSpec(["nonexistent"], [], []), tmp_path / "b")


def test_prepare_empty_test_spec_keeps_whole_graph(tmp_path):
    source = toy_source()
    spec = SplitSpec([], [], ["task_train"])
    out = prepare_bundle(source, spec, tmp_path / "b", K=3, n_cand=5, seed=0)
    bundle = load_bundle(out)
    # no entity removal happens; only the task-relation triples leave the background
    n_task = sum(1 for tr in source.triples
                 if source.relation_names[tr.relation] == "task_train")
    assert len(bundle.bg.triples) == len(source.triples) - n_task
    assert set(bundle.bg.entity_names) <= set(source.entity_names)
    assert bundle.ind_test is None


def test_prepare_subsample_queries(tmp_path):
    source = toy_source(1)
    spec = SplitSpec(["task_test"], [], [])
    full = load_bundle(prepare_bundle(source, spec, tmp_path / "full", K=3, n_cand=5))
    sub = load_bundle(prepare_bundle(source, spec, tmp_path / "sub", K=3, n_cand=5,
                                     query_subsample=0.5))
    n_full = len(full.task_records["test"][0]["queries"])
    n_sub = len(sub.task_records["test"][0]["queries"])
    assert n_sub == max(1, int(n_full * 0.5))


def test_eval_graph_for_vocabulary_checks(tmp_path):
    bundle_dir = tmp_path / "b"
    prepare_bundle(toy_source(), SplitSpec(["task_test"], [], ["task_train"]), bundle_dir,
                   K=3, n_cand=5)
    bundle = load_bundle(bundle_dir)
    kg = bundle.train_graph()
    merged, dropped = eval_graph_for(bundle, kg.relation_names)
    assert merged.relation_names == kg.relation_names
    assert dropped >= 0
    with pytest.raises(DataError):
        eval_graph_for(bundle, ["bogus", "bogus~inv"])


# --- config files -------------------------------------------------------------

def test_parse_config_text_and_overrides(tmp_path):
    text = "lr = 0.001\ntau 0.5\n# comment\nK = 5\n"
    values = parse_config_text(text)
    assert values == {"lr": 0.001, "tau": 0.5, "K": 5}
    path = tmp_path / "c.cfg"
    path.write_text(text)
    cfg = load_config(path, {"K": 2, "seed": 9})
    assert cfg.K == 2 and cfg.tau == 0.5 and cfg.seed == 9


def test_config_rejects_unknown_keys_and_bad_values():
    with pytest.raises(UsageError, match="unknown key"):
        parse_config_text("nonsense = 1")
    with pytest.raises(UsageError):
        parse_config_text("lr = abc")
    with pytest.raises(UsageError):
        TrainConfig(tau=1.5)
    with pytest.raises(UsageError):
        TrainConfig(margin=0.0)
    with pytest.raises(UsageError):
        TrainConfig(T=0)


# --- CLI ----------------------------------------------------------------------

def test_cli_usage_errors_exit_1(capsys):
    assert main(["no-such-verb"]) == 1
    assert main(["train"]) == 1  # missing required flags
    assert main(["eval", "--checkpoint", "x", "--data", "y", "--bogus"]) == 1


def test_cli_data_errors_exit_2(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "missing"), "--out",
                 str(tmp_path / "out")]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "none.json"), "--data",
                 str(tmp_path / "missing")]) == 2


def test_cli_synth_prepare_roundtrip(tmp_path, capsys):
    out = tmp_path / "bundle"
    assert main(["synth", "--out", str(out), "--seed", "3"]) == 0
    bundle = load_bundle(out)
    assert len(bundle.bg.triples) == 80
    assert set(bundle.task_records) == {"train", "valid", "test"}

    source = tmp_path / "src.tsv"
    with open(source, "w") as fh:
        for h, r, t in [("a", "task", "b"), ("c", "task", "d"), ("e", "task", "f"),
                        ("b", "x", "c"), ("c", "x", "d"), ("d", "x", "e"),
                        ("e", "x", "a"), ("f", "x", "a"), ("g", "x", "h"),
                        ("h", "x", "i"), ("i", "x", "g")]:
            fh.write(f"{h}\t{r}\t{t}\n")
    splits = tmp_path / "splits.json"
    splits.write_text(json.dumps({"test_relations": [], "train_relations": ["task"]}))
    assert main(["prepare", "--source", str(source), "--splits", str(splits),
                 "--out", str(tmp_path / "prepared"), "--n-cand", "2", "--K", "1"]) == 0
    prepared = load_bundle(tmp_path / "prepared")
    assert prepared.task_records["train"][0]["relation"] == "task"


def test_cli_train_eval_explain_flow(tmp_path, capsys):
    bundle = tmp_path / "bundle"
    assert main(["synth", "--out", str(bundle), "--seed", "3"]) == 0
    run = tmp_path / "run"
    rc = main(["train", "--data", str(bundle), "--out", str(run),
               "--max-epochs", "8", "--val-every", "4", "--d-edge", "4", "--d-z", "3",
               "--L", "1", "--lr", "0.001", "--seed", "7", "--threads", "1",
               "--max-queries", "2", "--n-cand", "5"])
    assert rc == 0
    assert (run / "checkpoint.json").exists() and (run / "metrics.jsonl").exists()

    rc = main(["eval", "--checkpoint", str(run / "checkpoint.json"), "--data", str(bundle),
               "--split", "test", "--out", str(tmp_path / "report.json"), "--seed", "7"])
    assert rc == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert set(report) >= {"mrr", "hit1", "hit5", "hit10", "n_queries", "per_task"}
    table = capsys.readouterr().out
    assert "mrr\t" in table

    rc = main(["explain", "--checkpoint", str(run / "checkpoint.json"), "--data",
               str(bundle), "--split", "test", "--task", "0", "--query", "0",
               "--threshold", "0.5", "--out", str(tmp_path / "exp"), "--seed", "7"])
    assert rc == 0
    assert (tmp_path / "exp" / "task0_query0.dot").exists()
    assert (tmp_path / "exp" / "task0_query0.json").exists()


def test_cli_k_shot_sweep_and_threshold_monotonicity(tmp_path, capsys):
    bundle = tmp_path / "bundle"
    main(["synth", "--out", str(bundle), "--seed", "4"])
    run = tmp_path / "run"
    main(["train", "--data", str(bundle), "--out", str(run), "--max-epochs", "6",
          "--val-every", "100", "--d-edge", "4", "--d-z", "3", "--L", "1",
          "--lr", "0.001", "--seed", "1", "--max-queries", "2", "--n-cand", "5"])
    for k in (1, 3):
        rc = main(["eval", "--checkpoint", str(run / "checkpoint.json"), "--data",
                   str(bundle), "--split", "test", "--k", str(k), "--seed", "1"])
        assert rc == 0

    kept = {}
    for thr in ("0.5", "0.9"):
        outdir = tmp_path / f"exp{thr}"
        rc = main(["explain", "--checkpoint", str(run / "checkpoint.json"), "--data",
                   str(bundle), "--task", "0", "--query", "0", "--threshold", thr,
                   "--format", "json", "--out", str(outdir), "--seed", "1"])
        assert rc == 0
        payload = json.loads((outdir / "task0_query0.json").read_text())
        kept[thr] = {tuple(edge[:3]) for edge in payload["kept"]}
    assert kept["0.9"] <= kept["0.5"]


def test_cli_train_determinism_bytes(tmp_path):
    bundle = tmp_path / "bundle"
    main(["synth", "--out", str(bundle), "--seed", "5"])
    args = ["--data", str(bundle), "--max-epochs", "6", "--val-every", "3",
            "--d-edge", "4", "--d-z", "3", "--L", "1", "--lr", "0.001",
            "--seed", "7", "--threads", "1", "--max-queries", "2", "--n-cand", "5"]
    assert main(["train", "--out", str(tmp_path / "r1")] + args) == 0
    assert main(["train", "--out", str(tmp_path / "r2")] + args) == 0
    for name in ("checkpoint.json", "metrics.jsonl"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
