import csv
import json
import os

import numpy as np
import pytest

from votecrest import netcore as nc
from votecrest.config import parse_config
from votecrest.experiment import (ExperimentRun, map_ordered,
                                  parallel_robust_accuracy, run_experiment)


def tiny_doc(**overrides):
    doc = {
        "name": "tiny",
        "seed": 99,
        "repeats": 2,
        "dataset": {"kind": "gaussian-blobs", "d": 2, "n_classes": 2,
                    "n_per_class": 8, "eval_n_per_class": 6, "margin": 0.3,
                    "seed": 5},
        "models": [
            {"name": "a", "objective": "standard", "seed": 1, "hidden": [4]},
            {"name": "b", "objective": "pgd-at", "seed": 2, "hidden": [4]},
        ],
        "train": {"epochs": 4, "batch_size": 8, "learning_rate": 0.3,
                  "inner_steps": 3},
        "attack": {"epsilon": 0.08, "steps": 5},
        "ensembles": [["a", "b"]],
        "ensemble_attacks": ["ls-ce", "wa-cw"],
        "selection": {"k": 1, "r": 6},
        "diversity": {"attacks": ["pgd-ce"], "n_points": 4},
    }
    doc.update(overrides)
    return doc


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_map_ordered_matches_serial():
    items = list(range(20))
    serial = map_ordered(lambda v: v * v, items, threads=1)
    threaded = map_ordered(lambda v: v * v, items, threads=4)
    assert serial == threaded == [v * v for v in items]


def test_run_experiment_writes_all_sections(tmp_path):
    cfg = parse_config(tiny_doc())
    report = run_experiment(cfg, tmp_path, threads=1)
    for rel in ("reports/singles.csv", "reports/ensembles.csv",
                "reports/best_attack.csv", "reports/selection.csv",
                "reports/diversity_pgd-ce.csv", "pools/pool.csv",
                "manifest.json", "timing.json",
                "reports/figures/singles.png", "reports/figures/ensembles.png",
                "reports/figures/selection.png",
                "reports/figures/diversity_pgd-ce.png"):
        assert (tmp_path / rel).exists(), rel
    # models persisted per repeat, loadable and bit-identical to memory
    net = nc.load_network(tmp_path / "models" / "a_r0.net")
    assert net.layer_dims == (2, 4, 2)
    assert report.selected_subset is not None


def test_report_complete_and_accuracies_bounded(tmp_path):
    cfg = parse_config(tiny_doc())
    run_experiment(cfg, tmp_path, threads=1)
    rows = read_csv(tmp_path / "reports" / "ensembles.csv")
    # every configured (ensemble, attack) pair appears exactly once
    seen = {(r["ensemble"], r["attack"]) for r in rows}
    assert len(rows) == len(seen) == len(cfg.ensembles) * len(cfg.ensemble_attacks)
    for r in rows:
        acc = float(r["accuracy_mean"])
        assert 0.0 <= acc <= 1.0
        assert int(r["n_points"]) == 12 and int(r["repeats"]) == 2


def test_best_attack_is_min_over_attack_columns(tmp_path):
    cfg = parse_config(tiny_doc())
    run_experiment(cfg, tmp_path, threads=1)
    rows = read_csv(tmp_path / "reports" / "ensembles.csv")
    best = {r["ensemble"]: r for r in read_csv(tmp_path / "reports" / "best_attack.csv")}
    for label in {r["ensemble"] for r in rows}:
        means = [float(r["accuracy_mean"]) for r in rows if r["ensemble"] == label]
        assert float(best[label]["accuracy_mean"]) == pytest.approx(min(means))


def test_single_model_single_attack_cell(tmp_path):
    doc = tiny_doc(repeats=1, ensembles=[["a"]], ensemble_attacks=["ls-ce"],
                   selection=None, diversity=None)
    cfg = parse_config(doc)
    report = run_experiment(cfg, tmp_path, threads=1)
    assert len(report.ensembles) == 1
    row = report.ensembles[0]
    assert row["ensemble"] == "a" and row["attack"] == "ls-ce"
    assert 0.0 <= float(row["accuracy_mean"]) <= 1.0
    assert float(row["accuracy_std"]) == 0.0


def test_fixed_repeat_seeds_zero_std(tmp_path):
    cfg = parse_config(tiny_doc(vary_seeds_across_repeats=False))
    report = run_experiment(cfg, tmp_path, threads=1)
    for row in report.singles + report.ensembles:
        assert float(row["accuracy_std"]) == 0.0


def test_rerun_and_thread_count_reproduce_reports(tmp_path):
    cfg = parse_config(tiny_doc())
    run_experiment(cfg, tmp_path / "r1", threads=1)
    run_experiment(cfg, tmp_path / "r2", threads=1)
    run_experiment(cfg, tmp_path / "r3", threads=4)
    names = ["reports/singles.csv", "reports/ensembles.csv",
             "reports/best_attack.csv", "reports/selection.csv",
             "reports/diversity_pgd-ce.csv", "pools/pool.csv", "manifest.json"]
    for rel in names:
        a = (tmp_path / "r1" / rel).read_bytes()
        assert a == (tmp_path / "r2" / rel).read_bytes(), rel
        assert a == (tmp_path / "r3" / rel).read_bytes(), rel


def test_failed_cell_marks_report_and_continues(tmp_path, monkeypatch):
    from votecrest import experiment as ex
    from votecrest.errors import AttackError

    real = ex.ea.make_ensemble_attack

    def flaky(name, *args, **kwargs):
        if name == "wa-cw":
            def boom(ens, x, y):
                raise AttackError("synthetic failure")
            return boom
        return real(name, *args, **kwargs)

    monkeypatch.setattr(ex.ea, "make_ensemble_attack", flaky)
    cfg = parse_config(tiny_doc(selection=None, diversity=None))
    report = run_experiment(cfg, tmp_path, threads=1)
    by_attack = {r["attack"]: r for r in report.ensembles}
    assert by_attack["wa-cw"]["accuracy_mean"] == "failed"
    assert by_attack["ls-ce"]["accuracy_mean"] != "failed"
    rows = read_csv(tmp_path / "reports" / "ensembles.csv")
    assert {r["attack"] for r in rows} == {"ls-ce", "wa-cw"}


def test_parallel_robust_accuracy_thread_invariant():
    cfg = parse_config(tiny_doc())
    run = ExperimentRun(cfg, "/tmp/votecrest-scratch-threadcheck", threads=1)
    model = run.model(cfg.models[0], 0)
    from votecrest import base_attacks as ba
    attack = ba.make_single_model_attack(
        "pgd-ce", run.budget(), run.schedule("x"), kappa=0.0)
    pairs = list(run.eval_set)
    one = parallel_robust_accuracy(lambda z: nc.predict_label(model, z), pairs,
                                   lambda x, y: attack(model, x, y), threads=1)
    many = parallel_robust_accuracy(lambda z: nc.predict_label(model, z), pairs,
                                    lambda x, y: attack(model, x, y), threads=8)
    assert one == many


def test_manifest_contents(tmp_path):
    cfg = parse_config(tiny_doc())
    run_experiment(cfg, tmp_path, threads=1)
    with open(tmp_path / "manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["experiment"] == "tiny"
    assert manifest["seed"] == 99
    assert manifest["model_seeds"] == {"a": 1, "b": 2}
    assert "reports/singles.csv" in manifest["files"]
    assert manifest["epsilon"] == 0.08
