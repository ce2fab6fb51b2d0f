"""End-to-end experiment driver: train a pool, attack it, select, measure.

The harness owns all concurrency: independent per-example attacks fan out to
a bounded thread pool and reduce in input order, so ``threads=1`` and
``threads=8`` produce byte-identical reports. Every stage writes its own CSV
section; the full pipeline also emits a JSON manifest and rendered figures.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, base_attacks as ba, diversity as dv, ensemble_attacks as ea
from . import figures, netcore, selection as se, training as tr
from .config import ExperimentConfig, ModelSpec
from .datasets import gen_dataset
from .ensemble import Ensemble, majority_vote
from .errors import VotecrestError
from .seeding import derive_seed

ACCURACY_COLUMNS = ["ensemble", "attack", "accuracy_mean", "accuracy_std",
                    "n_points", "repeats"]

FAILED = "failed"


def map_ordered(fn, items, threads: int = 1) -> list:
    """Apply fn to items, optionally in a thread pool; results keep input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def parallel_robust_accuracy(decision, pairs, attack, threads: int = 1) -> float:
    """robust_accuracy with the per-example attacks fanned out to threads."""
    pairs = list(pairs)
    hits = map_ordered(lambda p: decision(attack(p[0], p[1]).x_adv) == p[1],
                       pairs, threads)
    return sum(hits) / len(pairs)


@dataclass
class Report:
    singles: list = field(default_factory=list)      # dict rows
    ensembles: list = field(default_factory=list)    # dict rows
    best_attack: list = field(default_factory=list)  # dict rows
    score_table: se.ScoreTable | None = None
    selected_subset: tuple | None = None
    diversity: dict = field(default_factory=dict)    # attack name -> CosineMatrix
    manifest: dict = field(default_factory=dict)


class ExperimentRun:
    """Holds datasets and lazily trained/loaded models for one experiment."""

    def __init__(self, config: ExperimentConfig, out_dir, threads: int = 1):
        self.config = config
        self.out = str(out_dir)
        self.threads = threads
        c = config.dataset
        self.train_set = gen_dataset(c.kind, c.d, c.n_classes, c.n_per_class,
                                     c.margin, c.seed,
                                     support_radius=c.support_radius, split=0)
        self.eval_set = gen_dataset(c.kind, c.d, c.n_classes, c.eval_n_per_class,
                                    c.margin, c.seed,
                                    support_radius=c.support_radius, split=1)
        self._models: dict[tuple[str, int], netcore.Network] = {}
        for sub in ("models", "pools", "reports", os.path.join("reports", "figures")):
            os.makedirs(os.path.join(self.out, sub), exist_ok=True)
        self.written: list[str] = []

    # -- model pool ---------------------------------------------------------

    def _rep_key(self, rep: int) -> int:
        return rep if self.config.vary_seeds_across_repeats else 0

    def model_path(self, spec: ModelSpec, rep: int) -> str:
        return os.path.join(self.out, "models", f"{spec.name}_r{rep}.net")

    def _train_one(self, spec: ModelSpec, rep: int) -> netcore.Network:
        cfg = self.config
        dims = [cfg.dataset.d] + list(spec.hidden) + [cfg.dataset.n_classes]
        rep_key = self._rep_key(rep)
        net = netcore.init_network(dims, derive_seed(cfg.seed, "init", spec.seed, rep_key))
        inner = None
        if spec.objective != "standard":
            inner = tr.InnerSchedule(eps=cfg.epsilon, steps=cfg.train.inner_steps)
        objective = tr.TrainObjective(spec.objective, beta=spec.beta, inner=inner)
        schedule = tr.TrainSchedule(
            epochs=cfg.train.epochs, batch_size=cfg.train.batch_size,
            learning_rate=cfg.train.learning_rate,
            seed=derive_seed(cfg.seed, "train", spec.seed, rep_key))
        return tr.train(net, self.train_set, objective, schedule)

    def model(self, spec: ModelSpec, rep: int) -> netcore.Network:
        key = (spec.name, rep)
        if key not in self._models:
            path = self.model_path(spec, rep)
            if os.path.exists(path):
                self._models[key] = netcore.load_network(path)
            else:
                self._models[key] = self._train_one(spec, rep)
                netcore.save_network(self._models[key], path)
                self._note(path)
        return self._models[key]

    def pool(self, rep: int) -> list[netcore.Network]:
        return [self.model(spec, rep) for spec in self.config.models]

    # -- attack plumbing ----------------------------------------------------

    def budget(self) -> ba.PerturbationBudget:
        return ba.PerturbationBudget(self.config.epsilon)

    def schedule(self, *context) -> ba.AttackSchedule:
        cfg = self.config
        return ba.AttackSchedule(
            steps=cfg.attack_steps, step_size=cfg.attack_step_size,
            restarts=cfg.attack.restarts, random_start=cfg.attack.random_start,
            seed=derive_seed(cfg.seed, "attack", *context))

    def _note(self, path: str) -> None:
        self.written.append(os.path.relpath(path, self.out))

    # -- stages -------------------------------------------------------------

    def singles_rows(self) -> list[dict]:
        cfg = self.config
        rows = []
        pairs = list(self.eval_set)
        for spec in cfg.models:
            for attack_name in cfg.single_attacks:
                accs = []
                for rep in range(cfg.repeats):
                    model = self.model(spec, rep)
                    attack = ba.make_single_model_attack(
                        attack_name, self.budget(),
                        self.schedule("single", attack_name, self._rep_key(rep)),
                        kappa=cfg.attack.kappa)
                    try:
                        accs.append(parallel_robust_accuracy(
                            lambda z, m=model: netcore.predict_label(m, z),
                            pairs, lambda x, y, m=model: attack(m, x, y),
                            self.threads))
                    except VotecrestError:
                        accs.append(None)
                rows.append(_accuracy_row(spec.name, attack_name, accs, len(pairs)))
        return rows

    def ensemble_rows(self) -> list[dict]:
        cfg = self.config
        rows = []
        pairs = list(self.eval_set)
        for member_names in cfg.ensembles:
            label = "+".join(member_names)
            for attack_name in cfg.ensemble_attacks:
                accs = []
                for rep in range(cfg.repeats):
                    members = tuple(self.model(cfg.model_named(n), rep)
                                    for n in member_names)
                    ens = Ensemble(members, cfg.tie_policy, cfg.tie_seed)
                    attack = ea.make_ensemble_attack(
                        attack_name, self.budget(),
                        self.schedule("ens", attack_name, self._rep_key(rep)),
                        kappa=cfg.attack.kappa)
                    try:
                        accs.append(parallel_robust_accuracy(
                            lambda z, e=ens: majority_vote(e, z),
                            pairs, lambda x, y, e=ens: attack(e, x, y),
                            self.threads))
                    except VotecrestError:
                        accs.append(None)
                rows.append(_accuracy_row(label, attack_name, accs, len(pairs)))
        return rows

    def best_attack_rows(self, ensemble_rows) -> list[dict]:
        best: dict[str, tuple] = {}
        for row in ensemble_rows:
            if row["accuracy_mean"] == FAILED:
                continue
            mean = float(row["accuracy_mean"])
            key = row["ensemble"]
            if key not in best or mean < best[key][1]:
                best[key] = (row["attack"], mean)
        return [{"ensemble": k, "best_attack": v[0], "accuracy_mean": repr(v[1])}
                for k, v in best.items()]

    def selection_results(self):
        cfg = self.config
        sel = cfg.selection
        if sel is None:
            return None, None, None
        c = cfg.dataset
        per_class = (sel.r + c.n_classes - 1) // c.n_classes
        pool_points = gen_dataset(c.kind, c.d, c.n_classes, per_class, c.margin,
                                  c.seed, support_radius=c.support_radius,
                                  split=2).take(sel.r)
        attack = ba.make_single_model_attack(
            sel.attack, self.budget(), self.schedule("selection"),
            kappa=cfg.attack.kappa)
        models = self.pool(rep=0)
        pairs = list(pool_points)
        results = map_ordered(
            lambda job: attack(models[job[0] % len(models)], job[1][0], job[1][1]),
            list(enumerate(pairs)), self.threads)
        pool = se.AdvPool(
            np.array([r.x_adv for r in results]),
            np.array([y for _, y in pairs]),
            np.arange(len(pairs)) % len(models),
            len(models), descriptor=sel.attack)
        table = se.score_ensembles(models, pool, sel.k)
        chosen = table.subsets[int(np.argmax(table.scores))]
        pool_rows = []
        for j, ((x, y), res) in enumerate(zip(pairs, results)):
            pool_rows.append({
                "point_index": j, "source_model": j % len(models),
                "success": int(res.success),
                "linf_norm": repr(float(np.abs(res.x_adv - x).max()))})
        return table, chosen, pool_rows

    def diversity_results(self) -> dict:
        cfg = self.config
        if cfg.diversity is None:
            return {}
        models = self.pool(rep=0)
        points = list(self.eval_set)[: cfg.diversity.n_points]
        out = {}
        for attack_name in cfg.diversity.attacks:
            attack = ba.make_single_model_attack(
                attack_name, self.budget(), self.schedule("diversity", attack_name),
                kappa=cfg.attack.kappa)
            jobs = [(m, x, y) for m in models for (x, y) in points]
            deltas = map_ordered(lambda j: attack(j[0], j[1], j[2]).x_adv - j[1],
                                 jobs, self.threads)
            n, npts = len(models), len(points)
            arr = np.array(deltas).reshape(n, npts, -1)
            out[attack_name] = _cosine_from_deltas(arr)
        return out

    # -- writers ------------------------------------------------------------

    def write_accuracy_csv(self, filename: str, rows, key: str) -> str:
        path = os.path.join(self.out, "reports", filename)
        cols = [key] + ACCURACY_COLUMNS[1:]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            for row in rows:
                out = dict(row)
                out[key] = out.pop("ensemble")
                writer.writerow(out)
        self._note(path)
        return path

    def write_manifest(self, report: Report) -> str:
        import scipy
        cfg = self.config
        manifest = {
            "format": "votecrest-manifest v1",
            "experiment": cfg.name,
            "package_version": __version__,
            "numpy_version": np.__version__,
            "scipy_version": scipy.__version__,
            "preset": cfg.preset,
            "epsilon": cfg.epsilon,
            "attack_steps": cfg.attack_steps,
            "attack_step_size": cfg.attack_step_size,
            "seed": cfg.seed,
            "model_seeds": {m.name: m.seed for m in cfg.models},
            "repeats": cfg.repeats,
            "n_train": len(self.train_set),
            "n_eval": len(self.eval_set),
            "selected_subset": list(report.selected_subset)
            if report.selected_subset else None,
            "config": asdict(cfg),
            "files": sorted(self.written),
        }
        path = os.path.join(self.out, "manifest.json")
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _accuracy_row(label: str, attack: str, accs, n_points: int) -> dict:
    ok = [a for a in accs if a is not None]
    if len(ok) < len(accs):
        mean = std = FAILED
    else:
        mean = repr(float(np.mean(ok)))
        std = repr(float(np.std(ok)))
    return {"ensemble": label, "attack": attack, "accuracy_mean": mean,
            "accuracy_std": std, "n_points": n_points, "repeats": len(accs)}


def _cosine_from_deltas(deltas: np.ndarray) -> dv.CosineMatrix:
    n, npts, _ = deltas.shape
    norms = np.linalg.norm(deltas, axis=2)
    values = np.full((n, n), np.nan)
    skipped = np.zeros((n, n), dtype=np.int64)
    for a in range(n):
        for b in range(a, n):
            usable = (norms[a] > 0) & (norms[b] > 0)
            skipped[a, b] = skipped[b, a] = int((~usable).sum())
            if usable.any():
                cos = (deltas[a, usable] * deltas[b, usable]).sum(axis=1)
                cos /= norms[a, usable] * norms[b, usable]
                values[a, b] = values[b, a] = float(cos.mean())
    return dv.CosineMatrix(values, skipped, npts)


def run_experiment(config: ExperimentConfig, out_dir, threads: int = 1) -> Report:
    """Full pipeline: train pool, attack singles and ensembles, select, measure
    diversity, then write CSV tables, figures, and the manifest."""
    t0 = time.time()
    run = ExperimentRun(config, out_dir, threads)
    report = Report()

    for rep in range(config.repeats):
        run.pool(rep)

    report.singles = run.singles_rows()
    run.write_accuracy_csv("singles.csv", report.singles, key="model")

    if config.ensembles:
        report.ensembles = run.ensemble_rows()
        run.write_accuracy_csv("ensembles.csv", report.ensembles, key="ensemble")
        report.best_attack = run.best_attack_rows(report.ensembles)
        path = os.path.join(run.out, "reports", "best_attack.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["ensemble", "best_attack",
                                                    "accuracy_mean"])
            writer.writeheader()
            writer.writerows(report.best_attack)
        run._note(path)

    table, chosen, pool_rows = run.selection_results()
    if table is not None:
        report.score_table, report.selected_subset = table, chosen
        path = os.path.join(run.out, "reports", "selection.csv")
        table.to_csv(path)
        run._note(path)
        pool_path = os.path.join(run.out, "pools", "pool.csv")
        with open(pool_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["point_index", "source_model",
                                                    "success", "linf_norm"])
            writer.writeheader()
            writer.writerows(pool_rows)
        run._note(pool_path)

    report.diversity = run.diversity_results()
    names = [m.name for m in config.models]
    for attack_name, matrix in report.diversity.items():
        path = os.path.join(run.out, "reports", f"diversity_{attack_name}.csv")
        dv.write_cosine_csv(matrix, names, path)
        run._note(path)

    _render_figures(run, report, names)
    with open(run.write_manifest(report)) as fh:
        report.manifest = json.load(fh)
    with open(os.path.join(run.out, "timing.json"), "w") as fh:
        json.dump({"runtime_seconds": time.time() - t0}, fh)
    return report


def _render_figures(run: ExperimentRun, report: Report, model_names) -> None:
    figdir = os.path.join(run.out, "reports", "figures")

    def bar_rows(rows):
        out = []
        for r in rows:
            if r["accuracy_mean"] == FAILED:
                out.append((r["ensemble"], r["attack"], None, None))
            else:
                out.append((r["ensemble"], r["attack"],
                            float(r["accuracy_mean"]), float(r["accuracy_std"])))
        return out

    if report.singles:
        run._note(figures.accuracy_bars(
            bar_rows(report.singles), os.path.join(figdir, "singles.png"),
            title="Single-model robust accuracy"))
    if report.ensembles:
        run._note(figures.accuracy_bars(
            bar_rows(report.ensembles), os.path.join(figdir, "ensembles.png"),
            title="Ensemble robust accuracy"))
    for attack_name, matrix in report.diversity.items():
        run._note(figures.diversity_heatmap(
            matrix.values, model_names,
            os.path.join(figdir, f"diversity_{attack_name}.png"),
            title=f"Perturbation cosine ({attack_name})"))
    if report.score_table is not None:
        labels = ["-".join(map(str, s)) for s in report.score_table.subsets]
        run._note(figures.selection_scores(
            labels, list(map(int, report.score_table.scores)),
            list(map(int, report.score_table.ranks)),
            os.path.join(figdir, "selection.png")))
