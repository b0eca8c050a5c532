"""Batch experiment runner.

    python -m danlpe {generate,featurize,train,estimate,report} --config FILE
                     [--out DIR] [--seed-override N] [--method LIST]

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .baselines import bbse_estimate
from .config import ConfigError, ExperimentConfig, TaskConfig, load_config, require_paths
from .data import (
    LabeledDataset,
    UnlabeledDataset,
    generate_synthetic,
    label_by_rating,
    load_dataset,
    make_synthetic_spec,
    save_dataset,
    split_validation,
)
from .distributions import empirical_prior
from .evaluation import (
    METHODS,
    RunResult,
    accuracy,
    build_report,
    l2_distance,
    macro_f1,
    reports_to_csv,
    reports_to_table,
)
from .lpe import LpeConfig, estimate_proportions
from .network import load_checkpoint, predict, save_checkpoint
from .text import STOPWORDS, bow_pipeline, load_corpus
from .training import (
    TrainReport,
    dan_lpe,
    dann_baseline,
    dnn_baseline,
    lpe_diagnostics,
)


class RunFailure(Exception):
    def __init__(self, run_id: str, cause: BaseException):
        super().__init__(f"run {run_id} failed: {type(cause).__name__}: {cause}")
        self.run_id = run_id


def slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def _dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _synthetic_seed(task: TaskConfig, seed: int) -> int:
    return task.synthetic.seed if task.synthetic.seed is not None else seed


def load_task(task: TaskConfig, seed: int) -> tuple[LabeledDataset, UnlabeledDataset]:
    if task.synthetic is not None:
        s = task.synthetic
        spec = make_synthetic_spec(s.L, s.d, s.alpha, s.beta, s.n_source, s.n_target,
                                   s.separation, s.scale, _synthetic_seed(task, seed))
        return generate_synthetic(spec)
    src = load_dataset(task.source).dataset
    tgt = load_dataset(task.target).dataset
    if not isinstance(src, LabeledDataset):
        raise ValueError(f"{task.source}: source dataset must be labeled")
    if isinstance(tgt, LabeledDataset):
        tgt = UnlabeledDataset(tgt.features, tgt.L, tgt.labels, tgt.ids)
    if tgt.L != src.L or tgt.d != src.d:
        raise ValueError("source and target datasets disagree on L or d")
    return src, tgt


# --- generate ----------------------------------------------------------------


def cmd_generate(cfg: ExperimentConfig) -> int:
    out = Path(cfg.output_dir) / "data"
    chash = cfg.config_hash()
    for task in cfg.tasks:
        if task.synthetic is None:
            continue
        seeds = [task.synthetic.seed] if task.synthetic.seed is not None else cfg.seeds
        for seed in seeds:
            src, tgt = load_task(task, seed)
            d = out / slug(task.name)
            if task.synthetic.seed is None:
                d = d / f"seed{seed}"
            d.mkdir(parents=True, exist_ok=True)
            meta = {"seed": seed, "config_hash": chash, "task": task.name}
            save_dataset(src, d / "source.jsonl", "source", meta)
            save_dataset(tgt, d / "target.jsonl", "target", meta)
            print(f"wrote {d}")
    return 0


# --- featurize ---------------------------------------------------------------


def cmd_featurize(cfg: ExperimentConfig) -> int:
    fc = cfg.featurize
    if fc is None:
        raise ConfigError(["featurize: section required for this subcommand"])
    require_paths([(f"featurize.corpora.{k}", v) for k, v in fc.corpora.items()]
                  + [("featurize.stopwords", fc.stopwords)])
    stop = STOPWORDS
    if fc.stopwords:
        stop = frozenset(Path(fc.stopwords).read_text().split())
    corpora, kept = {}, {}
    for domain, path in fc.corpora.items():
        entities = []
        for ent in load_corpus(path):
            label = ent.label
            if label is None and ent.rating is not None:
                label = label_by_rating(ent.rating)
                if label is None:
                    continue
            entities.append((ent, label))
        kept[domain] = entities
        corpora[domain] = [e.reviews for e, _ in entities]
    feats = bow_pipeline(corpora, stop, fc.vocab_size, fc.per_domain_common)
    out = Path(cfg.output_dir) / "features"
    out.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash()
    labels_all = [lab for ents in kept.values() for _, lab in ents if lab is not None]
    L = max(2, max(labels_all) + 1) if labels_all else 2
    for domain, entities in kept.items():
        x = feats.features[domain]
        labels = [lab for _, lab in entities]
        ids = [e.id for e, _ in entities]
        if all(lab is not None for lab in labels):
            ds = LabeledDataset(x, np.array(labels, dtype=np.int64), L, ids)
        else:
            ds = UnlabeledDataset(x, L, None, ids)
        save_dataset(ds, out / f"{slug(domain)}.jsonl", domain,
                     {"config_hash": chash, "seed": cfg.seeds[0]})
    _dump({"config_hash": chash, "seed": cfg.seeds[0], "vocabulary": feats.vocabulary,
           "requested_size": fc.vocab_size, "actual_size": len(feats.vocabulary)},
          out / "vocabulary.json")
    print(f"vocabulary of {len(feats.vocabulary)} tokens; wrote {out}")
    return 0


# --- train -------------------------------------------------------------------


def _report_json(rep: TrainReport, meta: dict) -> dict:
    curves = {k: v.tolist() for k, v in rep.loss_curves.items()}
    traj = [{"iteration": it, "gamma": g.tolist(), "J_gamma": None if np.isnan(j) else j}
            for it, g, j in rep.gamma_trajectory]
    return {**meta, "method": rep.method, "gamma_final": rep.gamma_final.tolist(),
            "gamma_trajectory": traj, "best_iteration": rep.best_iteration,
            "stopped_iteration": rep.stopped_iteration, "loss_curves": curves}


class _Log:
    def __init__(self, path: Path, header: dict):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.fh = open(path, "w", encoding="utf-8")
        self(dict(event="start", **header))

    def __call__(self, event: dict) -> None:
        self.fh.write(json.dumps(event, sort_keys=True) + "\n")

    def close(self):
        self.fh.close()


def run_one(cfg: ExperimentConfig, task_index: int, seed: int) -> dict:
    """Train the configured methods for one (task, seed); returns the result record."""
    task = cfg.tasks[task_index]
    run_id = f"{task.name}/seed{seed}"
    try:
        return _run_one(cfg, task, seed, run_id)
    except Exception as exc:
        raise RunFailure(run_id, exc) from exc


def _run_one(cfg: ExperimentConfig, task: TaskConfig, seed: int, run_id: str) -> dict:
    chash = cfg.config_hash()
    hp = cfg.hyper(seed)
    src, tgt = load_task(task, seed)
    train, val = split_validation(src, cfg.validation_fraction, seed)
    out = Path(cfg.output_dir) / "runs" / slug(task.name) / f"seed{seed}"
    out.mkdir(parents=True, exist_ok=True)
    meta = {"task": task.name, "seed": seed, "config_hash": chash, "run_id": run_id}
    L = src.L
    scorer = macro_f1 if cfg.metric_name == "macro_f1" else (lambda y, p, L: accuracy(y, p))

    def finish(name, rep: TrainReport, log: _Log):
        log.close()
        _dump(_report_json(rep, meta), out / f"{name}.report.json")
        save_checkpoint(rep.checkpoint, out / f"{name}.ckpt", {**meta, "method": name})

    reports: dict[str, TrainReport] = {}
    step1 = None
    for method in cfg.methods:
        if method == "bbse":
            continue
        log = _Log(out / f"{method}.log.jsonl", {**meta, "method": method})
        if method == "dnn":
            reports["dnn"] = dnn_baseline(train, val, hp, log=log)
        elif method == "dann":
            reports["dann"] = dann_baseline(train, val, tgt, hp, log=log)
        elif method == "dan_lpe":
            res = dan_lpe(train, val, tgt, hp, log=log)
            step1 = res.step1
            reports["dan_lpe"] = res.step2
            _dump(_report_json(step1, meta), out / "dan_lpe_step1.report.json")
            save_checkpoint(step1.checkpoint, out / "dan_lpe_step1.ckpt",
                            {**meta, "method": "dan_lpe_step1"})
        finish(method, reports[method], log)

    result = {**meta, "metric": cfg.metric_name, "metrics": {}, "metrics_best": {}}
    beta_hat = None
    if tgt.hidden_labels is not None:
        beta_hat = empirical_prior(tgt.hidden_labels, L).probs
        for name, rep in reports.items():
            result["metrics"][name] = scorer(tgt.hidden_labels, predict(rep.checkpoint, tgt.features), L)
            result["metrics_best"][name] = scorer(tgt.hidden_labels,
                                                  predict(rep.best_params, tgt.features), L)
    alpha_hat = empirical_prior(src.labels, L).probs
    result["alpha_hat"] = alpha_hat.tolist()
    result["beta_hat"] = None if beta_hat is None else beta_hat.tolist()
    if step1 is not None:
        result["gamma_dl"] = step1.gamma_final.tolist()
    if "bbse" in cfg.methods:
        clf = step1.checkpoint if step1 is not None else None
        if clf is None:
            clf = reports["dnn"].checkpoint if "dnn" in reports else dnn_baseline(train, val, hp).checkpoint
        joint, _, q_hat = lpe_diagnostics(clf, train, tgt)
        bb = bbse_estimate(joint, q_hat, empirical_prior(train.labels, L))
        result["gamma_bbse"] = bb.beta_hat.tolist()
        result["bbse_clipped"] = bb.clipped
    if beta_hat is not None:
        result["dist_source"] = l2_distance(beta_hat, alpha_hat)
        if "gamma_dl" in result:
            result["dist_lpe"] = l2_distance(beta_hat, result["gamma_dl"])
        if "gamma_bbse" in result:
            result["dist_bbse"] = l2_distance(beta_hat, result["gamma_bbse"])
    _dump(result, out / "result.json")
    return result


def cmd_train(cfg: ExperimentConfig) -> int:
    for task in cfg.tasks:
        require_paths([(f"tasks[{task.name}].source", task.source),
                       (f"tasks[{task.name}].target", task.target)])
    jobs = [(i, seed) for i in range(len(cfg.tasks)) for seed in cfg.seeds]
    start = time.perf_counter()
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(run_one, cfg, i, s) for i, s in jobs]
            results = [f.result() for f in futures]
    else:
        results = [run_one(cfg, i, s) for i, s in jobs]
    for r in results:
        print(f"{r['run_id']}: " + ", ".join(f"{k}={v:.4f}" for k, v in r["metrics"].items()))
    print(f"{len(results)} runs in {time.perf_counter() - start:.1f}s")
    return 0


# --- estimate ----------------------------------------------------------------


def cmd_estimate(cfg: ExperimentConfig) -> int:
    ec = cfg.estimate
    if ec is None:
        raise ConfigError(["estimate: section required for this subcommand"])
    require_paths([("estimate.checkpoint", ec.checkpoint)])
    for task in cfg.tasks:
        require_paths([(f"tasks[{task.name}].source", task.source),
                       (f"tasks[{task.name}].target", task.target)])
    params, _ = load_checkpoint(ec.checkpoint)
    chash = cfg.config_hash()
    for task in cfg.tasks:
        seed = cfg.seeds[0]
        src, tgt = load_task(task, seed)
        train, _ = split_validation(src, cfg.validation_fraction, seed)
        joint, p_cond, q_hat = lpe_diagnostics(params, train, tgt)
        out = {"task": task.name, "seed": seed, "config_hash": chash,
               "checkpoint": Path(ec.checkpoint).name, "q_hat": q_hat.tolist(),
               "confusion": p_cond.rows.tolist()}
        if "dan_lpe" in cfg.methods:
            state = estimate_proportions(p_cond, q_hat, LpeConfig(ec.lambda_L, ec.m),
                                         tol=ec.tol, max_calls=ec.max_calls)
            out["gamma_lpe"] = state.gamma.tolist()
            out["lpe_steps"] = state.step_count
            out["lpe_loss"] = state.last_loss
        if "bbse" in cfg.methods:
            bb = bbse_estimate(joint, q_hat, empirical_prior(train.labels, train.L))
            out["gamma_bbse"] = bb.beta_hat.tolist()
            out["bbse_raw_weights"] = bb.raw_weights.tolist()
            out["bbse_clipped"] = bb.clipped
        if tgt.hidden_labels is not None:
            beta_hat = empirical_prior(tgt.hidden_labels, tgt.L).probs
            out["beta_hat"] = beta_hat.tolist()
            for key in ("gamma_lpe", "gamma_bbse"):
                if key in out:
                    out[f"dist_{key[6:]}"] = l2_distance(beta_hat, out[key])
        path = Path(cfg.output_dir) / "estimate" / f"{slug(task.name)}.json"
        _dump(out, path)
        print(f"wrote {path}")
    return 0


# --- report ------------------------------------------------------------------


def cmd_report(cfg: ExperimentConfig) -> int:
    root = Path(cfg.output_dir) / "runs"
    chash = cfg.config_hash()
    reports = []
    for task in cfg.tasks:
        runs = []
        for path in sorted((root / slug(task.name)).glob("seed*/result.json")):
            rec = json.loads(path.read_text())
            if rec["config_hash"] != chash:
                raise RuntimeError(f"{path} was produced by config {rec['config_hash']}, "
                                   f"not {chash}; refusing to mix results")
            if rec["seed"] not in cfg.seeds:
                continue
            runs.append(RunResult(task.name, rec["seed"],
                                  {m: rec["metrics"][m] for m in METHODS if m in rec["metrics"]},
                                  rec.get("dist_lpe"), rec.get("dist_bbse"), rec.get("dist_source"),
                                  rec["config_hash"]))
        if not runs:
            raise RuntimeError(f"no results for task {task.name!r} under {root}")
        reports.append(build_report(sorted(runs, key=lambda r: r.seed), cfg.metric_name))
    out = Path(cfg.output_dir)
    (out / "report.csv").write_text(reports_to_csv(reports))
    seeds = sorted({s for rep in reports for s in rep.seeds})
    table = reports_to_table(reports) + f"config {chash}; seeds {seeds}\n"
    (out / "report.txt").write_text(table)
    print(table, end="")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "estimate": cmd_estimate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="danlpe", description="DAN-LPE experiment runner")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--seed-override", type=int, help="run this single seed instead of 'seeds'")
    p.add_argument("--method", help="comma-separated subset of dnn,dann,dan_lpe,bbse")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    methods = [m.strip() for m in args.method.split(",")] if args.method else None
    try:
        cfg = load_config(args.config, out=args.out, seed_override=args.seed_override,
                          methods=methods)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        for line in exc.problems:
            print(f"config error: {line}", file=sys.stderr)
        return 2
    except RunFailure as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
