"""Operator entry point: stage-gated pipelines from corpus generation to
the final report.

Stages communicate through files only.  Every stage embeds the resolved
config hash in its outputs and refuses to consume artifacts produced under
a different config unless forced, which keeps the shared data partition
tamper-evident across the whole benchmark.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dataset, llmclient, preprocess, reasoning
from .config import RunConfig, load_config, save_config
from .core import ConfigurationError, FaultType
from .diagnosis import Task, render_report, run_benchmark
from .diagnosis.benchmark import FeatureTable, load_results, save_results
from .telemetry import MODALITIES


class StageError(RuntimeError):
    pass


def _require(path: Path, hint: str) -> Path:
    if not Path(path).exists():
        raise StageError(f"missing required input {path} ({hint})")
    return Path(path)


def _check_hash(found: str, cfg: RunConfig, source: str, force: bool) -> None:
    if found != cfg.data_hash():
        msg = (f"config hash mismatch: {source} was produced under data hash {found}, "
               f"current config resolves to {cfg.data_hash()}")
        if not force:
            raise StageError(msg + " (pass --force to proceed anyway)")
        print(f"warning: {msg}; continuing due to --force", file=sys.stderr)


def _load_stage_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.corpus.base_seed = args.seed
    return cfg


# --------------------------------------------------------------------------
# Stages
# --------------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = _load_stage_config(args)
    out = Path(args.out)
    manifest = dataset.generate_corpus(cfg, out, progress=not args.quiet)
    save_config(cfg, out / "config.json")
    print(f"generated {len(manifest.samples)} samples into {out} "
          f"(config {manifest.config_hash})")
    return 0


def cmd_split(args) -> int:
    corpus = Path(args.corpus)
    _require(corpus / "manifest.json", "run `generate` first")
    cfg = load_config(args.config if args.config else corpus / "config.json")
    manifest = dataset.load_manifest(corpus)
    _check_hash(manifest.data_hash, cfg, "manifest.json", args.force)
    train, test = dataset.split_corpus(manifest, cfg.split.ratio, cfg.split.seed)
    dataset.save_split(corpus, train, test, cfg.split.ratio, cfg.split.seed, cfg.data_hash())
    print(f"split {len(train)}/{len(test)} (ratio {cfg.split.ratio})")
    return 0


def cmd_preprocess(args) -> int:
    corpus = Path(args.corpus)
    _require(corpus / "manifest.json", "run `generate` first")
    _require(corpus / "split.json", "run `split` first")
    cfg = load_config(args.config if args.config else corpus / "config.json")
    manifest = dataset.load_manifest(corpus)
    _check_hash(manifest.data_hash, cfg, "manifest.json", args.force)
    split = dataset.load_split(corpus)
    _check_hash(split["data_hash"], cfg, "split.json", args.force)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    duration = manifest.duration_s
    with_seq = bool(args.sequences or cfg.preprocess.export_modalities)
    norm = preprocess.fit_normalizer(dataset.iter_samples(corpus, split["train"]),
                                     duration, with_sequences=with_seq)
    (out / "normalizer.json").write_text(json.dumps(norm.to_dict()) + "\n")
    views = [preprocess.aggregate_features(s, norm, duration)
             for s in dataset.iter_samples(corpus)]
    preprocess.export_features_csv(views, out / "features.csv")
    seq_len = cfg.preprocess.sequence_length or preprocess.default_sequence_length(
        [duration] * len(manifest.samples))
    meta = {"config_hash": cfg.hash(), "data_hash": cfg.data_hash(), "duration_s": duration,
            "n_nodes": manifest.n_nodes, "sequence_length": seq_len,
            "columns": views[0].columns if views else []}
    (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    export_mods = args.sequences.split(",") if args.sequences else cfg.preprocess.export_modalities
    for mod in export_mods:
        if mod not in MODALITIES:
            raise StageError(f"unknown sequence export modality {mod!r}")
        path = out / f"sequences_{mod}.jsonl"
        with path.open("w") as fh:
            for s in dataset.iter_samples(corpus):
                view = preprocess.to_sequence(s, seq_len, norm, duration, [mod])
                preprocess.export_sequences_jsonl(fh, s, view)
        print(f"exported {path}")
    print(f"preprocessed {len(views)} samples into {out}")
    return 0


def cmd_bench(args) -> int:
    corpus = Path(args.corpus)
    prep = Path(args.prep)
    _require(prep / "features.csv", "run `preprocess` first")
    _require(corpus / "split.json", "run `split` first")
    cfg = load_config(args.config if args.config else corpus / "config.json")
    meta = json.loads(_require(prep / "meta.json", "run `preprocess` first").read_text())
    _check_hash(meta["data_hash"], cfg, "preprocess meta", args.force)
    split = dataset.load_split(corpus)
    manifest = dataset.load_manifest(corpus)
    table = FeatureTable.from_csv(prep / "features.csv")
    labels = {e["id"]: e for e in manifest.samples}
    methods = args.methods.split(",") if args.methods else cfg.bench.methods
    tasks = [Task(t) for t in (args.tasks.split(",") if args.tasks else cfg.bench.tasks)]
    if args.modalities:
        modality_sets = [m.split("+") for m in args.modalities.split(",")]
    else:
        modality_sets = cfg.bench.modality_sets
    params = {
        "logreg": {"lr": cfg.baselines.logreg.learning_rate,
                   "epochs": cfg.baselines.logreg.epochs,
                   "l2": cfg.baselines.logreg.l2},
        "knn": {"k": cfg.baselines.knn.k},
        "dtree": {"max_depth": cfg.baselines.dtree.max_depth,
                  "min_samples_leaf": cfg.baselines.dtree.min_samples_leaf},
        "mlp": {"hidden_units": cfg.baselines.mlp.hidden_units,
                "lr": cfg.baselines.mlp.learning_rate,
                "epochs": cfg.baselines.mlp.epochs,
                "l2": cfg.baselines.mlp.l2,
                "seed": cfg.baselines.mlp.seed},
    }
    records = run_benchmark(table, labels, split["train"], split["test"],
                            methods, modality_sets, tasks, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_results(records, out / "results.jsonl")
    (out / "meta.json").write_text(json.dumps(
        {"config_hash": cfg.hash(), "data_hash": cfg.data_hash(),
         "averaging": "detection: positive-class; multi-class: macro P/R, F1 harmonic"},
        indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(records)} records to {out / 'results.jsonl'}")
    return 0


def cmd_llm_extract(args) -> int:
    corpus = Path(args.corpus)
    prep = Path(args.prep)
    _require(prep / "normalizer.json", "run `preprocess` first")
    _require(corpus / "split.json", "run `split` first")
    cfg = load_config(args.config if args.config else corpus / "config.json")
    meta = json.loads(_require(prep / "meta.json", "run `preprocess` first").read_text())
    _check_hash(meta["data_hash"], cfg, "preprocess meta", args.force)
    manifest = dataset.load_manifest(corpus)
    norm = preprocess.NormStats.from_dict(json.loads((prep / "normalizer.json").read_text()))
    space = cfg.features.space
    endpoint = cfg.llm.endpoint
    if args.endpoint:
        endpoint.base_url = args.endpoint
    subset = llmclient.stratified_subset(manifest.samples, cfg.llm.subset_fraction, cfg.llm.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    audit = llmclient.AuditLog(path=out / "audit.jsonl")
    modality_tracks = [m.split("+") for m in args.modalities.split(",")] if args.modalities \
        else cfg.llm.modalities
    duration = manifest.duration_s
    for mods in modality_tracks:
        mods = sorted(mods, key=MODALITIES.index)
        name = "+".join(mods)
        path = out / f"llm_features_{'_'.join(mods)}.jsonl"
        n_done = 0
        with path.open("w") as fh:
            for sample in dataset.iter_samples(corpus, subset):
                dv = preprocess.discretize(sample, norm, duration)
                bundle = llmclient.build_prompts(sample, dv, mods, space)
                responses = llmclient.query(endpoint, bundle, space, audit=audit,
                                            mock_seed=cfg.llm.seed, mock_noise=cfg.llm.mock_noise)
                parsed = {n: r.parsed for n, r in responses.items() if r.parsed is not None}
                if not parsed:
                    continue
                scores, pred_node = llmclient.aggregate_nodes(parsed)
                fh.write(json.dumps({
                    "id": sample.id,
                    "modalities": mods,
                    "scores": [round(float(x), 6) for x in scores],
                    "predicted_node": pred_node,
                    "statuses": {str(n): responses[n].parse_status for n in sorted(responses)},
                }, separators=(",", ":"), sort_keys=True) + "\n")
                n_done += 1
        print(f"extracted {n_done} samples for modality set {name} -> {path}")
    (out / "meta.json").write_text(json.dumps(
        {"config_hash": cfg.hash(), "data_hash": cfg.data_hash(), "subset_size": len(subset),
         "endpoint": endpoint.base_url}, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_reason_eval(args) -> int:
    corpus = Path(args.corpus)
    llm_dir = Path(args.llm)
    cfg = load_config(args.config if args.config else corpus / "config.json")
    meta = json.loads(_require(llm_dir / "meta.json", "run `llm-extract` first").read_text())
    _check_hash(meta["data_hash"], cfg, "llm-extract meta", args.force)
    split = dataset.load_split(corpus)
    manifest = dataset.load_manifest(corpus)
    train_ids = set(split["train"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "features.json").write_text(json.dumps(cfg.features.to_dict(), indent=1, sort_keys=True) + "\n")
    mapping = cfg.features
    summary: dict[str, dict] = {}
    distill_records = []
    eval_lines = []
    for path in sorted(llm_dir.glob("llm_features_*.jsonl")):
        rows = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        if not rows:
            continue
        name = "+".join(rows[0]["modalities"])
        truth: dict[str, np.ndarray] = {}
        scores: dict[str, np.ndarray] = {}
        for row in rows:
            sample = dataset.load_sample(corpus, row["id"])
            warnings = sample.bundle.warning or []
            truth[row["id"]] = reasoning.build_ground_truth(warnings, sample.labels.fault_type, mapping)
            scores[row["id"]] = np.array(row["scores"])
        tr = [sid for sid in scores if sid in train_ids]
        ev = [sid for sid in scores if sid not in train_ids]
        if not tr or not ev:
            raise StageError(f"subset for {name} misses one side of the split")
        tau_train = reasoning.calibrate_thresholds([(scores[s], truth[s]) for s in tr])
        tau_eval = reasoning.calibrate_thresholds([(scores[s], truth[s]) for s in ev])
        per_sample = {}
        for sid in ev:
            pred = reasoning.binarize(scores[sid], tau_train)
            ep, er, ef1 = reasoning.explanation_scores(pred, truth[sid])
            per_sample[sid] = (ep, er, ef1)
            eval_lines.append({"id": sid, "modalities": name, "ep": round(ep, 6),
                               "er": round(er, 6), "ef1": round(ef1, 6)})
        ef1_eval_tau = [reasoning.explanation_scores(
            reasoning.binarize(scores[sid], tau_eval), truth[sid])[2] for sid in ev]
        summary[name] = {
            "n_eval": len(ev),
            "ef1_train_tau": round(float(np.mean([v[2] for v in per_sample.values()])), 6),
            "ef1_eval_tau": round(float(np.mean(ef1_eval_tau)), 6),
            "tau_train": [round(float(t), 6) for t in tau_train],
            "tau_eval": [round(float(t), 6) for t in tau_eval],
        }
        # distillation: downstream classifier on the extracted features
        from .diagnosis.metrics import FAULT_CLASS
        labels = {e["id"]: FAULT_CLASS[FaultType(e["fault_type"])] for e in manifest.samples}
        _, record = llmclient.distill(scores, labels, [s for s in tr], [s for s in ev],
                                      args.distill_kind)
        distill_records.append(type(record)(method=record.method, modalities=tuple(name.split("+")),
                                            task=record.task, accuracy=record.accuracy,
                                            precision=record.precision, recall=record.recall,
                                            f1=record.f1))
    with (out / "reasoning_eval.jsonl").open("w") as fh:
        for line in sorted(eval_lines, key=lambda r: (r["modalities"], r["id"])):
            fh.write(json.dumps(line, separators=(",", ":"), sort_keys=True) + "\n")
    (out / "summary.json").write_text(json.dumps(
        {"config_hash": cfg.hash(), "data_hash": cfg.data_hash(), "modality_sets": summary,
         "calibration": "thresholds fitted on training pairs; eval-fitted kept for reference"},
        indent=1, sort_keys=True) + "\n")
    save_results(distill_records, out / "distill_results.jsonl")
    for name, entry in sorted(summary.items()):
        print(f"reasoning[{name}]: EF1 {entry['ef1_train_tau']:.3f} "
              f"(eval-calibrated {entry['ef1_eval_tau']:.3f}) over {entry['n_eval']} samples")
    return 0


def cmd_report(args) -> int:
    records = []
    for path in args.results:
        records.extend(load_results(_require(Path(path), "benchmark results file")))
    reasoning_summary = None
    if args.reasoning:
        payload = json.loads(_require(Path(args.reasoning), "reason-eval summary").read_text())
        reasoning_summary = payload.get("modality_sets")
    note = f"Config hash: {load_config(args.config).hash()}" if args.config else ""
    text = render_report(records, reasoning_summary, note)
    Path(args.out).write_text(text)
    print(f"wrote report with {len(records)} records to {args.out}")
    return 0


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wifidiag",
        description="Deterministic Wi-Fi fault simulator and diagnosis benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", default=None, help="run config JSON (defaults when omitted)")
        p.add_argument("--force", action="store_true", help="ignore config hash mismatches")
        if needs_out:
            p.add_argument("--out", required=True)

    p = sub.add_parser("generate", help="generate a corpus")
    common(p)
    p.add_argument("--seed", type=int, default=None, help="override the corpus base seed")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("split", help="write the shared train/test split")
    common(p, needs_out=False)
    p.add_argument("--corpus", required=True)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("preprocess", help="fit normalizer, export features and sequences")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--sequences", default=None,
                   help="comma-separated modalities to export as sequences")
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("bench", help="run the baseline benchmark grid")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--prep", required=True)
    p.add_argument("--methods", default=None, help="comma-separated subset of methods")
    p.add_argument("--modalities", default=None,
                   help="comma-separated modality sets, e.g. flow,warning,flow+warning")
    p.add_argument("--tasks", default=None, help="comma-separated subset of tasks")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("llm-extract", help="extract operational features via the LLM track")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--prep", required=True)
    p.add_argument("--endpoint", default=None, help="override endpoint base URL (`mock` stays offline)")
    p.add_argument("--modalities", default=None)
    p.set_defaults(fn=cmd_llm_extract)

    p = sub.add_parser("reason-eval", help="score reasoning consistency of extracted features")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--llm", required=True)
    p.add_argument("--distill-kind", default="dtree")
    p.set_defaults(fn=cmd_reason_eval)

    p = sub.add_parser("report", help="merge results files into the benchmark report")
    p.add_argument("--config", default=None)
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--reasoning", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (StageError, ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
