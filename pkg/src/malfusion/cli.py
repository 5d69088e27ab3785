"""Batch entry point wiring every module into reproducible experiment runs.

Each subcommand validates its arguments, runs, writes artifacts under --out
together with a resolved config.json, and logs progress to standard error.
Exit codes: 0 success, 2 usage error, 1 runtime failure. Reruns with the
same inputs and seed produce byte-identical reports; input directories are
never written to.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import (
    DEFAULT_HOLDOUT,
    CorpusSpec,
    generate_corpus,
    load_corpus,
    make_splits,
    write_corpus,
)
from .evaluate import (
    SWEEP_GRIDS,
    case_report,
    compare_encoders,
    cross_validate,
    make_report,
    sweep,
)
from .features import FeatureTable, load_features, save_features
from .fusion import PRESET_NAMES
from .pipeline import (
    PipelineConfig,
    extract_features,
    load_extractors,
    load_split,
    run_experiment,
    save_extractors,
    save_split,
    train_components,
    train_preset,
)

log = logging.getLogger("malfusion")

PRESET_FLAGS = {name.lower().replace("_", "-"): name for name in PRESET_NAMES}
FEATURE_SET_FLAGS = ("integrated", "static", "dynamic")


def _config_from_args(args) -> PipelineConfig:
    base = (PipelineConfig.desk(seed=args.seed) if args.profile == "desk"
            else PipelineConfig(seed=args.seed))
    if getattr(args, "config", None):
        overrides = json.loads(Path(args.config).read_text())
        base = base.replace(**overrides)
    return base


def _write_resolved_config(out: Path, args, config: PipelineConfig | None) -> None:
    resolved = {"subcommand": args.command,
                "arguments": {k: v for k, v in sorted(vars(args).items())
                              if k != "command" and not callable(v)}}
    if config is not None:
        resolved["pipeline_config"] = config.to_dict()
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(resolved, indent=2,
                                                sort_keys=True, default=str))


def _corpus_split(args):
    corpus = load_corpus(args.corpus)
    if getattr(args, "split", None):
        split = load_split(args.split)
    else:
        split = make_splits(corpus, holdout=DEFAULT_HOLDOUT, seed=args.seed)
    return corpus, split


# -- subcommand bodies ------------------------------------------------------------


def _cmd_gen(args) -> int:
    spec = CorpusSpec(
        family_count=args.families, samples_per_family=args.samples_per_family,
        size_distribution=args.size_distribution, signal_channel=args.signal,
        overlap_noise=args.overlap_noise, static_vocab=args.static_vocab,
        dynamic_vocab=args.dynamic_vocab, param_vocab=args.param_vocab,
        trace_len_range=(args.trace_min, args.trace_max),
        max_params=args.max_params,
        graph_nodes_range=(args.graph_min, args.graph_max), seed=args.seed)
    corpus = generate_corpus(spec)
    out = Path(args.out)
    write_corpus(corpus, out)
    _write_resolved_config(out, args, None)
    log.info("wrote %d samples to %s", len(corpus), out)
    return 0


def _cmd_extract(args) -> int:
    config = _config_from_args(args)
    corpus, split = _corpus_split(args)
    out = Path(args.out)
    features, extractors = extract_features(corpus, split.train,
                                            split.validation, config)
    feat_dir = out / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    ids = [s.sample_id for s in corpus.samples]
    for name, matrix in features.items():
        save_features(FeatureTable(name, ids, matrix), feat_dir / f"{name}.csv")
    save_extractors(out / "models", extractors)
    save_split(out / "split.json", split)
    _write_resolved_config(out, args, config)
    log.info("extracted %d features x %d samples to %s",
             len(features), len(corpus), out)
    return 0


def _load_feature_dir(feat_dir: Path):
    tables = [load_features(path) for path in sorted(feat_dir.glob("*.csv"))]
    if not tables:
        raise FileNotFoundError(f"no feature tables under {feat_dir}")
    first = tables[0].sample_ids
    for t in tables:
        if t.sample_ids != first:
            raise ValueError(f"feature table {t.feature_name} has "
                             "mismatched sample ids")
    return first, {t.feature_name: t.matrix for t in tables}


def _cmd_train_components(args) -> int:
    config = _config_from_args(args)
    corpus = load_corpus(args.corpus)
    run_dir = Path(args.run)
    ids, features = _load_feature_dir(run_dir / "features")
    if ids != [s.sample_id for s in corpus.samples]:
        raise ValueError("feature tables do not match the corpus sample order")
    split = load_split(run_dir / "split.json")
    out = Path(args.out)
    comp_dir = out / "components"
    comp_dir.mkdir(parents=True, exist_ok=True)
    models, manifest = train_components(features, corpus.labels(), split.train,
                                        split.validation, corpus.family_count,
                                        config, jobs=args.jobs)
    paths = {}
    for name, model in models.items():
        path = comp_dir / f"component-{name}.mfc"
        model.save(path)
        paths[name] = str(path.name)
    manifest = type(manifest)(manifest.accuracies, paths)
    manifest.save(comp_dir / "manifest.json")
    lines = ["feature,validation_accuracy"]
    lines += [f"{n},{manifest.accuracies[n]!r}" for n in manifest.ascending()]
    (out / "component-accuracy.csv").write_text("\n".join(lines) + "\n")
    _write_resolved_config(out, args, config)
    log.info("trained %d components to %s", len(models), out)
    return 0


def _cmd_train_fusion(args) -> int:
    config = _config_from_args(args)
    corpus, split = _corpus_split(args)
    preset_name = PRESET_FLAGS[args.preset]
    out = Path(args.out)
    result = run_experiment(corpus, split, config, preset_name=preset_name,
                            feature_set=args.features, jobs=args.jobs)
    report = make_report(result.test_probs, result.test_labels,
                         corpus.family_count)
    out.mkdir(parents=True, exist_ok=True)
    result.fusion.save(out / f"fusion-{args.preset}-{args.features}.mfc")
    result.manifest.save(out / "manifest.json")
    (out / "report.csv").write_text(report.to_csv())
    (out / "report.txt").write_text(report.to_text())
    _write_resolved_config(out, args, config)
    log.info("%s/%s test accuracy %.4f", args.preset, args.features,
             report.accuracy)
    return 0


def _cmd_eval(args) -> int:
    config = _config_from_args(args)
    corpus = load_corpus(args.corpus)
    preset_name = PRESET_FLAGS[args.preset]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.cv:
        report = cross_validate(config, corpus, k=args.cv, seed=args.seed,
                                preset_name=preset_name,
                                feature_set=args.features, jobs=args.jobs)
        protocol = f"{args.cv}-fold cross-validation"
    else:
        split = make_splits(corpus, holdout=DEFAULT_HOLDOUT, seed=args.seed)
        result = run_experiment(corpus, split, config, preset_name=preset_name,
                                feature_set=args.features, jobs=args.jobs)
        report = make_report(result.test_probs, result.test_labels,
                             corpus.family_count)
        protocol = "fixed holdout split"
    (out / "report.csv").write_text(report.to_csv())
    (out / "report.txt").write_text(f"protocol: {protocol}\n" + report.to_text())
    _write_resolved_config(out, args, config)
    log.info("eval (%s) accuracy %.4f", protocol, report.accuracy)
    return 0


def _cmd_sweep(args) -> int:
    config = _config_from_args(args)
    corpus, split = _corpus_split(args)
    values = ([int(v) for v in args.values.split(",")] if args.values
              else SWEEP_GRIDS[args.parameter])
    table = sweep(args.parameter, values, corpus, split, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"sweep-{args.parameter}.csv").write_text(table.to_csv())
    (out / f"sweep-{args.parameter}.txt").write_text(table.to_text())
    _write_resolved_config(out, args, config)
    log.info("sweep %s best %s", args.parameter, table.best())
    return 0


def _cmd_compare_encoders(args) -> int:
    config = _config_from_args(args)
    corpus, split = _corpus_split(args)
    lengths = [int(v) for v in args.lengths.split(",")]
    table = compare_encoders(corpus, lengths, split, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "encoder-comparison.csv").write_text(table.to_csv())
    (out / "encoder-comparison.txt").write_text(table.to_text())
    _write_resolved_config(out, args, config)
    log.info("encoder comparison rows: %s", table.rows)
    return 0


def _cmd_explain(args) -> int:
    config = _config_from_args(args)
    corpus, split = _corpus_split(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    labels = corpus.labels()
    features, extractors = extract_features(corpus, split.train,
                                            split.validation, config)
    components, manifest = train_components(features, labels, split.train,
                                            split.validation,
                                            corpus.family_count, config,
                                            jobs=args.jobs)
    fusions = {fset: train_preset("EF1", fset, features, labels, split.train,
                                  split.validation, corpus.family_count,
                                  components, manifest, config)
               for fset in ("static", "dynamic", "integrated")}
    index = {s.sample_id: i for i, s in enumerate(corpus.samples)}
    if args.sample:
        if args.sample not in index:
            raise KeyError(f"no sample {args.sample!r} in corpus")
        targets = [index[args.sample]]
    else:
        targets = [int(i) for i in split.test]
    summary = ["sample_id,true_family,static_pred,dynamic_pred,"
               "integrated_pred,category"]
    for i in targets:
        sample = corpus.samples[i]
        fv = extractors.featurize(sample)
        case = case_report(fv, sample.family, sample.sample_id,
                           fusions["static"], fusions["dynamic"],
                           fusions["integrated"])
        (out / f"case-{sample.sample_id}.csv").write_text(case.to_csv())
        s, d, it = case.predictions
        summary.append(f"{sample.sample_id},{sample.family},{s},{d},{it},"
                       f"{case.category}")
    (out / "cases-summary.csv").write_text("\n".join(summary) + "\n")
    _write_resolved_config(out, args, config)
    log.info("wrote %d case reports to %s", len(targets), out)
    return 0


# -- argument wiring -----------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, corpus: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    if corpus:
        p.add_argument("--corpus", required=True, help="corpus directory")
        p.add_argument("--split", help="reuse a saved split.json")
        p.add_argument("--profile", choices=("desk", "full"), default="desk",
                       help="capacity profile for feature models")
        p.add_argument("--config", help="JSON file overriding config fields")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker threads; results merge deterministically")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="malfusion",
        description="Malware-family classification experiments: feature "
                    "extraction, component classifiers, fusion topologies.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--families", type=int, default=8)
    p.add_argument("--samples-per-family", type=int, default=30)
    p.add_argument("--size-distribution", choices=("uniform", "longtail"),
                   default="uniform")
    p.add_argument("--signal", default="both",
                   choices=("both", "static_only", "dynamic_only", "params_only"))
    p.add_argument("--overlap-noise", type=float, default=0.0)
    p.add_argument("--static-vocab", type=int, default=60)
    p.add_argument("--dynamic-vocab", type=int, default=40)
    p.add_argument("--param-vocab", type=int, default=30)
    p.add_argument("--trace-min", type=int, default=80)
    p.add_argument("--trace-max", type=int, default=160)
    p.add_argument("--max-params", type=int, default=4)
    p.add_argument("--graph-min", type=int, default=24)
    p.add_argument("--graph-max", type=int, default=56)
    _add_common(p, corpus=False)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("extract", help="fit feature models, emit feature tables")
    _add_common(p)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("train-components",
                       help="train the per-feature classifiers")
    p.add_argument("--run", required=True,
                   help="directory produced by extract")
    _add_common(p)
    p.set_defaults(func=_cmd_train_components)

    p = sub.add_parser("train-fusion", help="train one fusion preset")
    p.add_argument("--preset", choices=sorted(PRESET_FLAGS), default="ef1")
    p.add_argument("--features", choices=FEATURE_SET_FLAGS,
                   default="integrated")
    _add_common(p)
    p.set_defaults(func=_cmd_train_fusion)

    p = sub.add_parser("eval", help="full run: holdout report or k-fold CV")
    p.add_argument("--preset", choices=sorted(PRESET_FLAGS), default="ef1")
    p.add_argument("--features", choices=FEATURE_SET_FLAGS,
                   default="integrated")
    p.add_argument("--cv", type=int, default=0,
                   help="fold count; 0 uses the fixed holdout split")
    _add_common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="feature-length/width tuning sweep")
    p.add_argument("--parameter", required=True, choices=sorted(SWEEP_GRIDS))
    p.add_argument("--values", help="comma-separated; defaults to the "
                                    "reference grid")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("compare-encoders",
                       help="call-name vs statement encoder accuracy by length")
    p.add_argument("--lengths", default="100,200,300,400")
    _add_common(p)
    p.set_defaults(func=_cmd_compare_encoders)

    p = sub.add_parser("explain", help="per-sample case reports across "
                                       "static/dynamic/integrated models")
    p.add_argument("--sample", help="one sample id; default: whole test split")
    _add_common(p)
    p.set_defaults(func=_cmd_explain)
    return parser


def run(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except Exception as e:  # runtime failure -> exit 1 with a message
        log.error("%s", e)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
