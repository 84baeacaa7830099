"""Command-line entry point: ``visrank <command> [options]``.

Every command accepts ``--config FILE`` with flat ``key = value`` lines whose
keys are the long option names (dashes or underscores); explicit flags win.
The default seed comes from ``$VISRANK_SEED`` (0 if unset).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from visrank import letor, metrics, synth, visual
from visrank._io import atomic_write, read_lines
from visrank.model import ArchitectureSpec, decode_checkpoint, encode_checkpoint
from visrank.pipeline import build_feature_files, fold_sets, ranking_set, score_set, train_fold
from visrank.text import Bm25Params, read_corpus, read_pagerank, read_two_column
from visrank.training import TrainConfig

logger = logging.getLogger("visrank")

STAGES = ("raw", "logged", "normalized")


def read_config(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(read_lines(path), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _judgments(args) -> dict[str, dict[str, int]]:
    if getattr(args, "qrels", None):
        return letor.qrels_by_query(letor.parse_qrels(read_lines(args.qrels)))
    records = letor.read_letor(read_lines(args.letor))
    return letor.qrels_by_query({(r.query_id, r.doc_id): r.grade for r in records})


def cmd_features(args):
    docs = read_corpus(read_lines(args.corpus))
    queries = read_two_column(read_lines(args.queries), "query")
    qrels = letor.parse_qrels(read_lines(args.qrels))
    pagerank = read_pagerank(read_lines(args.pagerank)) if args.pagerank else {}
    files = build_feature_files(docs, queries, qrels, pagerank, Bm25Params(args.k1, args.k3, args.b))
    out = Path(args.out_dir)
    for stage in STAGES:
        atomic_write(out / f"{stage}.txt", letor.format_letor(files[stage]))
    logger.info("wrote %d records per stage to %s", len(files["raw"]), out)


def cmd_folds(args):
    if args.letor:
        qids = [r.query_id for r in letor.read_letor(read_lines(args.letor))]
    elif args.qrels:
        qids = [q for q, _ in letor.parse_qrels(read_lines(args.qrels))]
    else:
        raise ValueError("folds needs --letor or --qrels")
    assignment = letor.split_folds(sorted(set(qids)), args.seed)
    atomic_write(args.out, letor.format_fold_manifest(assignment))
    if args.split_dir and args.letor:
        records = letor.read_letor(read_lines(args.letor))
        for fold in range(letor.N_FOLDS):
            for name, queries in zip(("train", "vali", "test"), assignment.split(fold)):
                wanted = set(queries)
                atomic_write(
                    Path(args.split_dir) / f"Fold{fold + 1}" / f"{name}.txt",
                    letor.format_letor(r for r in records if r.query_id in wanted),
                )


def cmd_extract(args):
    if args.manifest:
        images = visual.read_manifest(read_lines(args.manifest), Path(args.manifest).parent)
    elif args.images:
        images = visual.find_images(args.images)
    else:
        raise ValueError("extract needs --images or --manifest")
    missing = {}
    if args.qrels:
        judged = sorted({d for _, d in letor.parse_qrels(read_lines(args.qrels))})
        missing = {d: "no image" for d in judged if d not in images}
        images = {d: images[d] for d in judged if d in images}
    vectors, failures = visual.extract_vectors(images, args.grid)
    missing.update(failures)
    visual.save_vectors(vectors, args.out)
    atomic_write(str(args.out) + ".missing.tsv", "".join(f"{d}\t{why}\n" for d, why in sorted(missing.items())))
    if args.tsv:
        atomic_write(args.tsv, visual.format_vectors_tsv(vectors))
    logger.info("extracted %d vectors (dim %d), %d missing", len(vectors), args.grid ** 2, len(missing))


def _load_set(args, with_vectors):
    records = letor.read_letor(read_lines(args.letor))
    vectors = visual.load_vectors(args.vectors) if with_vectors else None
    return ranking_set(records, vectors)


def cmd_train(args):
    vectors_needed = args.head != "none"
    if vectors_needed and not args.vectors:
        raise ValueError(f"--vectors is required for head {args.head!r}")
    data = _load_set(args, vectors_needed)
    spec = ArchitectureSpec(
        head_kind=args.head,
        input_dim=data.visual.shape[1] if vectors_needed else 0,
        visual_out_dim=args.visual_out_dim,
        content_dim=data.content.shape[1],
        scoring_hidden=args.scoring_hidden,
        dropout_scoring=args.dropout_scoring,
        dropout_head=args.dropout_head,
        head_hidden=args.head_hidden,
    )
    config = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        margin=args.margin,
        l2_lambda=args.l2,
        seed=args.seed,
        exclude_junk=args.exclude_junk,
    )
    assignment = letor.read_fold_manifest(read_lines(args.folds))
    model, log = train_fold(data, assignment, args.fold, spec, config)
    atomic_write(args.out, encode_checkpoint(model))
    atomic_write(args.log or str(args.out) + ".log", log.format())
    atomic_write(str(args.out) + ".arch", spec.to_text())
    logger.info("best epoch %d of %d", log.best_epoch, len(log.epochs) - 1)


def cmd_score(args):
    model = decode_checkpoint(Path(args.model).read_bytes())
    data = _load_set(args, bool(model.head))
    assignment = letor.read_fold_manifest(read_lines(args.folds))
    train, val, test = fold_sets(data, assignment, args.fold)
    subset = {"train": train, "validation": val, "test": test, "all": data}[args.split]
    atomic_write(args.out, metrics.format_run(score_set(model, subset)))


def _parse_runs(specs):
    runs = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).stem, spec
        runs[name] = metrics.read_run(read_lines(path))
    return runs


def cmd_eval(args):
    judgments = _judgments(args)
    runs = _parse_runs(args.run)
    systems = {name: metrics.evaluate_run(run, judgments) for name, run in runs.items()}
    if args.per_query_dir:
        for name, per_query in systems.items():
            atomic_write(Path(args.per_query_dir) / f"{name}.tsv", metrics.format_per_query(per_query))
    report = metrics.format_report(systems, args.baseline)
    if args.out:
        atomic_write(args.out, report)
    else:
        sys.stdout.write(report)


def cmd_compare(args):
    judgments = _judgments(args)
    run_a = metrics.read_run(read_lines(args.run_a))
    run_b = metrics.read_run(read_lines(args.run_b))
    if set(run_a) != set(run_b):
        raise ValueError("run files cover different query sets (fold mismatch)")
    rows_a = {m.query_id: m.as_row() for m in metrics.evaluate_run(run_a, judgments)}
    rows_b = {m.query_id: m.as_row() for m in metrics.evaluate_run(run_b, judgments)}
    lines = ["metric\tn\tmean_diff\tt\tdf\tp\tsignificant"]
    for key in metrics.REPORT_METRICS:
        res = metrics.paired_ttest({q: r[key] for q, r in rows_a.items()}, {q: r[key] for q, r in rows_b.items()})
        lines.append(
            f"{key}\t{res.n}\t{res.mean_diff:.6f}\t{res.t_statistic:.6f}\t"
            f"{res.degrees_of_freedom}\t{res.p_value:.6g}\t{int(res.significant)}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


def cmd_synth(args):
    spec = synth.SyntheticSpec(
        n_queries=args.n_queries,
        docs_per_query=args.docs_per_query,
        visual_strength=args.visual_strength,
        content_strength=args.content_strength,
        seed=args.seed,
        image_size=args.image_size,
    )
    synth.write_fixture(synth.generate(spec), args.out_dir)


def _none_or_float(text):
    return None if text in (None, "", "none", "None") else float(text)


def build_parser() -> argparse.ArgumentParser:
    default_seed = int(os.environ.get("VISRANK_SEED", "0"))
    parser = argparse.ArgumentParser(prog="visrank", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="flat key = value file; flags override it")
        p.add_argument("--seed", type=int, default=default_seed)
        p.set_defaults(func=func)
        return p

    p = command("features", cmd_features, "compute raw/logged/normalized LETOR feature files")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--pagerank")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--k1", type=float, default=2.5)
    p.add_argument("--k3", type=float, default=0.0)
    p.add_argument("--b", type=float, default=0.8)

    p = command("folds", cmd_folds, "split queries into five partitions")
    p.add_argument("--letor")
    p.add_argument("--qrels")
    p.add_argument("--out", required=True)
    p.add_argument("--split-dir", help="also write FoldN/{train,vali,test}.txt from --letor")

    p = command("extract", cmd_extract, "extract and cache visual vectors")
    p.add_argument("--images", help="directory of <doc_id>.<ext> images")
    p.add_argument("--manifest", help="doc_id<TAB>path lines")
    p.add_argument("--qrels", help="restrict to judged documents and report missing images")
    p.add_argument("--grid", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--tsv", help="also write a TSV mirror of the cache")

    p = command("train", cmd_train, "train a model on one fold")
    p.add_argument("--letor", required=True, help="normalized LETOR file")
    p.add_argument("--folds", required=True)
    p.add_argument("--fold", type=int, default=0, choices=range(letor.N_FOLDS))
    p.add_argument("--vectors")
    p.add_argument("--head", default="none", choices=("none", "vgg_style", "resnet_style"))
    p.add_argument("--head-hidden", type=int, default=4096)
    p.add_argument("--visual-out-dim", type=int, default=30)
    p.add_argument("--scoring-hidden", type=int, default=10)
    p.add_argument("--dropout-scoring", type=float, default=0.1)
    p.add_argument("--dropout-head", type=float, default=0.5)
    p.add_argument("--lr", type=_none_or_float, default=None)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--l2", type=float, default=1e-5)
    p.add_argument("--exclude-junk", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--log")

    p = command("score", cmd_score, "write a run file for one fold")
    p.add_argument("--model", required=True)
    p.add_argument("--letor", required=True)
    p.add_argument("--folds", required=True)
    p.add_argument("--fold", type=int, default=0, choices=range(letor.N_FOLDS))
    p.add_argument("--vectors")
    p.add_argument("--split", default="test", choices=("train", "validation", "test", "all"))
    p.add_argument("--out", required=True)

    p = command("eval", cmd_eval, "P@k, NDCG@k and MAP report")
    p.add_argument("--run", action="append", required=True, help="PATH or NAME=PATH; repeatable")
    p.add_argument("--qrels")
    p.add_argument("--letor")
    p.add_argument("--baseline", help="system name to test the others against")
    p.add_argument("--per-query-dir")
    p.add_argument("--out")

    p = command("compare", cmd_compare, "paired t-tests between two runs")
    p.add_argument("--run-a", required=True)
    p.add_argument("--run-b", required=True)
    p.add_argument("--qrels")
    p.add_argument("--letor")
    p.add_argument("--out")

    p = command("synth", cmd_synth, "generate a synthetic fixture")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-queries", type=int, default=60)
    p.add_argument("--docs-per-query", type=int, default=40)
    p.add_argument("--visual-strength", type=float, default=0.8)
    p.add_argument("--content-strength", type=float, default=0.4)
    p.add_argument("--image-size", type=int, default=32)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        config = read_config(args.config)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in subparser._actions}
        unknown = set(config) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, value in config.items():
            action = known[key]
            if action.nargs == 0:  # store_true flags
                config[key] = value.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                config[key] = action.type(value)
        subparser.set_defaults(**config)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"visrank: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
