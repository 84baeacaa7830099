"""Drives the command-line pipeline end to end for the tests."""

from pathlib import Path

from visrank.cli import main


def run(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"visrank {' '.join(map(str, argv))} exited {code}"


def run_pipeline(root, n_queries=10, docs_per_query=12, seed=0, folds=(0,), heads=("none",),
                 head_hidden=16, max_epochs=5, patience=3, grid=4, **synth_kw):
    """synth -> features -> folds -> extract -> train/score per fold and head.

    Returns the dict of paths; run files sit at ``runs/<head>-<fold>.tsv``.
    """
    root = Path(root)
    data = root / "data"
    synth = ["synth", "--out-dir", data, "--seed", seed, "--n-queries", n_queries,
             "--docs-per-query", docs_per_query]
    for key, value in synth_kw.items():
        synth += ["--" + key.replace("_", "-"), value]
    run(*synth)
    feats = root / "features"
    run("features", "--corpus", data / "corpus.tsv", "--queries", data / "queries.tsv",
        "--qrels", data / "qrels.txt", "--pagerank", data / "pagerank.tsv", "--out-dir", feats)
    run("folds", "--letor", feats / "normalized.txt", "--out", root / "folds.txt", "--seed", seed)
    run("extract", "--images", data / "images", "--qrels", data / "qrels.txt", "--grid", grid,
        "--out", root / "vectors.vvf")
    paths = {"data": data, "features": feats, "folds": root / "folds.txt", "vectors": root / "vectors.vvf",
             "runs": root / "runs", "models": root / "models"}
    for fold in folds:
        for head in heads:
            model = root / "models" / f"{head}-{fold}.vtm"
            run("train", "--letor", feats / "normalized.txt", "--folds", root / "folds.txt", "--fold", fold,
                "--vectors", root / "vectors.vvf", "--head", head, "--head-hidden", head_hidden,
                "--max-epochs", max_epochs, "--patience", patience, "--seed", seed, "--out", model)
            run("score", "--model", model, "--letor", feats / "normalized.txt", "--folds", root / "folds.txt",
                "--fold", fold, "--vectors", root / "vectors.vvf", "--out", root / "runs" / f"{head}-{fold}.tsv")
    return paths


def tree_bytes(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
