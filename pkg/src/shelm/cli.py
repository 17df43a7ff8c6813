"""Command-line entry point.

    shelm store gen|inspect|intersect ...
    shelm index build --store S --prompts P --out I
    shelm train --config C --seed-index N
    shelm eval --run-dir D
    shelm trace --run-dir D --episode N

Exit codes: 0 ok, 2 usage error, 3 data error (bad files, failed
validation), 4 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_run_config
from .errors import (
    ArgumentError,
    CorruptionError,
    FormatError,
    ShelmError,
    StorageError,
    TraceError,
)
from .retrieval import (
    PromptSet,
    StoreLookupEncoder,
    build_index,
    load_prompt_set,
    save_index,
)
from .stats import bootstrap_ci, iqm, welch_t
from .stores import (
    generate_synthetic_store,
    intersect_vocabularies,
    load_store,
    save_store,
)
from .traces import read_trace
from .train import METRICS_COLUMNS, train_run

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _parse_clusters(text: str) -> list[tuple[str, int, float]]:
    """label:center_seed:spread triples separated by commas."""
    out = []
    for part in text.split(","):
        bits = part.strip().split(":")
        if len(bits) != 3:
            raise ArgumentError(f"bad cluster spec {part!r}; want label:seed:spread")
        out.append((bits[0], int(bits[1]), float(bits[2])))
    return out


def cmd_store(args) -> int:
    if args.store_cmd == "gen":
        store = generate_synthetic_store(
            seed=args.seed, vocab_size=args.vocab_size, dim=args.dim,
            cluster_spec=_parse_clusters(args.clusters), lm_dim=args.lm_dim,
        )
        save_store(store, args.out)
        print(f"wrote {args.out}: {len(store.vocabulary)} tokens, "
              f"tables {sorted(store.tables)}")
        return EXIT_OK
    if args.store_cmd == "inspect":
        store = load_store(args.store)
        info = {
            "tokens": len(store.vocabulary),
            "normalization_tag": store.vocabulary.normalization_tag,
            "tables": {tag: {"dim": t.dim, "rows": t.rows}
                       for tag, t in sorted(store.tables.items())},
            "provenance": store.metadata.provenance,
            "seed": store.metadata.seed,
            "clusters": ([{"label": c.label, "tokens": c.stop - c.start,
                           "spread": c.spread} for c in store.metadata.clusters]
                         if store.metadata.clusters else None),
            "first_tokens": list(store.vocabulary.tokens[:8]),
        }
        print(json.dumps(info, indent=2))
        return EXIT_OK
    # intersect
    a = load_store(args.a)
    b = load_store(args.b)
    vocab = intersect_vocabularies(a.vocabulary, b.vocabulary)
    print(f"overlap: {len(vocab)} of {len(a.vocabulary)} / {len(b.vocabulary)} tokens")
    if args.out:
        if len(vocab) == 0:
            print("empty intersection; refusing to write a store", file=sys.stderr)
            return EXIT_DATA
        # result tokens are normalized forms; map back to a's rows
        from .stores import EmbeddingStore, EmbeddingTable, normalize_token

        norm_index = {normalize_token(t, vocab.normalization_tag): i
                      for i, t in enumerate(a.vocabulary.tokens)}
        rows = [norm_index[t] for t in vocab.tokens]
        tables = {
            tag: EmbeddingTable(table.matrix[rows], tag)
            for tag, table in a.tables.items()
        }
        save_store(EmbeddingStore(vocabulary=vocab, tables=tables,
                                  metadata=a.metadata), args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_index(args) -> int:
    store = load_store(args.store)
    prompts = load_prompt_set(args.prompts) if args.prompts else PromptSet()
    if len(store.vocabulary) == 0:
        print("store has an empty vocabulary; cannot build an index", file=sys.stderr)
        return EXIT_DATA
    index = build_index(store.vocabulary, prompts,
                        StoreLookupEncoder(store, args.prompt_offset_scale))
    save_index(index, args.out)
    print(f"wrote {args.out}: {len(index)} rows, dim {index.dim}, "
          f"{len(prompts)} prompts")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    text = Path(args.config).read_text(encoding="utf-8")
    summary = train_run(cfg, args.seed_index, config_text=text, quiet=args.quiet)
    print(f"run complete: {summary.run_dir} "
          f"(final eval_success {summary.final_eval_success:.3f})")
    return EXIT_OK


def _load_final_scores(run_dir: Path) -> dict[int, dict]:
    """Final metrics row per seed subdirectory."""
    per_seed = {}
    for sub in sorted(run_dir.glob("seed_*")):
        path = sub / "metrics.csv"
        if not path.exists():
            continue
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        if rows:
            per_seed[int(sub.name.split("_", 1)[1])] = rows[-1]
    if not per_seed:
        raise ArgumentError(f"no seed_*/metrics.csv under {run_dir}")
    return per_seed


def cmd_eval(args) -> int:
    run_dir = Path(args.run_dir)
    per_seed = _load_final_scores(run_dir)
    scores = [float(r["eval_success"]) for r in per_seed.values()]
    returns = [float(r["eval_return"]) for r in per_seed.values()]
    summary = {
        "run_dir": str(run_dir),
        "seeds": sorted(per_seed),
        "final_eval_success": {s: float(r["eval_success"]) for s, r in per_seed.items()},
    }
    if len(scores) >= 4:
        summary["iqm_success"] = iqm(scores)
        summary["ci95_success"] = bootstrap_ci(scores, n_boot=args.n_boot, seed=0)
        summary["iqm_return"] = iqm(returns)
    else:
        summary["mean_success"] = float(np.mean(scores))
        summary["note"] = "fewer than 4 seeds; IQM/CI need >= 4 scores"
    if args.baseline_dir:
        base = _load_final_scores(Path(args.baseline_dir))
        base_scores = [float(r["eval_success"]) for r in base.values()]
        try:
            res = welch_t(scores, base_scores, alpha=args.alpha)
            summary["welch_vs_baseline"] = {
                "t": res.t, "dof": res.dof, "p": res.p, "significant": res.significant,
            }
        except ShelmError as e:
            summary["welch_vs_baseline"] = f"not computable: {e}"
    print(json.dumps(summary, indent=2, default=str))

    # plot-data files: per-seed learning curves, one row per eval point
    out_dir = Path(args.out) if args.out else run_dir / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)
    curve_path = out_dir / "curves.csv"
    with open(curve_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["seed"] + list(METRICS_COLUMNS))
        for seed, sub in [(s, run_dir / f"seed_{s}") for s in sorted(per_seed)]:
            with open(sub / "metrics.csv", newline="") as g:
                for row in csv.DictReader(g):
                    writer.writerow([seed] + [row[c] for c in METRICS_COLUMNS])
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, default=str),
                                          encoding="utf-8")
    made = [str(curve_path), str(out_dir / "summary.json")]
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        for seed in sorted(per_seed):
            with open(run_dir / f"seed_{seed}" / "metrics.csv", newline="") as g:
                rows = list(csv.DictReader(g))
            ax.plot([int(r["step"]) for r in rows],
                    [float(r["eval_success"]) for r in rows], label=f"seed {seed}")
        ax.set_xlabel("env steps")
        ax.set_ylabel("eval success")
        ax.set_ylim(-0.05, 1.05)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_dir / "curves.png", dpi=120)
        plt.close(fig)
        made.append(str(out_dir / "curves.png"))
    except Exception as e:  # plotting backend is best-effort
        print(f"(no plot image: {e})", file=sys.stderr)
    print("wrote " + ", ".join(made))
    return EXIT_OK


def cmd_trace(args) -> int:
    run_dir = Path(args.run_dir)
    candidates = sorted(run_dir.glob("seed_*/traces/*.jsonl")) or \
        sorted(run_dir.glob("traces/*.jsonl"))
    if not candidates:
        print(f"no trace files under {run_dir}", file=sys.stderr)
        return EXIT_DATA
    wanted = None
    for path in candidates:
        trace = read_trace(path)
        if trace.episode == args.episode:
            wanted = (path, trace)
            break
    if wanted is None:
        eps = sorted({read_trace(p).episode for p in candidates})
        print(f"episode {args.episode} not found; available: "
              f"{eps[:10]}{'...' if len(eps) > 10 else ''}", file=sys.stderr)
        return EXIT_DATA
    path, trace = wanted
    print(f"# {path}")
    print(f"variant={trace.variant} seed={trace.seed} episode={trace.episode} "
          f"success={trace.success}")
    for step in trace.steps:
        tokens = " ".join(f"{tok}({score:.3f})" for tok, score in step.tokens) or "-"
        print(f"  t={step.t:<3d} concept={step.concept_label:<10s} "
              f"action={step.action} reward={step.reward:g}  memory: {tokens}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shelm",
                                description="Semantic token-memory RL toolkit")
    p.add_argument("--version", action="version", version=f"shelm {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)

    store = sub.add_parser("store", help="create or inspect embedding stores")
    store_sub = store.add_subparsers(dest="store_cmd", required=True)
    gen = store_sub.add_parser("gen", help="generate a synthetic clustered store")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--vocab-size", type=int, required=True)
    gen.add_argument("--dim", type=int, required=True)
    gen.add_argument("--lm-dim", type=int, default=None)
    gen.add_argument("--clusters", required=True,
                     help="label:center_seed:spread, comma separated")
    gen.add_argument("--out", required=True)
    ins = store_sub.add_parser("inspect", help="validate and summarize a store")
    ins.add_argument("--store", required=True)
    inter = store_sub.add_parser("intersect", help="intersect two store vocabularies")
    inter.add_argument("--a", required=True)
    inter.add_argument("--b", required=True)
    inter.add_argument("--out", default=None,
                       help="write a store restricted to the overlap (rows from --a)")

    index = sub.add_parser("index", help="build a retrieval index")
    index_sub = index.add_subparsers(dest="index_cmd", required=True)
    build = index_sub.add_parser("build")
    build.add_argument("--store", required=True)
    build.add_argument("--prompts", default=None, help="text file, one prompt per line")
    build.add_argument("--prompt-offset-scale", type=float, default=0.1)
    build.add_argument("--out", required=True)

    train = sub.add_parser("train", help="run one training seed")
    train.add_argument("--config", required=True)
    train.add_argument("--seed-index", type=int, default=0)
    train.add_argument("--quiet", action="store_true")

    ev = sub.add_parser("eval", help="summarize a multi-seed run directory")
    ev.add_argument("--run-dir", required=True)
    ev.add_argument("--baseline-dir", default=None,
                    help="second run directory for a Welch t-test")
    ev.add_argument("--alpha", type=float, default=0.025)
    ev.add_argument("--n-boot", type=int, default=10_000)
    ev.add_argument("--out", default=None)

    tr = sub.add_parser("trace", help="pretty-print an episode's token memory")
    tr.add_argument("--run-dir", required=True)
    tr.add_argument("--episode", type=int, required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        if args.cmd == "store":
            return cmd_store(args)
        if args.cmd == "index":
            return cmd_index(args)
        if args.cmd == "train":
            return cmd_train(args)
        if args.cmd == "eval":
            return cmd_eval(args)
        if args.cmd == "trace":
            return cmd_trace(args)
        parser.error(f"unknown command {args.cmd}")
    except ArgumentError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (StorageError, FormatError, CorruptionError, TraceError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ShelmError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
