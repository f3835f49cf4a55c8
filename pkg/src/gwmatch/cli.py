"""Command-line entry point: matching, embedding, benchmarks, solver
comparison, and recommendation workflows."""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .embeddings import EmbedOptConfig, kernel_matrix, save_embeddings_csv
from .errors import DivergedError, GwmatchError, NonFiniteError
from .graphs import (
    data_distance_matrix,
    load_correspondences,
    load_graph,
    load_pairs,
    node_distribution,
)
from .metrics import (
    confidence_interval,
    format_metrics_report,
    node_correctness,
    ranked_recommendations,
    topL_metrics,
)
from .ot import save_coupling_csv, solve_ot_subproblem
from .pipeline import GwlConfig, run_gwl
from .synth import METHODS, SynthSpec, run_benchmark, save_benchmark_csv

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
OUT_DIR_ENV = "GWMATCH_OUT"

_CONFIG_CASTS = {
    "gamma": float,
    "beta": float,
    "outer": int,
    "inner": int,
    "sinkhorn_steps": int,
    "dim": int,
    "loss": str,
    "kernel": str,
    "sigma": float,
    "alpha_schedule": str,
    "seed": int,
    "threads": int,
    "solver": str,
    "cold_start": lambda v: str(v).lower() in ("1", "true", "yes"),
    "lr": float,
    "epochs": int,
    "batch_size": int,
}


def _fmt(value: float) -> str:
    return repr(float(value))


def _parse_config_file(path: Path) -> dict:
    values = {}
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {line_no}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _CONFIG_CASTS:
            raise ValueError(f"{path}: line {line_no}: unknown config key {key!r}")
        values[key] = _CONFIG_CASTS[key](value.strip())
    return values


def _resolve_settings(args) -> dict:
    """Defaults < config file < command-line flags."""
    settings = {}
    if getattr(args, "config", None):
        settings.update(_parse_config_file(Path(args.config)))
    for key in _CONFIG_CASTS:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    return settings


def build_config(args) -> tuple[GwlConfig, int]:
    """Build the run config plus the worker-thread cap from CLI inputs."""
    s = _resolve_settings(args)
    embed = EmbedOptConfig(
        learning_rate=s.get("lr", 0.001),
        epochs=s.get("epochs", 5),
        batch_size=s.get("batch_size", 100),
        beta=s.get("beta", 10.0),
        seed=s.get("seed", 0),
    )
    cfg = GwlConfig(
        outer_iterations=s.get("outer", 30),
        inner_iterations=s.get("inner", 200),
        sinkhorn_rounds=s.get("sinkhorn_steps", 1),
        gamma=s.get("gamma", 0.01),
        beta=s.get("beta", 10.0),
        dim=s.get("dim", 100),
        loss=s.get("loss", "mse"),
        kernel=s.get("kernel", "cosine"),
        sigma=s.get("sigma"),
        embed=embed,
        seed=s.get("seed", 0),
        alpha_schedule=s.get("alpha_schedule", "linear"),
        solver=s.get("solver", "proximal"),
        warm_start=not s.get("cold_start", False),
    )
    return cfg, max(1, s.get("threads", 1))


def _out_dir(args) -> Path:
    out = args.out or Path(os.environ.get(OUT_DIR_ENV, "out"))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _manifest_lines(command: str, cfg: GwlConfig, threads: int, inputs: dict, extras: dict):
    entries = {
        "command": command,
        "version": __version__,
        "threads": threads,
        "config.outer_iterations": cfg.outer_iterations,
        "config.inner_iterations": cfg.inner_iterations,
        "config.sinkhorn_rounds": cfg.sinkhorn_rounds,
        "config.gamma": cfg.gamma,
        "config.beta": cfg.beta,
        "config.dim": cfg.dim,
        "config.loss": cfg.loss,
        "config.kernel": cfg.kernel,
        "config.sigma": cfg.kernel_spec().sigma,
        "config.alpha_schedule": cfg.alpha_schedule,
        "config.solver": cfg.solver,
        "config.warm_start": cfg.warm_start,
        "config.seed": cfg.seed,
        "config.embed.learning_rate": cfg.embed.learning_rate,
        "config.embed.epochs": cfg.embed.epochs,
        "config.embed.batch_size": cfg.embed.batch_size,
    }
    for name, path in inputs.items():
        entries[f"input.{name}.path"] = str(path)
        entries[f"input.{name}.sha256"] = _sha256(Path(path))
    entries.update(extras)
    return [f"{key} = {entries[key]}" for key in sorted(entries)]


def write_manifest(path: Path, command: str, cfg: GwlConfig, threads: int, inputs: dict, **extras):
    lines = _manifest_lines(command, cfg, threads, inputs, extras)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _run_and_export_match(args, command: str, with_matching: bool) -> int:
    source = load_graph(args.source)
    target = load_graph(args.target)
    cross = (
        load_correspondences(args.cross, source, target)
        if getattr(args, "cross", None)
        else None
    )
    truth = (
        load_pairs(args.ground_truth, source, target)
        if getattr(args, "ground_truth", None)
        else None
    )
    cfg, threads = build_config(args)
    out = _out_dir(args)
    zero_timing = threads == 1

    result = run_gwl(source, target, cross=cross, config=cfg, ground_truth=truth)

    save_coupling_csv(result.coupling, out / "coupling.csv")
    if getattr(args, "dense_coupling", False):
        save_coupling_csv(result.coupling, out / "coupling_dense.csv", dense=True)
    save_embeddings_csv(result.embeddings_source, source.labels, out / "embeddings_source.csv")
    save_embeddings_csv(result.embeddings_target, target.labels, out / "embeddings_target.csv")
    result.save_inner_traces_csv(out / "trace.csv", zero_timing=zero_timing)
    result.save_outer_trace_csv(out / "outer_trace.csv")
    if with_matching:
        lines = [
            f"{source.labels[i]} {target.labels[j]}" for i, j in result.matching
        ]
        (out / "matching.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    inputs = {"source": args.source, "target": args.target}
    if getattr(args, "cross", None):
        inputs["cross"] = args.cross
    if getattr(args, "ground_truth", None):
        inputs["ground_truth"] = args.ground_truth
    write_manifest(out / "manifest.txt", command, cfg, threads, inputs)

    if truth is not None:
        nc = node_correctness(result.matching, truth)
        print(f"node_correctness={_fmt(nc)}")
    if args.verbose:
        print(f"outputs written to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_match(args) -> int:
    return _run_and_export_match(args, "match", with_matching=True)


def cmd_embed(args) -> int:
    return _run_and_export_match(args, "embed", with_matching=False)


def cmd_benchmark(args) -> int:
    cfg, threads = build_config(args)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    qs = tuple(args.q) if args.q else (0,)
    spec = SynthSpec(
        family=args.family,
        size=args.n,
        qs=qs,
        trials=args.trials,
        seed=cfg.seed,
    )
    out = _out_dir(args)
    result = run_benchmark(spec, methods=methods, config=cfg, threads=threads)
    save_benchmark_csv(result, out / "benchmark.csv", zero_timing=threads == 1)

    report_lines = []
    for q in spec.qs:
        for method in methods:
            stats = result.stats().get((q, method))
            if stats is None:
                continue
            block = format_metrics_report(
                sorted(stats.items()), family=spec.family, n=spec.size, q=q, method=method
            )
            report_lines.append(block)
            failed = result.failures.get((q, method), 0)
            if failed:
                report_lines.append(
                    f"family={spec.family} n={spec.size} q={q} method={method} failures={failed}"
                )
    report = "\n".join(report_lines)
    (out / "summary.txt").write_text(report + "\n", encoding="utf-8")
    print(report)
    write_manifest(
        out / "manifest.txt", "benchmark", cfg, threads, {},
        family=spec.family, n=spec.size, qs=",".join(map(str, spec.qs)),
        trials=spec.trials, methods=",".join(methods),
    )
    return EXIT_OK


def cmd_solver_compare(args) -> int:
    source = load_graph(args.source)
    target = load_graph(args.target)
    cfg, threads = build_config(args)
    out = _out_dir(args)
    zero_timing = threads == 1
    gammas = [float(g) for g in args.gammas.split(",")]
    j_list = [int(j) for j in args.j_list.split(",")]

    cost_s = data_distance_matrix(source)
    cost_t = data_distance_matrix(target)
    mu_s = node_distribution(source)
    mu_t = node_distribution(target)

    index_lines = ["solver,gamma,j,steps,final_objective,stabilized,unstable"]
    for solver in ("proximal", "entropic"):
        for gamma in gammas:
            for rounds in j_list:
                unstable = False
                try:
                    _, trace = solve_ot_subproblem(
                        cost_s, cost_t, None, mu_s, mu_t,
                        alpha=0.0, gamma=gamma, loss=cfg.loss,
                        n_steps=cfg.inner_iterations,
                        sinkhorn_rounds=rounds, method=solver,
                        early_exit_patience=0,
                    )
                except NonFiniteError as err:
                    trace = err.trace
                    unstable = True
                name = f"trace_{solver}_gamma{gamma}_J{rounds}.csv"
                trace.to_csv(out / name, zero_timing=zero_timing)
                final = trace.records[-1].objective if trace.records else float("nan")
                index_lines.append(
                    f"{solver},{gamma!r},{rounds},{len(trace)},{final!r},"
                    f"{int(trace.stabilized)},{int(unstable)}"
                )
    (out / "compare_index.csv").write_text("\n".join(index_lines) + "\n", encoding="utf-8")
    print("\n".join(index_lines))
    write_manifest(
        out / "manifest.txt", "solver-compare", cfg, threads,
        {"source": args.source, "target": args.target},
        gammas=args.gammas, j_list=args.j_list,
    )
    return EXIT_OK


def _write_recommendations(path: Path, lists, scores, row_labels, col_labels):
    lines = ["user,rank,item,score"]
    for i, items in enumerate(lists):
        for rank, j in enumerate(items, start=1):
            lines.append(
                f"{row_labels[i]},{rank},{col_labels[j]},{_fmt(scores[i][j])}"
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_recommend(args) -> int:
    users = load_graph(args.users)
    items = load_graph(args.items)
    interactions = load_correspondences(args.interactions, users, items)
    cfg, threads = build_config(args)
    out = _out_dir(args)
    top_l = args.top

    if top_l > items.node_count:
        print(
            f"warning: top {top_l} exceeds the {items.node_count} items; truncating",
            file=sys.stderr,
        )
        top_l = items.node_count

    result = run_gwl(users, items, cross=interactions, config=cfg)
    by_transport = ranked_recommendations(result.coupling, top_l, "by_transport_desc")
    distances = kernel_matrix(
        result.embeddings_source, result.embeddings_target, cfg.kernel_spec()
    )
    by_distance = ranked_recommendations(distances, top_l, "by_distance_asc")

    _write_recommendations(
        out / "recommendations_transport.csv", by_transport, result.coupling,
        users.labels, items.labels,
    )
    _write_recommendations(
        out / "recommendations_embedding.csv", by_distance, distances,
        users.labels, items.labels,
    )

    inputs = {"users": args.users, "items": args.items, "interactions": args.interactions}
    metric_lines = []
    if args.truth:
        inputs["truth"] = args.truth
        truth_pairs = load_pairs(args.truth, users, items)
        truth_sets: dict[int, set[int]] = {}
        for i, j in truth_pairs:
            truth_sets.setdefault(i, set()).add(j)
        rows = sorted(truth_sets)
        for mode, lists in (("transport", by_transport), ("embedding", by_distance)):
            stats = topL_metrics([lists[i] for i in rows], [truth_sets[i] for i in rows], top_l)
            for metric, value in zip(("precision", "recall", "f1"), stats):
                metric_lines.append(f"mode={mode} top_l={top_l} {metric}={_fmt(value)}")
        text = "\n".join(metric_lines)
        (out / "metrics.txt").write_text(text + "\n", encoding="utf-8")
        print(text)
    write_manifest(out / "manifest.txt", "recommend", cfg, threads, inputs, top_l=top_l)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key = value config file")
    parser.add_argument("--gamma", type=float, help="proximal/entropic weight")
    parser.add_argument("--beta", type=float, help="embedding regularizer weight")
    parser.add_argument("--outer", type=int, metavar="M", help="outer iterations")
    parser.add_argument("--inner", type=int, metavar="N", help="inner iterations")
    parser.add_argument("--sinkhorn-steps", type=int, metavar="J", dest="sinkhorn_steps")
    parser.add_argument("--dim", type=int, metavar="D", help="embedding dimension")
    parser.add_argument("--loss", choices=["mse", "kl"])
    parser.add_argument("--kernel", choices=["cosine", "rbf"])
    parser.add_argument("--sigma", type=float, help="kernel bandwidth")
    parser.add_argument("--alpha-schedule", choices=["linear"], dest="alpha_schedule")
    parser.add_argument("--solver", choices=["proximal", "entropic"])
    parser.add_argument("--cold-start", action="store_const", const=True,
                        default=None, dest="cold_start")
    parser.add_argument("--lr", type=float, help="embedding learning rate")
    parser.add_argument("--epochs", type=int, help="embedding epochs per update")
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int, help="worker cap; 1 = fully deterministic")
    parser.add_argument("--out", type=Path, help=f"output directory (default ${OUT_DIR_ENV} or ./out)")
    parser.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwmatch",
        description="Graph matching and joint node embedding via Gromov-Wasserstein transport",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("match", help="align two graphs and extract correspondences")
    p.add_argument("source", type=Path)
    p.add_argument("target", type=Path)
    p.add_argument("--ground-truth", type=Path, dest="ground_truth")
    p.add_argument("--cross", type=Path, help="observed cross-graph interactions")
    p.add_argument("--dense-coupling", action="store_true", dest="dense_coupling")
    _add_common(p)
    p.set_defaults(handler=cmd_match)

    p = sub.add_parser("embed", help="learn joint node embeddings for two graphs")
    p.add_argument("source", type=Path)
    p.add_argument("target", type=Path)
    p.add_argument("--cross", type=Path)
    _add_common(p)
    p.set_defaults(handler=cmd_embed)

    p = sub.add_parser("benchmark", help="run the synthetic noise benchmark")
    p.add_argument("--family", choices=["knn", "ba"], default="knn")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--q", type=int, action="append", help="noise percent (repeatable)")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--methods", default=",".join(METHODS))
    _add_common(p)
    p.set_defaults(handler=cmd_benchmark)

    p = sub.add_parser("solver-compare", help="trace proximal vs entropic solvers")
    p.add_argument("source", type=Path)
    p.add_argument("target", type=Path)
    p.add_argument("--gammas", default="0.001,0.01,0.1,1.0")
    p.add_argument("--j-list", default="1", dest="j_list")
    _add_common(p)
    p.set_defaults(handler=cmd_solver_compare)

    p = sub.add_parser("recommend", help="cross-graph top-L recommendation")
    p.add_argument("users", type=Path)
    p.add_argument("items", type=Path)
    p.add_argument("--interactions", type=Path, required=True)
    p.add_argument("--truth", type=Path, help="held-out interactions for evaluation")
    p.add_argument("--top", type=int, default=5, metavar="L")
    _add_common(p)
    p.set_defaults(handler=cmd_recommend)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except FileNotFoundError as err:
        print(f"error: file not found: {err.filename or err}", file=sys.stderr)
        return EXIT_INPUT
    except (NonFiniteError, DivergedError) as err:
        print(f"error: numerical failure: {err}", file=sys.stderr)
        trace = getattr(err, "trace", None)
        if trace is not None and getattr(args, "out", None) is not None:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            trace.to_csv(out / "trace_partial.csv")
            print(f"partial trace flushed to {out / 'trace_partial.csv'}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GwmatchError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
