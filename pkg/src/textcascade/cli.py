"""Command-line pipeline: ingest, fit, simulate, evaluate, report.

Configuration comes from one JSON document; command-line flags override file
values, and the TEXTCASCADE_BASE_URL environment variable overrides the
backend base URL. All randomness flows from one master seed recorded in the
simulation manifest.
"""

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path

import numpy as np

from .backends import (
    GenerationOptions,
    LocalInferenceClient,
    MOCK_EMBED_DIM,
    MockEmbedder,
    MockGenerator,
)
from .cascade import RunConfig, load_run, run_cascade, save_run
from .diagnostics import (
    PRIMARY_WINDOW_HOURS,
    RELAXED_WINDOW_HOURS,
    aggregate_summaries,
    evaluate_run,
    summarize_run,
    write_moving_average_csv,
    write_records_csv,
    write_summary_json,
)
from .errors import (
    CascadeError,
    DegenerateOutputError,
    EmptyInputError,
    InputError,
    NoStableModelError,
    SplitError,
    TaxonomyError,
    TransportError,
)
from .events import (
    DEFAULT_TIE_OFFSET_HOURS,
    EventStream,
    NodeTaxonomy,
    build_stream,
    chronological_split,
    deduplicate,
    filter_language,
    parse_records,
)
from .hawkes import FitConfig, FitResult, fit_grid, write_grid_csv
from .memory import make_policy

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_NO_STABLE = 3
EXIT_TRANSPORT = 4
EXIT_DEGENERATE = 5


@dataclass
class PipelineConfig:
    language: str = "English"
    tie_offset_hours: float = DEFAULT_TIE_OFFSET_HOURS
    train_fraction: float = 0.8
    run_count: int = 1
    master_seed: int = 0
    primary_window_hours: float = PRIMARY_WINDOW_HOURS
    relaxed_window_hours: float = RELAXED_WINDOW_HOURS
    base_url: str = None
    embed_model: str = None
    mock_embed_dim: int = MOCK_EMBED_DIM
    fit: FitConfig = field(default_factory=FitConfig)
    run: RunConfig = field(default_factory=RunConfig)
    generation: GenerationOptions = field(default_factory=GenerationOptions)
    prompt_overrides: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path=None):
        if path is None:
            return cls()
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        config = cls(
            language=data.get("language", "English"),
            tie_offset_hours=float(data.get("tie_offset_hours", DEFAULT_TIE_OFFSET_HOURS)),
            train_fraction=float(data.get("train_fraction", 0.8)),
            run_count=int(data.get("run_count", 1)),
            master_seed=int(data.get("master_seed", 0)),
            base_url=data.get("base_url"),
            embed_model=data.get("embed_model"),
            mock_embed_dim=int(data.get("mock_embed_dim", MOCK_EMBED_DIM)),
            prompt_overrides=dict(data.get("prompt", {})),
        )
        matching = data.get("matching", {})
        config.primary_window_hours = float(matching.get("primary_window_hours", PRIMARY_WINDOW_HOURS))
        config.relaxed_window_hours = float(matching.get("relaxed_window_hours", RELAXED_WINDOW_HOURS))
        if "fit" in data:
            section = dict(data["fit"])
            if "beta_grid" in section:
                section["beta_grid"] = tuple(float(b) for b in section["beta_grid"])
            config.fit = FitConfig(**section)
        if "run" in data:
            config.run = RunConfig(**data["run"])
        if "generation" in data:
            config.generation = GenerationOptions(**data["generation"])
        return config


def _report_path(events_path):
    events_path = Path(events_path)
    return events_path.parent / (events_path.stem + ".report.json")


def load_stream(events_path):
    """Load the canonical event file, using its ingest report when present."""
    report_path = _report_path(events_path)
    origin = None
    horizon = None
    if report_path.exists():
        with open(report_path, "r", encoding="utf-8") as fh:
            report = json.load(fh)
        horizon = report.get("horizon_hours")
        if report.get("origin"):
            origin = datetime.fromisoformat(report["origin"])
    return EventStream.load_jsonl(events_path, origin=origin, horizon_hours=horizon)


def cmd_ingest(args):
    config = PipelineConfig.load(args.config)
    payload = Path(args.input).read_bytes()
    fmt = args.format
    if fmt == "auto":
        fmt = "jsonl" if str(args.input).endswith((".jsonl", ".ndjson")) else "csv"
    parsed = parse_records(payload, fmt)
    kept = filter_language(parsed.records, config.language)
    if not kept:
        raise EmptyInputError(f"no records with language {config.language!r}")
    deduped = deduplicate(kept)
    taxonomy = NodeTaxonomy.load(args.taxonomy)
    stream = build_stream(deduped, taxonomy, tie_offset=config.tie_offset_hours)
    stream.save_jsonl(args.out)

    per_node = {taxonomy.label(n.id): 0 for n in taxonomy.nodes}
    for event in stream.events:
        per_node[taxonomy.label(event.node)] += 1
    report = {
        "raw_count": len(parsed.records),
        "reject_count": len(parsed.rejects),
        "language_kept_count": len(kept),
        "deduped_count": len(deduped),
        "per_node_counts": per_node,
        "origin": stream.origin.isoformat(),
        "horizon_hours": stream.horizon_hours,
    }
    with open(_report_path(args.out), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(f"ingested {len(stream)} events over {stream.horizon_hours:.2f} hours -> {args.out}")
    return EXIT_OK


def cmd_fit(args):
    config = PipelineConfig.load(args.config)
    stream = load_stream(args.events)
    if args.post_split:
        stream, _ = chronological_split(stream, config.train_fraction)
    n_nodes = None
    if args.taxonomy:
        n_nodes = NodeTaxonomy.load(args.taxonomy).n_nodes
    grid_path = Path(args.out).parent / (Path(args.out).stem + ".grid.csv")
    try:
        best, results = fit_grid(stream, config.fit, n_nodes=n_nodes)
    except NoStableModelError as exc:
        write_grid_csv(exc.results, grid_path)
        raise
    best.save(args.out)
    write_grid_csv(results, grid_path)
    print(f"best stable fit: beta={best.beta:.6g} rho={best.spectral_radius:.4f} "
          f"ll={best.log_likelihood:.3f} -> {args.out}")
    return EXIT_OK


def _derive_run_seeds(master_seed, run_count):
    state = np.random.SeedSequence(int(master_seed)).generate_state(run_count, dtype=np.uint64)
    return [int(s) for s in state]


def cmd_simulate(args):
    config = PipelineConfig.load(args.config)
    result = FitResult.load(args.fit)
    params = result.params
    stream = load_stream(args.events)
    taxonomy = NodeTaxonomy.load(args.taxonomy)
    if taxonomy.n_nodes != params.n_nodes:
        raise InputError(
            f"taxonomy has {taxonomy.n_nodes} nodes but fit has {params.n_nodes}"
        )

    policy_name = args.policy or config.run.policy
    k = args.k if args.k is not None else config.run.k
    master_seed = args.seed if args.seed is not None else config.master_seed
    run_count = args.runs if args.runs is not None else config.run_count

    run_template = replace(config.run, policy=policy_name, k=k)
    if args.post_split:
        train, _ = chronological_split(stream, config.train_fraction)
        seed_event = train.events[-1]
        run_template = replace(run_template, horizon_end=stream.horizon_hours)
    else:
        seed_event = stream.events[0]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    params_ref = f"{Path(args.fit).name}#beta={params.beta:.6g}"
    run_seeds = _derive_run_seeds(master_seed, run_count)

    manifest = {
        "master_seed": int(master_seed),
        "run_seeds": run_seeds,
        "run_count": run_count,
        "policy": policy_name,
        "k": k,
        "post_split": bool(args.post_split),
        "params_ref": params_ref,
        "mock_generator": bool(args.mock_generator),
        "seed_event": {"tau": seed_event.tau, "node": seed_event.node, "text": seed_event.text},
    }
    with open(out_dir / "simulate.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")

    exit_code = EXIT_OK
    for idx, run_seed in enumerate(run_seeds):
        if args.mock_generator:
            generator = MockGenerator(run_seed)
        else:
            generator = LocalInferenceClient(base_url=config.base_url, options=config.generation)
        policy = make_policy(policy_name, params=params, k=k,
                             eps_raw=run_template.eps_raw, eps_norm=run_template.eps_norm)
        run_config = replace(run_template, rng_seed=run_seed)
        run = run_cascade(seed_event, params, taxonomy, policy, generator, run_config,
                          params_ref=params_ref, prompt_overrides=config.prompt_overrides)
        save_run(run, out_dir / f"run_{idx:03d}.jsonl", out_dir / f"run_{idx:03d}.meta.json")
        print(f"run {idx}: {len(run.events)} events, stop={run.stop_reason}")
        if run.stop_reason == "generator_error":
            print(f"run {idx} aborted: {run.error}", file=sys.stderr)
            exit_code = EXIT_TRANSPORT
            break
        if run.stop_reason == "degenerate_output":
            print(f"run {idx} aborted: {run.error}", file=sys.stderr)
            exit_code = EXIT_DEGENERATE
            break
    return exit_code


def cmd_evaluate(args):
    config = PipelineConfig.load(args.config)
    stream = load_stream(args.events)
    if args.post_split:
        _, reference_stream = chronological_split(stream, config.train_fraction)
    else:
        reference_stream = stream

    if args.mock_embedder:
        embedder = MockEmbedder(dim=config.mock_embed_dim)
    else:
        embedder = LocalInferenceClient(base_url=config.base_url, options=config.generation,
                                        embed_model=config.embed_model)

    runs_dir = Path(args.runs)
    run_files = sorted(runs_dir.glob("run_*.jsonl"))
    if not run_files:
        raise InputError(f"no run_*.jsonl files under {runs_dir}")

    policy = None
    per_run_records = []
    summaries = []
    pooled = []
    for run_file in run_files:
        meta_file = run_file.parent / (run_file.stem + ".meta.json")
        run = load_run(run_file, meta_file)
        policy = run.config.policy
        records = evaluate_run(run, reference_stream, embedder,
                               primary_window=config.primary_window_hours,
                               relaxed_window=config.relaxed_window_hours)
        per_run_records.append((run_file.stem, records))
        summaries.append(summarize_run(records, run_file.stem))
        pooled.extend(records)

    aggregate = aggregate_summaries(summaries, pooled_records=pooled)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_records_csv(per_run_records, out_dir / "diagnostics.csv")
    write_moving_average_csv(per_run_records, out_dir / "moving_average.csv")
    write_summary_json(summaries, aggregate, out_dir / "summary.json", policy=policy)
    matched = aggregate["matched_count"]
    print(f"evaluated {len(run_files)} runs: {matched} matched "
          f"({aggregate['primary_match_count']} primary, "
          f"{aggregate['relaxed_match_count']} relaxed) -> {out_dir}")
    return EXIT_OK


POLICY_ORDER = {"hawkes": 0, "last_k": 1, "random_k": 2}


def _format_cell(value):
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def cmd_report(args):
    missing = [p for p in args.summaries if not Path(p).exists()]
    if missing:
        raise InputError("missing evaluation outputs: " + ", ".join(map(str, missing)))
    rows = []
    for path in args.summaries:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        agg = payload["aggregate"]
        rows.append({
            "policy": payload.get("policy") or Path(path).parent.name,
            "mean_s": agg.get("mean_s"),
            "trend": payload["runs"][0]["trend_label"] if len(payload["runs"]) == 1
                     else agg.get("pooled_trend_label", "-"),
            "late_stage_s": agg.get("late_stage_s"),
            "matched": agg.get("matched_count"),
        })
    rows.sort(key=lambda r: (POLICY_ORDER.get(r["policy"], 99), r["policy"]))

    headers = ["policy", "mean_S_t", "trend", "late_stage_S_t", "matched"]
    table_rows = [
        [r["policy"], _format_cell(r["mean_s"]), _format_cell(r["trend"]),
         _format_cell(r["late_stage_s"]), _format_cell(r["matched"])]
        for r in rows
    ]
    widths = [max(len(h), *(len(row[i]) for row in table_rows)) if table_rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in table_rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    table = "\n".join(lines)
    print(table)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(table + "\n", encoding="utf-8")
    with open(out_dir / "report.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        for r in rows:
            writer.writerow([
                r["policy"],
                "" if r["mean_s"] is None else repr(r["mean_s"]),
                r["trend"],
                "" if r["late_stage_s"] is None else repr(r["late_stage_s"]),
                r["matched"],
            ])
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="textcascade",
        description="Hawkes-scheduled text cascade simulation and diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse, dedup, and canonicalize raw article metadata")
    p.add_argument("--input", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "jsonl", "auto"], default="auto")
    p.add_argument("--config")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit the decay grid and keep the best stable model")
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--taxonomy")
    p.add_argument("--config")
    p.add_argument("--post-split", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="generate cascades from a fitted model")
    p.add_argument("--fit", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--policy", choices=["hawkes", "last_k", "random_k"])
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--mock-generator", action="store_true")
    p.add_argument("--post-split", action="store_true")
    p.add_argument("--config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="match runs to held-out events and compute diagnostics")
    p.add_argument("--runs", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mock-embedder", action="store_true")
    p.add_argument("--post-split", action="store_true")
    p.add_argument("--config")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="tabulate evaluation summaries per policy")
    p.add_argument("--summaries", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EmptyInputError, InputError, TaxonomyError, SplitError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NoStableModelError as exc:
        print(f"no stable model: {exc}", file=sys.stderr)
        return EXIT_NO_STABLE
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except DegenerateOutputError as exc:
        print(f"degenerate output: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (CascadeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
