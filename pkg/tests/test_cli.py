import csv
import json
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from textcascade.cli import (
    EXIT_DEGENERATE,
    EXIT_INPUT,
    EXIT_NO_STABLE,
    EXIT_OK,
    EXIT_TRANSPORT,
    main,
)

UTC = timezone.utc
NODE_COUNTS = {
    "local_tv": 69,
    "mass_market": 37,
    "specialist_science_tech": 25,
    "business_finance": 31,
    "general_news": 86,
}
DOMAIN_FOR_LABEL = {
    "local_tv": "tv.example",
    "mass_market": "tabloid.example",
    "specialist_science_tech": "sci.example",
    "business_finance": "biz.example",
    "general_news": "misc-outlet.example",
}


TRAIN_NODE_COUNTS = {
    "local_tv": 51,
    "mass_market": 22,
    "specialist_science_tech": 22,
    "business_finance": 26,
    "general_news": 77,
}
TEST_NODE_COUNTS = {
    "local_tv": 18,
    "mass_market": 15,
    "specialist_science_tech": 3,
    "business_finance": 5,
    "general_news": 9,
}


def write_corpus_csv(path):
    """250 raw rows -> 248 events with the fixed per-node counts over ~263 h.

    Labels are arranged so that the 80/20 chronological split reproduces the
    fixed per-node train/test counts.
    """
    rng = np.random.default_rng(2026)
    train_labels = [l for l, c in TRAIN_NODE_COUNTS.items() for _ in range(c)]
    test_labels = [l for l, c in TEST_NODE_COUNTS.items() for _ in range(c)]
    rng.shuffle(train_labels)
    rng.shuffle(test_labels)
    labels = train_labels + test_labels
    assert len(labels) == 248

    hours = np.sort(rng.uniform(0.0, 263.0, size=248))
    hours[0], hours[-1] = 0.0, 263.0
    base = datetime(2026, 4, 1, tzinfo=UTC)

    rows = []
    for i, (label, h) in enumerate(zip(labels, hours)):
        ts = base + timedelta(seconds=round(float(h) * 3600))
        rows.append({
            "timestamp": ts.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "domain": DOMAIN_FOR_LABEL[label],
            "title": f"Mission update number {i} from {label}",
            "url": f"https://{DOMAIN_FOR_LABEL[label]}/story/{i}",
            "language": "English",
        })
    # two duplicates: one repeated url, one repeated title
    dup_url = dict(rows[10]);  dup_url["title"] = "Different headline, same link"
    dup_title = dict(rows[20]); dup_title["url"] = "https://elsewhere.example/mirror"
    rows.insert(100, dup_url)
    rows.insert(200, dup_title)
    assert len(rows) == 250

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["timestamp", "domain", "title", "url", "language"])
        writer.writeheader()
        writer.writerows(rows)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, request):
    """Ingested corpus plus taxonomy and config files, shared by CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "raw.csv"
    write_corpus_csv(corpus)

    taxonomy = {
        "nodes": [
            {"id": 1, "label": "local_tv"},
            {"id": 2, "label": "mass_market"},
            {"id": 3, "label": "specialist_science_tech"},
            {"id": 4, "label": "business_finance"},
            {"id": 5, "label": "general_news"},
        ],
        "domain_map": {"tv.example": 1, "tabloid.example": 2, "sci.example": 3, "biz.example": 4},
        "fallback_node": 5,
        "instructions": {
            "1": "Write like a local TV news web update.",
            "2": "Write a punchy mass-market headline.",
            "3": "Write a technical mission-status update.",
            "4": "Write a markets-angle one-liner.",
            "5": "Write a straight general-news sentence.",
        },
    }
    tax_path = root / "taxonomy.json"
    tax_path.write_text(json.dumps(taxonomy, indent=2))

    config = {
        "run_count": 2,
        "master_seed": 77,
        "fit": {"beta_grid": [1 / 24, 1 / 12, 1 / 6], "eta": 0.0},
        "run": {"event_cap": 40, "k": 3},
        "generation": {"model_name": "stub", "retries": 0, "request_timeout": 2.0},
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config, indent=2))

    events = root / "events.jsonl"
    code = main(["ingest", "--input", str(corpus), "--taxonomy", str(tax_path),
                 "--out", str(events), "--config", str(cfg_path)])
    assert code == EXIT_OK
    return {"root": root, "events": events, "taxonomy": tax_path, "config": cfg_path}


class TestIngest:
    def test_report_counts_match_fixture(self, workspace):
        report = json.loads((workspace["root"] / "events.report.json").read_text())
        assert report["raw_count"] == 250
        assert report["deduped_count"] == 248
        assert report["per_node_counts"] == NODE_COUNTS
        assert report["horizon_hours"] == pytest.approx(263.0, abs=0.01)

    def test_split_reproduces_per_node_counts(self, workspace):
        from collections import Counter

        from textcascade import chronological_split
        from textcascade.cli import load_stream

        labels = ["local_tv", "mass_market", "specialist_science_tech",
                  "business_finance", "general_news"]
        stream = load_stream(workspace["events"])
        train, test = chronological_split(stream, 0.8)
        train_counts = Counter(labels[e.node - 1] for e in train.events)
        test_counts = Counter(labels[e.node - 1] for e in test.events)
        assert dict(train_counts) == TRAIN_NODE_COUNTS
        assert dict(test_counts) == TEST_NODE_COUNTS

    def test_empty_input_exit_code(self, workspace, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("timestamp,domain,title,url,language\n")
        code = main(["ingest", "--input", str(empty), "--taxonomy", str(workspace["taxonomy"]),
                     "--out", str(tmp_path / "out.jsonl")])
        assert code == EXIT_INPUT

    def test_duplicate_report_delta(self, workspace):
        report = json.loads((workspace["root"] / "events.report.json").read_text())
        assert report["deduped_count"] == report["raw_count"] - 2


@pytest.fixture(scope="module")
def fitted(workspace):
    fit_path = workspace["root"] / "fit.json"
    code = main(["fit", "--events", str(workspace["events"]), "--taxonomy",
                 str(workspace["taxonomy"]), "--out", str(fit_path),
                 "--config", str(workspace["config"]), "--post-split"])
    assert code == EXIT_OK
    return fit_path


class TestFit:
    def test_stable_fit_persisted(self, fitted):
        data = json.loads(fitted.read_text())
        assert data["stable"] is True
        assert data["spectral_radius"] < 1.0
        assert len(data["mu"]) == 5

    def test_grid_csv_written(self, fitted):
        grid = (fitted.parent / "fit.grid.csv").read_text().strip().splitlines()
        assert grid[0] == "beta,log_likelihood,spectral_radius,stable"
        assert len(grid) == 4

    def test_poisson_mask_recovers_rates(self, workspace, tmp_path):
        # alpha fully masked: mu_hat must equal per-node counts over the horizon
        from textcascade import FitConfig, fit as fit_fn
        from textcascade.cli import load_stream

        stream = load_stream(workspace["events"])
        result = fit_fn(stream, beta=0.1, config=FitConfig(beta_grid=(0.1,), eta=0.0),
                        n_nodes=5, edge_mask=np.zeros((5, 5), dtype=bool))
        counts = np.bincount([e.node - 1 for e in stream.events], minlength=5)
        assert result.params.mu == pytest.approx(counts / stream.horizon_hours, rel=1e-4)

    def test_supercritical_data_exits_no_stable(self, workspace, tmp_path):
        taus, t, gap = [], 0.0, 4.0
        for _ in range(80):
            taus.append(t)
            t += gap
            gap *= 0.85
        events_path = tmp_path / "burst.jsonl"
        with open(events_path, "w") as fh:
            for tau in taus:
                fh.write(json.dumps({"tau": tau, "node": 1, "text": "x"}) + "\n")
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"fit": {"beta_grid": [0.05, 0.1, 0.2]}}))
        code = main(["fit", "--events", str(events_path), "--out", str(tmp_path / "f.json"),
                     "--config", str(cfg)])
        assert code == EXIT_NO_STABLE
        # the grid report is still written for inspection
        assert (tmp_path / "f.grid.csv").exists()


@pytest.fixture(scope="module")
def simulated(workspace, fitted):
    out_dir = workspace["root"] / "runs_hawkes"
    code = main(["simulate", "--fit", str(fitted), "--events", str(workspace["events"]),
                 "--taxonomy", str(workspace["taxonomy"]), "--out", str(out_dir),
                 "--policy", "hawkes", "--mock-generator", "--post-split",
                 "--config", str(workspace["config"])])
    assert code == EXIT_OK
    return out_dir


class TestSimulate:
    def test_run_files_exist(self, simulated):
        assert (simulated / "run_000.jsonl").exists()
        assert (simulated / "run_001.jsonl").exists()
        manifest = json.loads((simulated / "simulate.manifest.json").read_text())
        assert manifest["master_seed"] == 77
        assert manifest["post_split"] is True

    def test_event_cap_respected(self, simulated):
        for run_file in simulated.glob("run_*.jsonl"):
            lines = run_file.read_text().strip().splitlines()
            assert len(lines) - 1 <= 40  # seed line excluded

    def test_post_split_seed_is_last_training_event(self, workspace, simulated):
        from textcascade.cli import load_stream
        from textcascade import chronological_split

        stream = load_stream(workspace["events"])
        train, _ = chronological_split(stream, 0.8)
        manifest = json.loads((simulated / "simulate.manifest.json").read_text())
        assert manifest["seed_event"]["tau"] == train.events[-1].tau
        assert manifest["seed_event"]["node"] == train.events[-1].node

    def test_deterministic_rerun_is_byte_identical(self, workspace, fitted, simulated):
        out_again = workspace["root"] / "runs_hawkes_again"
        code = main(["simulate", "--fit", str(fitted), "--events", str(workspace["events"]),
                     "--taxonomy", str(workspace["taxonomy"]), "--out", str(out_again),
                     "--policy", "hawkes", "--mock-generator", "--post-split",
                     "--config", str(workspace["config"])])
        assert code == EXIT_OK
        for name in ("run_000.jsonl", "run_001.jsonl", "simulate.manifest.json"):
            assert (simulated / name).read_bytes() == (out_again / name).read_bytes()

    def test_transport_failure_persists_partial_run(self, workspace, fitted, tmp_path, monkeypatch):
        monkeypatch.setenv("TEXTCASCADE_BASE_URL", "http://127.0.0.1:9")
        out_dir = tmp_path / "runs_dead_backend"
        code = main(["simulate", "--fit", str(fitted), "--events", str(workspace["events"]),
                     "--taxonomy", str(workspace["taxonomy"]), "--out", str(out_dir),
                     "--policy", "last_k", "--post-split", "--config", str(workspace["config"])])
        assert code == EXIT_TRANSPORT
        run_file = out_dir / "run_000.jsonl"
        assert run_file.exists()
        meta = json.loads((out_dir / "run_000.meta.json").read_text())
        assert meta["stop_reason"] == "generator_error"
        assert meta["error"]

    def test_degenerate_completion_exit_code(self, workspace, fitted, tmp_path,
                                             monkeypatch, http_stub):
        base = http_stub(lambda p, b: (200, json.dumps({"response": "  \n"}).encode()))
        monkeypatch.setenv("TEXTCASCADE_BASE_URL", base)
        out_dir = tmp_path / "runs_blank_backend"
        code = main(["simulate", "--fit", str(fitted), "--events", str(workspace["events"]),
                     "--taxonomy", str(workspace["taxonomy"]), "--out", str(out_dir),
                     "--policy", "last_k", "--post-split", "--config", str(workspace["config"])])
        assert code == EXIT_DEGENERATE
        meta = json.loads((out_dir / "run_000.meta.json").read_text())
        assert meta["stop_reason"] == "degenerate_output"


@pytest.fixture(scope="module")
def evaluated(workspace, simulated):
    out_dir = workspace["root"] / "eval_hawkes"
    code = main(["evaluate", "--runs", str(simulated), "--events", str(workspace["events"]),
                 "--out", str(out_dir), "--mock-embedder", "--post-split",
                 "--config", str(workspace["config"])])
    assert code == EXIT_OK
    return out_dir


class TestEvaluate:
    def test_outputs_exist(self, evaluated):
        assert (evaluated / "diagnostics.csv").exists()
        assert (evaluated / "moving_average.csv").exists()
        summary = json.loads((evaluated / "summary.json").read_text())
        assert summary["policy"] == "hawkes"
        assert summary["aggregate"]["run_count"] == 2

    def test_diagnostics_columns(self, evaluated):
        header = (evaluated / "diagnostics.csv").read_text().splitlines()[0]
        assert header == "run_id,t_index,tau,node,matched,window_used,S_t,D_global,D_local"

    def test_deterministic_rerun(self, workspace, simulated, evaluated):
        out_again = workspace["root"] / "eval_hawkes_again"
        code = main(["evaluate", "--runs", str(simulated), "--events", str(workspace["events"]),
                     "--out", str(out_again), "--mock-embedder", "--post-split",
                     "--config", str(workspace["config"])])
        assert code == EXIT_OK
        for name in ("diagnostics.csv", "moving_average.csv", "summary.json"):
            assert (evaluated / name).read_bytes() == (out_again / name).read_bytes()

    def test_missing_runs_dir_is_input_error(self, workspace, tmp_path):
        code = main(["evaluate", "--runs", str(tmp_path / "nope"), "--events",
                     str(workspace["events"]), "--out", str(tmp_path / "out"),
                     "--mock-embedder"])
        assert code == EXIT_INPUT


@pytest.fixture(scope="module")
def three_policy_summaries(workspace, fitted):
    paths = []
    for policy in ("last_k", "random_k"):
        runs_dir = workspace["root"] / f"runs_{policy}"
        code = main(["simulate", "--fit", str(fitted), "--events", str(workspace["events"]),
                     "--taxonomy", str(workspace["taxonomy"]), "--out", str(runs_dir),
                     "--policy", policy, "--mock-generator", "--post-split",
                     "--config", str(workspace["config"])])
        assert code == EXIT_OK
        eval_dir = workspace["root"] / f"eval_{policy}"
        code = main(["evaluate", "--runs", str(runs_dir), "--events", str(workspace["events"]),
                     "--out", str(eval_dir), "--mock-embedder", "--post-split",
                     "--config", str(workspace["config"])])
        assert code == EXIT_OK
        paths.append(eval_dir / "summary.json")
    return [workspace["root"] / "eval_hawkes" / "summary.json"] + paths


class TestReport:
    def test_three_policy_table_order(self, workspace, evaluated, three_policy_summaries, tmp_path):
        out_dir = tmp_path / "report"
        # pass summaries deliberately out of order; output must be reordered
        code = main(["report", "--summaries", str(three_policy_summaries[2]),
                     str(three_policy_summaries[0]), str(three_policy_summaries[1]),
                     "--out", str(out_dir)])
        assert code == EXIT_OK
        lines = (out_dir / "report.txt").read_text().strip().splitlines()
        policies = [line.split()[0] for line in lines[2:]]
        assert policies == ["hawkes", "last_k", "random_k"]

    def test_csv_twin_round_trips(self, workspace, evaluated, three_policy_summaries, tmp_path):
        out_dir = tmp_path / "report_rt"
        code = main(["report", "--summaries"] + [str(p) for p in three_policy_summaries]
                    + ["--out", str(out_dir)])
        assert code == EXIT_OK
        with open(out_dir / "report.csv") as fh:
            rows = list(csv.DictReader(fh))
        for row in rows:
            payload = json.loads((workspace["root"] / f"eval_{row['policy']}" / "summary.json").read_text())
            expected = payload["aggregate"]["mean_s"]
            assert float(row["mean_S_t"]) == expected

    def test_single_policy_table(self, evaluated, tmp_path):
        out_dir = tmp_path / "single"
        code = main(["report", "--summaries", str(evaluated / "summary.json"),
                     "--out", str(out_dir)])
        assert code == EXIT_OK
        lines = (out_dir / "report.txt").read_text().strip().splitlines()
        assert len(lines) == 3  # header, rule, one row

    def test_missing_summary_lists_absent_files(self, tmp_path, capsys):
        code = main(["report", "--summaries", str(tmp_path / "gone.json"),
                     "--out", str(tmp_path / "r")])
        assert code == EXIT_INPUT
        captured = capsys.readouterr()
        assert "gone.json" in captured.err
