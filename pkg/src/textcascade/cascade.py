"""Event-time sampling by thinning and the full semantic propagation loop.

The sampler works on a per-source-node decayed state vector, so it only ever
sees (tau, node) information; texts enter the loop strictly after the next
timestamp and node are fixed.
"""

import json
import math
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import CascadeError, DegenerateOutputError, RateExtinctionError, TransportError
from .events import Event, EventStream
from .prompts import PromptSpec, build_prompt, prompt_hash

RATE_FLOOR = 1e-12
PLACEHOLDER_TEXT = "(no output)"


@dataclass
class RunConfig:
    event_cap: int = 40
    horizon_end: float = None
    rng_seed: int = 0
    policy: str = "hawkes"
    k: int = 3
    eps_raw: float = 1e-5
    eps_norm: float = 0.03

    def __post_init__(self):
        if self.event_cap < 1:
            raise ValueError("event_cap must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.eps_raw < 0 or self.eps_norm < 0:
            raise ValueError("thresholds must be >= 0")


@dataclass
class CascadeRun:
    seed: Event
    events: list
    memories: list
    prompts: list
    config: RunConfig
    params_ref: str = ""
    stop_reason: str = ""
    error: str = None


def make_rng(seed):
    """Counter-based deterministic generator; one stream per run."""
    return np.random.Generator(np.random.Philox(int(seed)))


def _state_from_projection(params, projection, start):
    state = np.zeros(params.n_nodes)
    for tau, node in projection:
        if tau > start:
            raise ValueError("projection events must not lie beyond the start time")
        state[int(node) - 1] += math.exp(-params.beta * (start - tau))
    return state


def _sample_from_state(params, state, start, rng):
    """Thinning with the right-limit total rate as the local upper bound.

    Between events the exponential-kernel total rate only decays, so the
    bound holds on each proposal interval; it is refreshed at every rejected
    proposal time. Returns the accepted time, node, and the decayed state at
    the accepted time (event not yet added).
    """
    s = start
    while True:
        bound_vec = params.mu + params.alpha.T @ state
        lam_bar = float(bound_vec.sum())
        if lam_bar <= RATE_FLOOR:
            raise RateExtinctionError(
                f"total intensity {lam_bar:.3e} at t={s:.6f} with no background rate"
            )
        gap = rng.exponential(1.0 / lam_bar)
        s = s + gap
        state = state * math.exp(-params.beta * gap)
        lam_vec = params.mu + params.alpha.T @ state
        lam_total = float(lam_vec.sum())
        assert lam_total <= lam_bar * (1.0 + 1e-12), "thinning bound violated"
        if rng.uniform() * lam_bar <= lam_total:
            node0 = int(rng.choice(params.n_nodes, p=lam_vec / lam_total))
            return s, node0 + 1, state


def sample_next_event(params, projection, start, rng):
    """Sample the next (tau, node) after `start` given a (tau, node) history."""
    state = _state_from_projection(params, projection, start)
    tau_next, node_next, _ = _sample_from_state(params, state, start, rng)
    return tau_next, node_next


def simulate_stream(params, horizon, rng, max_events=1_000_000):
    """Forward-simulate a node-time stream over [0, horizon] from empty history."""
    state = np.zeros(params.n_nodes)
    t = 0.0
    events = []
    while len(events) < max_events:
        try:
            tau, node, state = _sample_from_state(params, state, t, rng)
        except RateExtinctionError:
            break
        if tau > horizon:
            break
        events.append(Event(tau, node, text=""))
        state[node - 1] += 1.0
        t = tau
    return EventStream(events, datetime(1970, 1, 1, tzinfo=timezone.utc), float(horizon))


def run_cascade(seed, params, taxonomy, policy, generator, config,
                params_ref="", prompt_overrides=None,
                degenerate_text_policy="abort"):
    """Propagation loop: sample (tau, node), select memory, render, generate.

    Fully deterministic for a fixed config.rng_seed and a deterministic
    generator. Generator transport failures abort the run but preserve the
    partial result together with an error record.
    """
    if not 1 <= seed.node <= params.n_nodes:
        raise ValueError(f"seed node {seed.node} outside 1..{params.n_nodes}")
    overrides = prompt_overrides or {}
    rng = make_rng(config.rng_seed)
    history = [seed]
    events, memories, prompts = [], [], []
    state = np.zeros(params.n_nodes)
    state[seed.node - 1] = 1.0
    t_cur = seed.tau
    stop_reason = ""
    error = None

    while len(events) < config.event_cap:
        try:
            tau_t, node_t, state_at_accept = _sample_from_state(params, state, t_cur, rng)
        except RateExtinctionError as exc:
            stop_reason = "rate_extinction"
            error = str(exc)
            break
        if config.horizon_end is not None and tau_t > config.horizon_end:
            stop_reason = "horizon"
            break

        memory = policy(history, tau_t, node_t, rng)
        items = [
            (item.weight, taxonomy.label(item.node), history[item.rep_index].text)
            for item in memory.items
        ]
        spec = PromptSpec(
            target_node_label=taxonomy.label(node_t),
            node_style=taxonomy.instruction(node_t),
            sim_time_hours=tau_t - seed.tau,
            memory_items=items,
            **overrides,
        )
        prompt = build_prompt(spec)
        try:
            text = generator.generate(prompt)
        except DegenerateOutputError as exc:
            if degenerate_text_policy == "placeholder":
                text = PLACEHOLDER_TEXT
            else:
                stop_reason = "degenerate_output"
                error = f"degenerate completion at step {len(events) + 1}: {exc}"
                break
        except TransportError as exc:
            stop_reason = "generator_error"
            error = f"generator transport failure at step {len(events) + 1}: {exc}"
            break

        event = Event(tau_t, node_t, text)
        history.append(event)
        events.append(event)
        memories.append(memory)
        prompts.append(prompt)
        state = state_at_accept
        state[node_t - 1] += 1.0
        t_cur = tau_t

    if not stop_reason:
        stop_reason = "event_cap"
    return CascadeRun(
        seed=seed,
        events=events,
        memories=memories,
        prompts=prompts,
        config=config,
        params_ref=params_ref,
        stop_reason=stop_reason,
        error=error,
    )


def save_run(run, events_path, meta_path):
    """Persist a run: JSONL (one line per event, seed first) plus a sidecar."""
    with open(events_path, "w", encoding="utf-8") as fh:
        seed_row = {
            "t_index": 0,
            "tau": run.seed.tau,
            "node": run.seed.node,
            "text": run.seed.text,
            "memory": [],
            "prompt_hash": None,
        }
        fh.write(json.dumps(seed_row, ensure_ascii=False) + "\n")
        for idx, (event, memory, prompt) in enumerate(
            zip(run.events, run.memories, run.prompts), start=1
        ):
            row = {
                "t_index": idx,
                "tau": event.tau,
                "node": event.node,
                "text": event.text,
                "memory": [
                    {"node": m.node, "rep_index": m.rep_index, "weight": m.weight}
                    for m in memory.items
                ],
                "prompt_hash": prompt_hash(prompt),
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    meta = {
        "config": asdict(run.config),
        "params_ref": run.params_ref,
        "stop_reason": run.stop_reason,
        "error": run.error,
        "n_events": len(run.events),
    }
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def load_run(events_path, meta_path):
    """Reload a persisted run. Rendered prompts are not stored, only hashes."""
    from .memory import Memory, MemoryItem

    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    config = RunConfig(**meta["config"])

    seed = None
    events, memories = [], []
    with open(events_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            event = Event(float(row["tau"]), int(row["node"]), str(row["text"]))
            if int(row["t_index"]) == 0:
                seed = event
                continue
            events.append(event)
            items = [
                MemoryItem(int(m["node"]), int(m["rep_index"]), float(m["weight"]))
                for m in row.get("memory", [])
            ]
            memories.append(Memory(items, event.tau, event.node))
    if seed is None:
        raise CascadeError(f"run file {events_path} has no seed line")
    return CascadeRun(
        seed=seed,
        events=events,
        memories=memories,
        prompts=None,
        config=config,
        params_ref=meta.get("params_ref", ""),
        stop_reason=meta.get("stop_reason", ""),
        error=meta.get("error"),
    )
