"""Compact weighted prompt-memory selection.

The fitted-process policy scores each candidate source node by its learned
excitation toward the upcoming node times a decayed count of its prior
events, thresholds and keeps the top-k, then normalizes the kept scores into
weights. The chronological and random baselines pick whole events instead of
node representatives, with uniform weights.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import CascadeError

SCORE_FLOOR = 1e-15  # total raw score at or below this counts as zero


@dataclass(frozen=True)
class MemoryItem:
    node: int
    rep_index: int
    weight: float


@dataclass
class Memory:
    """Selected prompt memory for one generation step."""

    items: list
    step_tau: float
    step_node: int

    def __post_init__(self):
        if self.items:
            total = sum(item.weight for item in self.items)
            if any(item.weight <= 0 for item in self.items):
                raise ValueError("memory weights must be strictly positive")
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"memory weights must sum to 1, got {total}")

    @property
    def is_empty(self):
        return not self.items


@dataclass(frozen=True)
class MemoryCandidate:
    """Scored candidate source node prior to thresholding."""

    node: int
    rep_index: int
    decayed_state: float
    raw_score: float
    normalized_share: float


def score_candidates(params, history, tau_t, node_t):
    """Score every eligible source node for the upcoming (tau_t, node_t) step.

    Eligible nodes have an allowed edge into node_t and at least one event
    strictly before tau_t. The representative index is the latest such event.
    """
    n = params.n_nodes
    i0 = node_t - 1
    decayed = np.zeros(n)
    rep_index = np.full(n, -1, dtype=int)
    for idx, event in enumerate(history):
        if event.tau < tau_t:
            decayed[event.node - 1] += math.exp(-params.beta * (tau_t - event.tau))
            rep_index[event.node - 1] = idx

    raw = np.where(params.edge_mask[:, i0], params.alpha[:, i0] * decayed, 0.0)
    eligible = [j0 for j0 in range(n) if params.edge_mask[j0, i0] and rep_index[j0] >= 0]
    total = float(sum(raw[j0] for j0 in eligible))

    candidates = []
    for j0 in eligible:
        share = raw[j0] / total if total > SCORE_FLOOR else 0.0
        candidates.append(MemoryCandidate(
            node=j0 + 1,
            rep_index=int(rep_index[j0]),
            decayed_state=float(decayed[j0]),
            raw_score=float(raw[j0]),
            normalized_share=float(share),
        ))
    return candidates


def hawkes_memory(params, history, tau_t, node_t, k, eps_raw, eps_norm):
    """Top-k excitation-weighted node representatives for the next prompt.

    Candidates must pass both the raw-score and the normalized-share
    thresholds; kept scores are renormalized to weights summing to one.
    An empty Memory is a legal outcome.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    candidates = score_candidates(params, history, tau_t, node_t)
    total = sum(c.raw_score for c in candidates)
    if total <= SCORE_FLOOR:
        return Memory([], tau_t, node_t)

    # selected weights must be strictly positive, so zero scores never qualify
    kept = [c for c in candidates
            if c.raw_score > 0.0 and c.raw_score >= eps_raw and c.normalized_share >= eps_norm]
    kept.sort(key=lambda c: (-c.raw_score, c.node))
    kept = kept[:k]
    if not kept:
        return Memory([], tau_t, node_t)

    kept_total = sum(c.raw_score for c in kept)
    items = [MemoryItem(c.node, c.rep_index, c.raw_score / kept_total) for c in kept]
    return Memory(items, tau_t, node_t)


def last_k_memory(history, tau_t, k, node_t=0):
    """The k most recent strictly-prior events, uniformly weighted."""
    if k < 1:
        raise ValueError("k must be >= 1")
    prior = [idx for idx, e in enumerate(history) if e.tau < tau_t]
    chosen = prior[-k:]
    chosen.reverse()  # most recent first
    if not chosen:
        return Memory([], tau_t, node_t)
    w = 1.0 / len(chosen)
    items = [MemoryItem(history[idx].node, idx, w) for idx in chosen]
    return Memory(items, tau_t, node_t)


def random_k_memory(history, tau_t, k, rng, node_t=0):
    """k strictly-prior events drawn uniformly without replacement."""
    if k < 1:
        raise ValueError("k must be >= 1")
    prior = [idx for idx, e in enumerate(history) if e.tau < tau_t]
    if not prior:
        return Memory([], tau_t, node_t)
    size = min(k, len(prior))
    picked = rng.choice(len(prior), size=size, replace=False)
    chosen = sorted((prior[int(p)] for p in picked), reverse=True)
    w = 1.0 / len(chosen)
    items = [MemoryItem(history[idx].node, idx, w) for idx in chosen]
    return Memory(items, tau_t, node_t)


POLICY_NAMES = ("hawkes", "last_k", "random_k")


def make_policy(name, params=None, k=3, eps_raw=1e-5, eps_norm=0.03):
    """Build a policy callable (history, tau_t, node_t, rng) -> Memory."""
    if name == "hawkes":
        if params is None:
            raise CascadeError("the hawkes policy needs fitted parameters")

        def policy(history, tau_t, node_t, rng):
            return hawkes_memory(params, history, tau_t, node_t, k, eps_raw, eps_norm)
    elif name == "last_k":

        def policy(history, tau_t, node_t, rng):
            return last_k_memory(history, tau_t, k, node_t=node_t)
    elif name == "random_k":

        def policy(history, tau_t, node_t, rng):
            return random_k_memory(history, tau_t, k, rng, node_t=node_t)
    else:
        raise ValueError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")
    return policy
