"""Deterministic prompt rendering.

The rendered field order is fixed: Role, Task, Constraints, Target node,
Node style, Simulated time since seed, Weighted predecessor context (or the
no-predecessor sentence), Output. Weights and simulated time are formatted
to two decimals so identical inputs render byte-identically.
"""

import hashlib
from dataclasses import dataclass, field

DEFAULT_ROLE = "You are simulating one item in a Hawkes-driven cross-node news cascade."
DEFAULT_TASK = "Write exactly one concise English sentence or headline-like update."
DEFAULT_CONSTRAINTS = (
    "Use only the weighted predecessor texts below; do not mention weights, "
    "simulations, models, or prompts. Do not copy predecessor wording verbatim. "
    "Preserve the core Artemis II subject while allowing natural semantic drift."
)
DEFAULT_OUTPUT = "Only the generated news item."
NO_PREDECESSOR_SENTENCE = "No predecessor context."


@dataclass
class PromptSpec:
    """Everything build_prompt needs for one generation step.

    memory_items is an ordered list of (weight, node_label, text), heaviest
    first.
    """

    target_node_label: str
    node_style: str
    sim_time_hours: float
    memory_items: list = field(default_factory=list)
    role: str = DEFAULT_ROLE
    task: str = DEFAULT_TASK
    constraints: str = DEFAULT_CONSTRAINTS
    output_line: str = DEFAULT_OUTPUT


def build_prompt(spec):
    """Render a PromptSpec to its canonical byte-deterministic string."""
    if not spec.node_style.strip():
        raise ValueError("node_style must be non-empty")
    lines = [
        f"Role: {spec.role}",
        f"Task: {spec.task}",
        f"Constraints: {spec.constraints}",
        f"Target node: {spec.target_node_label}",
        f"Node style: {spec.node_style}",
        f"Simulated time since seed: {spec.sim_time_hours:.2f} hours",
    ]
    if spec.memory_items:
        lines.append("Weighted predecessor context:")
        for pos, (weight, label, text) in enumerate(spec.memory_items, start=1):
            lines.append(f"{pos}. (weight={weight:.2f}, node={label}) {text}")
    else:
        lines.append(NO_PREDECESSOR_SENTENCE)
    lines.append(f"Output: {spec.output_line}")
    return "\n".join(lines)


def prompt_hash(prompt):
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()
