"""Human-readable episode traces: the agent's token memory on disk.

Line-delimited UTF-8 JSON. The first line is episode metadata
({"variant", "seed", "episode", "success"}); every following line is one
timestep ({"t", "concept", "tokens", "action", "reward"}) where "tokens" is
a list of [token, cosine score] pairs, empty for steps the history branch
skipped. Timesteps are contiguous from 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ArgumentError, StorageError, TraceError
from .stores import EmbeddingStore, TokenVocabulary, cluster_of_token


@dataclass(frozen=True)
class TraceStep:
    t: int
    concept_label: str
    tokens: tuple[tuple[str, float], ...]
    action: int
    reward: float


@dataclass(frozen=True)
class EpisodeTrace:
    variant: str
    seed: int
    episode: int
    success: bool
    steps: tuple[TraceStep, ...]

    def __post_init__(self):
        for want, step in enumerate(self.steps):
            if step.t != want:
                raise ArgumentError(
                    f"trace timesteps must be contiguous from 0; "
                    f"found t={step.t} at position {want}"
                )


def write_trace(trace: EpisodeTrace, path: str | Path) -> None:
    lines = [json.dumps({
        "variant": trace.variant, "seed": trace.seed,
        "episode": trace.episode, "success": trace.success,
    }, sort_keys=True)]
    for s in trace.steps:
        lines.append(json.dumps({
            "t": s.t, "concept": s.concept_label,
            "tokens": [[tok, score] for tok, score in s.tokens],
            "action": s.action, "reward": s.reward,
        }, sort_keys=True))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write trace to {path}: {e}") from e


def read_trace(path: str | Path) -> EpisodeTrace:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot read trace from {path}: {e}") from e
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise TraceError(f"{path}: empty trace file")

    def parse(line_no: int, line: str) -> dict:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise TraceError(f"{path}: malformed JSON on line {line_no}: {e}") from e
        if not isinstance(obj, dict):
            raise TraceError(f"{path}: line {line_no} is not an object")
        return obj

    head = parse(1, lines[0])
    steps = []
    for i, line in enumerate(lines[1:], start=2):
        obj = parse(i, line)
        try:
            steps.append(TraceStep(
                t=int(obj["t"]),
                concept_label=str(obj["concept"]),
                tokens=tuple((str(tok), float(score)) for tok, score in obj["tokens"]),
                action=int(obj["action"]),
                reward=float(obj["reward"]),
            ))
        except (KeyError, TypeError, ValueError) as e:
            raise TraceError(f"{path}: bad step record on line {i}: {e}") from e
    try:
        return EpisodeTrace(
            variant=str(head["variant"]), seed=int(head["seed"]),
            episode=int(head["episode"]), success=bool(head["success"]),
            steps=tuple(steps),
        )
    except (KeyError, TypeError, ValueError, ArgumentError) as e:
        raise TraceError(f"{path}: bad trace: {e}") from e


def validate_trace(trace: EpisodeTrace, vocabulary: TokenVocabulary) -> None:
    """Every token string in the trace must belong to the vocabulary."""
    for step in trace.steps:
        for tok, _ in step.tokens:
            if tok not in vocabulary:
                raise TraceError(
                    f"step {step.t}: token {tok!r} is not in the vocabulary"
                )


def retrieval_accuracy(trace: EpisodeTrace, store: EmbeddingStore) -> float:
    """Fraction of token-bearing steps whose top-1 token's cluster matches
    the step's ground-truth concept label."""
    hits, total = 0, 0
    for step in trace.steps:
        if not step.tokens:
            continue
        total += 1
        top = step.tokens[0][0]
        idx = store.vocabulary.index_of(top)
        if cluster_of_token(store, idx).label == step.concept_label:
            hits += 1
    if total == 0:
        raise ArgumentError("trace has no token-bearing steps")
    return hits / total
