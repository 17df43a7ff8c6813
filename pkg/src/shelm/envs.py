"""Toy partially observable environments with exactly known optima.

Observations are noisy samples from a synthetic store's concept clusters, so
ground-truth semantics exist for every frame and retrieval accuracy is
directly measurable. The store's first n_concepts clusters are cue concepts;
the remaining clusters are fillers/distractors and carry no reward-relevant
information.

tmaze_memory: the first observation shows a cue concept; the agent is then
walked down a corridor of constant filler observations and must pick the
junction side associated with the cue. The junction observation is
independent of the cue, so any memoryless policy earns exactly 0.5 in
expectation (sides are balanced across cues).

distractor_tmaze: same task, but every corridor observation is a fresh
sample of a random non-cue cluster (pure noise).

concept_grid: a corridor_length x corridor_length grid; n_concepts cells
each emit their own concept, every other cell emits filler. Reward for
reaching the cell whose concept matches the reset-time cue.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, StateError
from .seeding import rng_for
from .stores import EmbeddingStore, sample_cluster_observation

TMAZE_MEMORY = "tmaze_memory"
DISTRACTOR_TMAZE = "distractor_tmaze"
CONCEPT_GRID = "concept_grid"
ENV_KINDS = (TMAZE_MEMORY, DISTRACTOR_TMAZE, CONCEPT_GRID)


@dataclass(frozen=True)
class Observation:
    features: np.ndarray  # float32, the "visual" embedding the agent sees
    concept_label: str  # ground truth, for evaluation only


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EnvSpec:
    kind: str
    corridor_length: int  # grid side length for concept_grid
    n_concepts: int
    episode_limit: int
    seed: int
    store: EmbeddingStore

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ArgumentError(f"unknown env kind {self.kind!r}")
        if self.corridor_length < 1:
            raise ArgumentError("corridor_length must be >= 1")
        if self.n_concepts < 2:
            raise ArgumentError("n_concepts must be >= 2")
        if self.episode_limit <= self.corridor_length:
            raise ArgumentError("episode_limit must exceed corridor_length")
        clusters = self.store.metadata.clusters
        if clusters is None:
            raise ArgumentError("env store needs synthetic cluster metadata")
        if len(clusters) < self.n_concepts + 1:
            raise ArgumentError(
                f"store has {len(clusters)} clusters; need n_concepts + 1 = "
                f"{self.n_concepts + 1} (cues plus at least one filler)"
            )
        if self.kind in (TMAZE_MEMORY, DISTRACTOR_TMAZE) and self.n_concepts % 2 != 0:
            raise ArgumentError(
                "tmaze variants need an even n_concepts so junction sides balance"
            )
        if self.kind == CONCEPT_GRID and self.n_concepts > self.corridor_length**2 - 1:
            raise ArgumentError("grid too small for n_concepts target cells")

    @property
    def cue_labels(self) -> list[str]:
        return [c.label for c in self.store.metadata.clusters[: self.n_concepts]]

    @property
    def filler_label(self) -> str:
        return self.store.metadata.clusters[self.n_concepts].label

    @property
    def distractor_labels(self) -> list[str]:
        return [c.label for c in self.store.metadata.clusters[self.n_concepts:]]

    @property
    def n_actions(self) -> int:
        return 4 if self.kind == CONCEPT_GRID else 2


def cue_side_map(spec: EnvSpec) -> dict[str, int]:
    """Fixed balanced assignment of cue concepts to junction sides."""
    perm = rng_for("cue-side", spec.seed).permutation(spec.n_concepts)
    side = {}
    for rank, concept_idx in enumerate(perm):
        side[spec.cue_labels[int(concept_idx)]] = 0 if rank < spec.n_concepts // 2 else 1
    return side


def grid_layout(spec: EnvSpec) -> dict[tuple[int, int], str]:
    """Cell -> concept label. Start cell (0, 0) is always filler."""
    g = spec.corridor_length
    cells = [(r, c) for r in range(g) for c in range(g) if (r, c) != (0, 0)]
    rng = rng_for("grid-layout", spec.seed)
    chosen = rng.choice(len(cells), size=spec.n_concepts, replace=False)
    layout = {cell: spec.filler_label for cell in cells}
    layout[(0, 0)] = spec.filler_label
    for label, cell_idx in zip(spec.cue_labels, chosen):
        layout[cells[int(cell_idx)]] = label
    return layout


class ToyEnv:
    """One environment instance; exclusively owned by a single worker."""

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        self._side = cue_side_map(spec) if spec.kind != CONCEPT_GRID else None
        self._layout = grid_layout(spec) if spec.kind == CONCEPT_GRID else None
        self._rng: np.random.Generator | None = None
        self._done = True
        self._steps = 0
        self._cue: str | None = None
        self._pos = 0
        self._grid_pos = (0, 0)

    @property
    def n_actions(self) -> int:
        return self.spec.n_actions

    def _sample(self, label: str) -> Observation:
        feats = sample_cluster_observation(self.spec.store, label, self._rng)
        return Observation(features=feats, concept_label=label)

    def _corridor_observation(self) -> Observation:
        if self.spec.kind == DISTRACTOR_TMAZE:
            pool = self.spec.distractor_labels
            label = pool[int(self._rng.integers(len(pool)))]
            return self._sample(label)
        return self._sample(self.spec.filler_label)

    def reset(self, episode_seed: int) -> Observation:
        self._rng = rng_for("episode", self.spec.seed, episode_seed)
        self._done = False
        self._steps = 0
        self._pos = 0
        self._grid_pos = (0, 0)
        self._cue = self.spec.cue_labels[int(self._rng.integers(self.spec.n_concepts))]
        return self._sample(self._cue)

    @property
    def cue(self) -> str:
        if self._cue is None:
            raise StateError("reset the environment first")
        return self._cue

    def step(self, action: int) -> StepResult:
        if self._done:
            raise StateError("step() after episode end; call reset()")
        if not 0 <= action < self.n_actions:
            raise ArgumentError(f"action {action} out of range [0, {self.n_actions})")
        self._steps += 1
        if self.spec.kind == CONCEPT_GRID:
            result = self._step_grid(action)
        else:
            result = self._step_tmaze(action)
        if not result.done and self._steps >= self.spec.episode_limit:
            result = StepResult(observation=result.observation, reward=0.0, done=True,
                                info={**result.info, "truncated": True})
        self._done = result.done
        return result

    def _step_tmaze(self, action: int) -> StepResult:
        L = self.spec.corridor_length
        if self._pos < L:
            # on rails: any action advances toward the junction
            self._pos += 1
            at_junction = self._pos == L
            obs = (self._sample(self.spec.filler_label) if at_junction
                   else self._corridor_observation())
            return StepResult(observation=obs, reward=0.0, done=False,
                              info={"position": self._pos, "at_junction": at_junction})
        correct = self._side[self._cue]
        reward = 1.0 if action == correct else 0.0
        obs = self._sample(self.spec.filler_label)
        return StepResult(observation=obs, reward=reward, done=True,
                          info={"position": self._pos, "chose": action, "correct": correct})

    def _step_grid(self, action: int) -> StepResult:
        g = self.spec.corridor_length
        dr, dc = ((-1, 0), (1, 0), (0, -1), (0, 1))[action]
        r = min(max(self._grid_pos[0] + dr, 0), g - 1)
        c = min(max(self._grid_pos[1] + dc, 0), g - 1)
        self._grid_pos = (r, c)
        label = self._layout[self._grid_pos]
        reached = label == self._cue
        obs = self._sample(label)
        return StepResult(observation=obs, reward=1.0 if reached else 0.0, done=reached,
                          info={"position": self._grid_pos})


def oracle_return(spec: EnvSpec) -> float:
    """Exact optimal expected return by exhaustive search over
    cue-conditioned policies. Refuses instances too large to enumerate."""
    if spec.corridor_length > 8 or spec.n_concepts > 4:
        raise ArgumentError(
            "oracle_return only handles corridor_length <= 8 and n_concepts <= 4"
        )
    if spec.kind in (TMAZE_MEMORY, DISTRACTOR_TMAZE):
        side = cue_side_map(spec)
        # a cue-conditioned policy picks one junction action per cue
        best = [max(1.0 if a == side[cue] else 0.0 for a in (0, 1))
                for cue in spec.cue_labels]
        return float(np.mean(best))

    layout = grid_layout(spec)
    g = spec.corridor_length
    values = []
    for cue in spec.cue_labels:
        targets = {cell for cell, label in layout.items() if label == cue}
        # finite-horizon DP over (cell, steps used); reward on arrival
        best = {cell: 0.0 for cell in layout}
        for _ in range(spec.episode_limit):
            nxt = {}
            for cell in layout:
                options = []
                for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    r = min(max(cell[0] + dr, 0), g - 1)
                    c = min(max(cell[1] + dc, 0), g - 1)
                    options.append(1.0 if (r, c) in targets else best[(r, c)])
                nxt[cell] = max(options)
            best = nxt
        values.append(best[(0, 0)])
    return float(np.mean(values))
