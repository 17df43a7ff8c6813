"""Actor-critic agent with a trainable current-observation branch and a
frozen history branch, trained with clipped PPO.

Variant dispatch for the history branch:

    markovian_ppo   no history
    helm_fh         random-attention mixture -> cached transformer
    helmv2_bn       statistic-matched embedding -> cached transformer
    helmv2_ret      statistic-matched embedding -> top-k in LM space
                    -> token rows -> cached transformer
    shelm           top-k retrieval -> token rows -> cached transformer
    shelm_clip      shelm history; current branch is the frozen embedding
    shelm_cnn       detached trainable features -> cached transformer
    shelm_lstm      top-k retrieval -> token rows -> frozen LSTM
    lstm_baseline   trainable LSTM over current features (the one variant
                    whose history parameters receive gradients)

The frozen pieces are shared read-only; each rollout worker owns its own
cache/recurrent state. Features for a step include that step's own tokens:
the policy at time t sees the history summary after consuming observation t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
import numpy as np
import torch
from torch import nn

from .encoder import (
    EncoderConfig,
    KIND_LSTM,
    KIND_TRANSFORMER,
    LstmEncoder,
    CachedTransformerEncoder,
    make_encoder,
)
from .errors import ArgumentError, ShelmError, StateError
from .projection import BatchNormMapper, FrozenHopfieldProjector
from .retrieval import (
    PromptSet,
    RetrievalIndex,
    RetrievalResult,
    StoreLookupEncoder,
    build_index,
    retrieve_topk,
)
from .seeding import rng_for, stable_hash64
from .stores import LM_INPUT_SPACE, EmbeddingStore

VARIANTS = (
    "markovian_ppo",
    "lstm_baseline",
    "helm_fh",
    "helmv2_bn",
    "helmv2_ret",
    "shelm",
    "shelm_clip",
    "shelm_cnn",
    "shelm_lstm",
)

_FROZEN_HISTORY_VARIANTS = (
    "helm_fh", "helmv2_bn", "helmv2_ret", "shelm", "shelm_clip", "shelm_cnn", "shelm_lstm",
)


@dataclass(frozen=True)
class PpoConfig:
    learning_rate: float = 3e-4
    clip_epsilon: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    gamma: float = 0.99
    gae_lambda: float = 0.95
    rollout_length: int = 64
    epochs: int = 4
    minibatches: int = 4
    n_workers: int = 8
    total_steps: int = 100_000
    history_frameskip: int = 1
    tokens_per_obs: int = 2
    # linear schedules: the multiplier each quantity reaches at the end of
    # training (1.0 = constant)
    lr_anneal: float = 1.0
    entropy_anneal: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ArgumentError("clip_epsilon must be in (0, 1)")
        if not 0.0 <= self.lr_anneal <= 1.0 or not 0.0 <= self.entropy_anneal <= 1.0:
            raise ArgumentError("anneal fractions must be in [0, 1]")
        if not 0.0 < self.gamma <= 1.0 or not 0.0 < self.gae_lambda <= 1.0:
            raise ArgumentError("gamma and gae_lambda must be in (0, 1]")
        if self.rollout_length < 1:
            raise ArgumentError("rollout_length must be >= 1")
        for name in ("learning_rate", "value_coef", "entropy_coef"):
            if getattr(self, name) < 0:
                raise ArgumentError(f"{name} must be >= 0")
        for name in ("epochs", "minibatches", "n_workers", "total_steps",
                     "history_frameskip", "tokens_per_obs"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name} must be >= 1")


def _init_policy_linear(lin: nn.Linear, gen: torch.Generator, gain: float = 1.0) -> None:
    std = gain * math.sqrt(2.0 / (lin.in_features + lin.out_features))
    with torch.no_grad():
        lin.weight.normal_(0.0, std, generator=gen)
        lin.bias.zero_()


class PolicyNet(nn.Module):
    """Trainable policy/value heads over [current features, history vector]."""

    def __init__(self, obs_dim: int, history_dim: int, n_actions: int, seed: int,
                 hidden: int = 64, frozen_current: bool = False,
                 recurrent_history: bool = False):
        super().__init__()
        gen = torch.Generator().manual_seed(stable_hash64("policy", seed) % (2**62))
        self.obs_dim = obs_dim
        self.history_dim = history_dim
        self.frozen_current = frozen_current
        self.recurrent_history = recurrent_history
        if frozen_current:
            self.encoder = None
            feat_dim = obs_dim
        else:
            self.encoder = nn.Sequential(
                nn.Linear(obs_dim, hidden), nn.Tanh(),
                nn.Linear(hidden, hidden), nn.Tanh(),
            )
            for m in self.encoder:
                if isinstance(m, nn.Linear):
                    _init_policy_linear(m, gen)
            feat_dim = hidden
        self.feat_dim = feat_dim
        if recurrent_history:
            self.rnn = nn.LSTMCell(feat_dim, history_dim)
            for p in self.rnn.parameters():
                with torch.no_grad():
                    if p.ndim == 2:
                        p.normal_(0.0, 1.0 / math.sqrt(history_dim), generator=gen)
                    else:
                        p.zero_()
        else:
            self.rnn = None
        fused = feat_dim + history_dim
        self.trunk = nn.Sequential(nn.Linear(fused, hidden), nn.Tanh())
        _init_policy_linear(self.trunk[0], gen)
        self.actor = nn.Linear(hidden, n_actions)
        self.critic = nn.Linear(hidden, 1)
        _init_policy_linear(self.actor, gen, gain=0.01)
        _init_policy_linear(self.critic, gen)

    def current_features(self, obs: torch.Tensor) -> torch.Tensor:
        return obs if self.encoder is None else self.encoder(obs)

    def heads(self, fused: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        z = self.trunk(fused)
        return self.actor(z), self.critic(z).squeeze(-1)

    def forward(self, obs: torch.Tensor, history: torch.Tensor | None):
        feat = self.current_features(obs)
        if self.history_dim:
            if history is None:
                raise StateError("variant expects a history vector")
            fused = torch.cat([feat, history], dim=-1)
        else:
            fused = feat
        return self.heads(fused)


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Batch-normalize advantages to mean 0, std 1 (float64)."""
    adv = np.asarray(advantages, dtype=np.float64).reshape(-1)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def clipped_surrogate_loss(logits: torch.Tensor, actions: torch.Tensor,
                           old_logp: torch.Tensor, advantages: torch.Tensor,
                           clip_epsilon: float) -> torch.Tensor:
    """PPO clipped policy objective (to be minimized)."""
    logp = torch.log_softmax(logits, dim=-1).gather(-1, actions[:, None]).squeeze(-1)
    ratio = torch.exp(logp - old_logp)
    unclipped = ratio * advantages
    clipped = torch.clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantages
    return -torch.minimum(unclipped, clipped).mean()


class RolloutBuffer:
    """Fixed-capacity on-policy storage, one row block per worker."""

    def __init__(self, n_workers: int, rollout_length: int, obs_dim: int,
                 history_dim: int, tokens_per_obs: int):
        W, T = n_workers, rollout_length
        self.n_workers, self.rollout_length = W, T
        self.obs = np.zeros((W, T, obs_dim), dtype=np.float32)
        self.history = np.zeros((W, T, max(history_dim, 1)), dtype=np.float32)
        self.actions = np.zeros((W, T), dtype=np.int64)
        self.log_probs = np.zeros((W, T), dtype=np.float32)
        self.rewards = np.zeros((W, T), dtype=np.float32)
        self.values = np.zeros((W, T), dtype=np.float32)
        self.dones = np.zeros((W, T), dtype=bool)
        self.episode_starts = np.zeros((W, T), dtype=bool)
        self.token_indices = np.full((W, T, tokens_per_obs), -1, dtype=np.int64)
        self.bootstrap_values = np.zeros(W, dtype=np.float32)
        self.initial_rnn_h = np.zeros((W, max(history_dim, 1)), dtype=np.float32)
        self.initial_rnn_c = np.zeros((W, max(history_dim, 1)), dtype=np.float32)
        self.history_dim = history_dim
        self.pos = np.zeros(W, dtype=np.int64)

    @property
    def size(self) -> int:
        return self.n_workers * self.rollout_length

    def add(self, worker: int, obs, history, action, log_prob, reward, value,
            done, episode_start, token_indices=None):
        t = self.pos[worker]
        if t >= self.rollout_length:
            raise StateError("rollout buffer is full")
        self.obs[worker, t] = obs
        if self.history_dim:
            self.history[worker, t] = history
        self.actions[worker, t] = action
        self.log_probs[worker, t] = log_prob
        self.rewards[worker, t] = reward
        self.values[worker, t] = value
        self.dones[worker, t] = done
        self.episode_starts[worker, t] = episode_start
        if token_indices is not None:
            self.token_indices[worker, t, : len(token_indices)] = token_indices
        self.pos[worker] = t + 1

    def reset(self):
        self.pos[:] = 0
        self.token_indices[:] = -1


def compute_gae(buffer: RolloutBuffer, gamma: float, gae_lambda: float
                ) -> tuple[np.ndarray, np.ndarray]:
    """GAE advantages and value targets, truncated at episode boundaries.

    advantages[w, t] = sum_l (gamma * lambda)^l * delta[w, t + l], where the
    sum stops at the first done; the bootstrap value closes the final
    unfinished segment. Returns raw (unnormalized) advantages.
    """
    if (buffer.pos != buffer.rollout_length).any():
        raise StateError("buffer is not full; collect a complete rollout first")
    W, T = buffer.n_workers, buffer.rollout_length
    adv = np.zeros((W, T), dtype=np.float64)
    for w in range(W):
        last = 0.0
        next_value = float(buffer.bootstrap_values[w])
        for t in range(T - 1, -1, -1):
            mask = 0.0 if buffer.dones[w, t] else 1.0
            delta = buffer.rewards[w, t] + gamma * next_value * mask - buffer.values[w, t]
            last = delta + gamma * gae_lambda * mask * last
            adv[w, t] = last
            next_value = float(buffer.values[w, t])
    returns = adv + buffer.values
    return adv.astype(np.float32), returns.astype(np.float32)


@dataclass
class WorkerHistoryState:
    """Per-worker mutable memory owned by exactly one rollout worker."""

    cache: object = None  # MemoryCache | LstmState | torch (h, c) | None
    last_history: np.ndarray | None = None
    episode_step: int = 0


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


class Agent:
    """One variant's policy plus its frozen history machinery."""

    def __init__(self, variant: str, store: EmbeddingStore, obs_dim: int,
                 n_actions: int, ppo: PpoConfig, encoder_config: EncoderConfig,
                 seed: int, prompts: PromptSet | None = None,
                 index: RetrievalIndex | None = None, beta: float = 100.0,
                 prompt_offset_scale: float = 0.1, calibration_size: int = 4096,
                 policy_hidden: int = 64, encoder_override=None):
        if variant not in VARIANTS:
            raise ArgumentError(f"unknown variant {variant!r} (choose from {VARIANTS})")
        if variant == "lstm_baseline" and ppo.history_frameskip != 1:
            # the BPTT recompute replays every stored step; skipping frames
            # only at collection time would desynchronize the two passes
            raise ArgumentError("lstm_baseline does not support history_frameskip > 1")
        self.variant = variant
        self.store = store
        self.ppo = ppo
        self.seed = int(seed)
        self.rng = rng_for("agent", variant, seed)
        self.k = ppo.tokens_per_obs
        prompts = prompts if prompts is not None else PromptSet()

        lm_table = store.table(LM_INPUT_SPACE) if variant != "markovian_ppo" else None
        self.index = None
        self.projector = None
        self.mapper = None
        self.encoder = None
        self.lm_table = lm_table

        if variant in ("shelm", "shelm_clip", "shelm_lstm"):
            self.index = index if index is not None else build_index(
                store.vocabulary, prompts, StoreLookupEncoder(store, prompt_offset_scale)
            )
        if variant == "helmv2_ret":
            rows = lm_table.matrix.astype(np.float64)
            norms = np.linalg.norm(rows, axis=1, keepdims=True)
            self.index = RetrievalIndex(
                vocabulary=store.vocabulary,
                vectors=(rows / norms).astype(np.float32),
                prompt_set=PromptSet(),
            )
        if variant == "helm_fh":
            self.projector = FrozenHopfieldProjector(
                seed=stable_hash64("fh", seed), obs_dim=obs_dim,
                embeddings=lm_table, beta=beta,
            )
        if variant in ("helmv2_bn", "helmv2_ret"):
            calib_rng = rng_for("bn-calibration", seed)
            labels = [c.label for c in store.metadata.clusters] if store.metadata.clusters \
                else None
            if labels is None:
                raise ArgumentError(f"{variant} needs a store with cluster metadata "
                                    "to synthesize its calibration batch")
            from .stores import sample_cluster_observation

            batch = np.stack([
                sample_cluster_observation(
                    store, labels[int(calib_rng.integers(len(labels)))], calib_rng
                )
                for _ in range(calibration_size)
            ])
            self.mapper = BatchNormMapper.calibrate(batch, lm_table)

        history_dim = 0
        if variant in _FROZEN_HISTORY_VARIANTS:
            if variant == "shelm_cnn":
                in_dim = policy_hidden
            else:
                in_dim = lm_table.dim
            kind = KIND_LSTM if variant == "shelm_lstm" else KIND_TRANSFORMER
            wanted = replace(encoder_config, kind=kind, input_dim=in_dim)
            if encoder_override is not None:
                got = encoder_override.config
                if got.kind != wanted.kind or got.effective_input_dim != wanted.effective_input_dim:
                    raise ArgumentError(
                        f"external encoder (kind {got.kind}, input_dim "
                        f"{got.effective_input_dim}) does not fit variant "
                        f"{variant} (needs kind {wanted.kind}, input_dim "
                        f"{wanted.effective_input_dim})"
                    )
                self.encoder = encoder_override
            else:
                self.encoder = make_encoder(wanted)
            self.frozen_hash = self.encoder.weight_hash()
            history_dim = self.encoder.config.model_dim
        elif variant == "lstm_baseline":
            history_dim = encoder_config.model_dim
            self.frozen_hash = None
        else:
            self.frozen_hash = None
        self.history_dim = history_dim

        self.policy = PolicyNet(
            obs_dim=obs_dim, history_dim=history_dim, n_actions=n_actions,
            seed=stable_hash64("policy", variant, seed), hidden=policy_hidden,
            frozen_current=(variant == "shelm_clip"),
            recurrent_history=(variant == "lstm_baseline"),
        )
        self.optimizer = torch.optim.Adam(self.policy.parameters(), lr=ppo.learning_rate)

    # ------------------------------------------------------------------ history

    def new_history_state(self) -> WorkerHistoryState:
        state = WorkerHistoryState()
        if isinstance(self.encoder, CachedTransformerEncoder):
            state.cache = self.encoder.reset_cache()
        elif isinstance(self.encoder, LstmEncoder):
            state.cache = self.encoder.initial_state()
        elif self.variant == "lstm_baseline":
            z = torch.zeros(1, self.history_dim)
            state.cache = (z, z.clone())
        return state

    def history_features(
        self, obs_features: np.ndarray, state: WorkerHistoryState,
    ) -> tuple[np.ndarray | None, RetrievalResult | None]:
        """Advance the history branch with this observation (variant dispatch).

        Mutates `state` in place (it is worker-private) and returns the
        history vector the policy should see at this step plus any retrieval
        result for tracing. Frames whose episode-step index is not a multiple
        of history_frameskip bypass the branch and reuse the last vector.
        """
        if self.variant == "markovian_ppo":
            state.episode_step += 1
            return None, None

        skip = (state.episode_step % self.ppo.history_frameskip) != 0
        state.episode_step += 1
        if skip and state.last_history is not None:
            return state.last_history, None

        retrieved = None
        if self.variant == "lstm_baseline":
            with torch.no_grad():
                feat = self.policy.current_features(
                    torch.as_tensor(obs_features, dtype=torch.float32)[None, :]
                )
                h, c = self.policy.rnn(feat, state.cache)
            state.cache = (h, c)
            vec = h[0].numpy().astype(np.float32)
        elif self.variant == "helm_fh":
            x = self.projector.project(obs_features)
            vec, state.cache = self.encoder.encode_step(state.cache, x[None, :])
        elif self.variant == "helmv2_bn":
            x = self.mapper.transform(obs_features)
            vec, state.cache = self.encoder.encode_step(state.cache, x[None, :])
        elif self.variant in ("shelm", "shelm_clip", "shelm_lstm", "helmv2_ret"):
            query = (self.mapper.transform(obs_features)
                     if self.variant == "helmv2_ret" else obs_features)
            retrieved = retrieve_topk(self.index, query, self.k)
            rows = np.stack([self.lm_table.matrix[e.index] for e in retrieved.entries])
            if self.variant == "shelm_lstm":
                vec, state.cache = self.encoder.step(state.cache, rows)
            else:
                vec, state.cache = self.encoder.encode_step(state.cache, rows)
        elif self.variant == "shelm_cnn":
            with torch.no_grad():
                feat = self.policy.current_features(
                    torch.as_tensor(obs_features, dtype=torch.float32)[None, :]
                )
            vec, state.cache = self.encoder.encode_step(state.cache, feat.numpy())
        else:  # pragma: no cover
            raise ArgumentError(f"unhandled variant {self.variant!r}")

        vec = np.asarray(vec, dtype=np.float32)
        state.last_history = vec
        return vec, retrieved

    # ------------------------------------------------------------------ acting

    def policy_outputs(self, obs_features: np.ndarray, history: np.ndarray | None
                       ) -> tuple[np.ndarray, float]:
        with torch.no_grad():
            obs_t = torch.as_tensor(obs_features, dtype=torch.float32)[None, :]
            hist_t = (torch.as_tensor(history, dtype=torch.float32)[None, :]
                      if self.history_dim else None)
            logits, value = self.policy(obs_t, hist_t)
        return logits[0].numpy(), float(value[0])

    def act(self, obs_features: np.ndarray, history: np.ndarray | None,
            greedy: bool = False) -> tuple[int, float, float]:
        """Sample (or argmax with lowest-index tie-break) an action;
        returns (action, log_prob, value)."""
        logits, value = self.policy_outputs(obs_features, history)
        logp_all = logits - logits.max()
        logp_all = logp_all - np.log(np.exp(logp_all).sum())
        if greedy:
            action = int(np.argmax(logits))  # argmax takes the lowest index on ties
        else:
            probs = np.exp(logp_all)
            probs /= probs.sum()
            action = int(self.rng.choice(len(probs), p=probs))
        return action, float(logp_all[action]), value

    # ------------------------------------------------------------------ update

    def _recurrent_history_batch(self, buffer: RolloutBuffer, workers: np.ndarray
                                 ) -> torch.Tensor:
        """Re-run the trainable LSTM over stored segments (BPTT for
        lstm_baseline). Returns [len(workers), T, history_dim]."""
        T = buffer.rollout_length
        obs = torch.as_tensor(buffer.obs[workers])  # [B, T, obs]
        feat = self.policy.current_features(obs)
        h = torch.as_tensor(buffer.initial_rnn_h[workers])
        c = torch.as_tensor(buffer.initial_rnn_c[workers])
        outs = []
        for t in range(T):
            starts = torch.as_tensor(
                buffer.episode_starts[workers, t], dtype=torch.float32
            )[:, None]
            h = h * (1.0 - starts)
            c = c * (1.0 - starts)
            h, c = self.policy.rnn(feat[:, t], (h, c))
            outs.append(h)
        return torch.stack(outs, dim=1)

    def ppo_update(self, buffer: RolloutBuffer, advantages: np.ndarray,
                   returns: np.ndarray, progress: float = 0.0) -> UpdateStats:
        """Clipped-surrogate update over the full buffer; only the policy's
        parameters move. Advantages are normalized here, per update.
        progress in [0, 1] drives the linear lr/entropy schedules."""
        cfg = self.ppo
        scale = 1.0 + (cfg.lr_anneal - 1.0) * progress
        for group in self.optimizer.param_groups:
            group["lr"] = cfg.learning_rate * scale
        self._entropy_coef = cfg.entropy_coef * (
            1.0 + (cfg.entropy_anneal - 1.0) * progress
        )
        adv = normalize_advantages(advantages)

        if self.variant == "lstm_baseline":
            return self._ppo_update_recurrent(buffer, adv, returns)

        obs = torch.as_tensor(buffer.obs.reshape(buffer.size, -1))
        hist = (torch.as_tensor(buffer.history.reshape(buffer.size, -1))
                if self.history_dim else None)
        actions = torch.as_tensor(buffer.actions.reshape(-1))
        old_logp = torch.as_tensor(buffer.log_probs.reshape(-1))
        adv_t = torch.as_tensor(adv, dtype=torch.float32)
        ret_t = torch.as_tensor(returns.reshape(-1))

        shuffle_rng = rng_for("ppo-shuffle", self.seed, self._update_counter())
        totals = np.zeros(4)
        n_batches = 0
        for _ in range(cfg.epochs):
            order = shuffle_rng.permutation(buffer.size)
            for chunk in np.array_split(order, cfg.minibatches):
                idx = torch.as_tensor(chunk)
                logits, values = self.policy(
                    obs[idx], hist[idx] if hist is not None else None
                )
                stats = self._step_losses(
                    logits, values, actions[idx], old_logp[idx], adv_t[idx], ret_t[idx]
                )
                totals += stats
                n_batches += 1
        return UpdateStats(*(totals / n_batches))

    def _ppo_update_recurrent(self, buffer: RolloutBuffer, adv: np.ndarray,
                              returns: np.ndarray) -> UpdateStats:
        cfg = self.ppo
        W, T = buffer.n_workers, buffer.rollout_length
        adv_t = torch.as_tensor(adv.reshape(W, T), dtype=torch.float32)
        ret_t = torch.as_tensor(returns)
        actions = torch.as_tensor(buffer.actions)
        old_logp = torch.as_tensor(buffer.log_probs)
        obs = torch.as_tensor(buffer.obs)

        shuffle_rng = rng_for("ppo-shuffle", self.seed, self._update_counter())
        n_mb = min(cfg.minibatches, W)
        totals = np.zeros(4)
        n_batches = 0
        for _ in range(cfg.epochs):
            order = shuffle_rng.permutation(W)
            for chunk in np.array_split(order, n_mb):
                workers = np.sort(chunk)
                hist = self._recurrent_history_batch(buffer, workers)
                feat = self.policy.current_features(obs[workers])
                fused = torch.cat([feat, hist], dim=-1)
                logits, values = self.policy.heads(fused)
                stats = self._step_losses(
                    logits.reshape(-1, logits.shape[-1]), values.reshape(-1),
                    actions[workers].reshape(-1), old_logp[workers].reshape(-1),
                    adv_t[workers].reshape(-1), ret_t[workers].reshape(-1),
                )
                totals += stats
                n_batches += 1
        return UpdateStats(*(totals / n_batches))

    def _step_losses(self, logits, values, actions, old_logp, adv, ret) -> np.ndarray:
        cfg = self.ppo
        policy_loss = clipped_surrogate_loss(logits, actions, old_logp, adv,
                                             cfg.clip_epsilon)
        value_loss = 0.5 * torch.mean((values - ret) ** 2)
        log_probs = torch.log_softmax(logits, dim=-1)
        entropy = -(log_probs.exp() * log_probs).sum(-1).mean()
        ent_coef = getattr(self, "_entropy_coef", cfg.entropy_coef)
        loss = policy_loss + cfg.value_coef * value_loss - ent_coef * entropy
        if not torch.isfinite(loss):
            raise ShelmError(
                "non-finite PPO loss: "
                f"policy={float(policy_loss)!r} value={float(value_loss)!r} "
                f"entropy={float(entropy)!r} adv_range=({float(adv.min())}, "
                f"{float(adv.max())})"
            )
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        with torch.no_grad():
            logp = torch.log_softmax(logits, dim=-1).gather(
                -1, actions[:, None]).squeeze(-1)
            ratio = torch.exp(logp - old_logp)
            clip_frac = float((torch.abs(ratio - 1.0) > cfg.clip_epsilon).float().mean())
        return np.array([float(policy_loss.detach()), float(value_loss.detach()),
                         float(entropy.detach()), clip_frac])

    def _update_counter(self) -> int:
        self._updates = getattr(self, "_updates", 0) + 1
        return self._updates

    def frozen_weights_unchanged(self) -> bool:
        if self.encoder is None:
            return True
        return self.encoder.weight_hash() == self.frozen_hash
