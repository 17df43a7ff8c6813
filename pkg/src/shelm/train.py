"""Training loop: rollout collection, PPO updates, periodic greedy
evaluation, metrics CSV, episode traces, and checkpoints.

A run directory is self-describing: it holds a copy of the config text, a
meta.json with the package version and a config hash, the metrics CSV, the
eval episode traces, and the final checkpoint of trainable weights. With a
single worker (and in fact with any worker count, since collection is
sequential), reruns with the same config and seed produce byte-identical
metrics.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .agent import Agent, RolloutBuffer, WorkerHistoryState, compute_gae
from .config import RunConfig
from .envs import EnvSpec, ToyEnv
from .errors import ArgumentError, ShelmError
from .retrieval import PromptSet, load_prompt_set
from .seeding import stable_hash64
from .stores import RETRIEVAL_SPACE, load_store
from .traces import EpisodeTrace, TraceStep, write_trace

METRICS_COLUMNS = ("step", "variant", "seed", "eval_success", "eval_return",
                   "policy_loss", "value_loss", "entropy", "clip_fraction")


@dataclass
class TrainSummary:
    run_dir: Path
    variant: str
    seed: int
    steps: int
    final_eval_success: float
    final_eval_return: float


class _Worker:
    def __init__(self, env: ToyEnv, worker_id: int, master_seed: int):
        self.env = env
        self.worker_id = worker_id
        self.master_seed = master_seed
        self.episode_counter = 0
        self.obs = None
        self.hist_state: WorkerHistoryState | None = None
        self.needs_reset = True

    def next_episode_seed(self) -> int:
        seed = stable_hash64("train-episode", self.master_seed, self.worker_id,
                             self.episode_counter)
        self.episode_counter += 1
        return seed


def _copy_history_state(state: WorkerHistoryState) -> WorkerHistoryState:
    # caches are updated functionally, never in place, so a shallow copy
    # is enough to probe a bootstrap value without advancing the worker
    return WorkerHistoryState(cache=state.cache, last_history=state.last_history,
                              episode_step=state.episode_step)


def collect_rollout(agent: Agent, workers: list[_Worker], buffer: RolloutBuffer) -> None:
    """Fill the buffer with rollout_length steps per worker; episode ends
    reset environments and history caches in place."""
    buffer.reset()
    for w, worker in enumerate(workers):
        if worker.hist_state is not None and agent.variant == "lstm_baseline":
            h, c = worker.hist_state.cache
            buffer.initial_rnn_h[w] = h[0].numpy()
            buffer.initial_rnn_c[w] = c[0].numpy()
    for _ in range(buffer.rollout_length):
        for w, worker in enumerate(workers):
            episode_start = worker.needs_reset
            if worker.needs_reset:
                worker.obs = worker.env.reset(worker.next_episode_seed())
                worker.hist_state = agent.new_history_state()
                if agent.variant == "lstm_baseline" and buffer.pos[w] == 0:
                    buffer.initial_rnn_h[w] = 0.0
                    buffer.initial_rnn_c[w] = 0.0
                worker.needs_reset = False
            hist, retrieved = agent.history_features(worker.obs.features, worker.hist_state)
            action, logp, value = agent.act(worker.obs.features, hist)
            result = worker.env.step(action)
            buffer.add(
                w, worker.obs.features, hist, action, logp, result.reward, value,
                result.done, episode_start,
                token_indices=(retrieved.indices() if retrieved is not None else None),
            )
            worker.obs = result.observation
            worker.needs_reset = result.done
    for w, worker in enumerate(workers):
        if worker.needs_reset:
            buffer.bootstrap_values[w] = 0.0
        else:
            probe = _copy_history_state(worker.hist_state)
            hist, _ = agent.history_features(worker.obs.features, probe)
            _, value = agent.policy_outputs(worker.obs.features, hist)
            buffer.bootstrap_values[w] = value


@dataclass
class EvalReport:
    success_rate: float
    mean_return: float
    traces: list[EpisodeTrace]


def evaluate(agent: Agent, env_spec: EnvSpec, master_seed: int, eval_round: int,
             n_episodes: int) -> EvalReport:
    """Greedy-policy episodes on a fresh environment; returns traces with
    the retrieved-token memory of every step."""
    env = ToyEnv(env_spec)
    returns, successes, traces = [], 0, []
    for ep in range(n_episodes):
        obs = env.reset(stable_hash64("eval-episode", master_seed, eval_round, ep))
        state = agent.new_history_state()
        steps: list[TraceStep] = []
        total, t = 0.0, 0
        while True:
            hist, retrieved = agent.history_features(obs.features, state)
            action, _, _ = agent.act(obs.features, hist, greedy=True)
            result = env.step(action)
            tokens = (tuple((e.token, e.score) for e in retrieved.entries)
                      if retrieved is not None else ())
            steps.append(TraceStep(t=t, concept_label=obs.concept_label,
                                   tokens=tokens, action=action,
                                   reward=result.reward))
            total += result.reward
            obs = result.observation
            t += 1
            if result.done:
                break
        success = total > 0.5
        successes += int(success)
        returns.append(total)
        traces.append(EpisodeTrace(
            variant=agent.variant, seed=master_seed, episode=eval_round * n_episodes + ep,
            success=success, steps=tuple(steps),
        ))
    return EvalReport(success_rate=successes / n_episodes,
                      mean_return=float(np.mean(returns)), traces=traces)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def train_run(cfg: RunConfig, seed_index: int, config_text: str = "",
              quiet: bool = False) -> TrainSummary:
    if not 0 <= seed_index < len(cfg.seeds):
        raise ArgumentError(
            f"seed_index {seed_index} out of range for {len(cfg.seeds)} seeds"
        )
    master_seed = cfg.seeds[seed_index]
    torch.set_num_threads(1)

    store = load_store(cfg.store_path)
    prompts = load_prompt_set(cfg.prompt_path) if cfg.prompt_path else PromptSet()
    env_spec = EnvSpec(kind=cfg.env.kind, corridor_length=cfg.env.corridor_length,
                       n_concepts=cfg.env.n_concepts, episode_limit=cfg.env.episode_limit,
                       seed=cfg.env.seed, store=store)
    obs_dim = store.table(RETRIEVAL_SPACE).dim
    encoder_override = None
    if cfg.encoder_checkpoint is not None:
        from .encoder import load_encoder

        encoder_override = load_encoder(cfg.encoder_checkpoint)
    agent = Agent(
        variant=cfg.variant, store=store, obs_dim=obs_dim,
        n_actions=env_spec.n_actions, ppo=cfg.ppo, encoder_config=cfg.encoder,
        seed=master_seed, prompts=prompts, beta=cfg.beta,
        prompt_offset_scale=cfg.prompt_offset_scale,
        calibration_size=cfg.calibration_size, policy_hidden=cfg.policy_hidden,
        encoder_override=encoder_override,
    )

    run_dir = cfg.out_dir / f"seed_{master_seed}"
    traces_dir = run_dir / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)
    if config_text:
        (run_dir / "config.txt").write_text(config_text, encoding="utf-8")
    meta = {
        "version": f"shelm-{__version__}+cfg.{hashlib.sha256(config_text.encode()).hexdigest()[:12]}",
        "variant": cfg.variant,
        "seed": master_seed,
        "seeds": list(cfg.seeds),
        "store": str(cfg.store_path),
        "env": cfg.env.__dict__,
    }
    (run_dir / "meta.json").write_text(json.dumps(meta, indent=2, default=str),
                                       encoding="utf-8")

    workers = [_Worker(ToyEnv(env_spec), w, master_seed) for w in range(cfg.ppo.n_workers)]
    buffer = RolloutBuffer(cfg.ppo.n_workers, cfg.ppo.rollout_length, obs_dim,
                           agent.history_dim, cfg.ppo.tokens_per_obs)

    start_time = time.time()
    metrics_path = run_dir / "metrics.csv"
    rows = [",".join(METRICS_COLUMNS)]
    steps_done = 0
    eval_round = 0
    stats = None

    def record_eval():
        nonlocal eval_round
        report = evaluate(agent, env_spec, master_seed, eval_round, cfg.eval_episodes)
        for trace in report.traces:
            write_trace(trace, traces_dir / f"ep_{trace.episode:05d}.jsonl")
        rows.append(",".join([
            str(steps_done), cfg.variant, str(master_seed),
            _fmt(report.success_rate), _fmt(report.mean_return),
            _fmt(stats.policy_loss if stats else 0.0),
            _fmt(stats.value_loss if stats else 0.0),
            _fmt(stats.entropy if stats else 0.0),
            _fmt(stats.clip_fraction if stats else 0.0),
        ]))
        eval_round += 1
        if not quiet:
            print(f"[{cfg.variant} seed {master_seed}] step {steps_done}: "
                  f"eval_success={report.success_rate:.3f} "
                  f"eval_return={report.mean_return:.3f}")
        return report

    record_eval()
    next_eval = cfg.eval_every
    while steps_done < cfg.ppo.total_steps:
        collect_rollout(agent, workers, buffer)
        advantages, returns = compute_gae(buffer, cfg.ppo.gamma, cfg.ppo.gae_lambda)
        progress = min(steps_done / cfg.ppo.total_steps, 1.0)
        stats = agent.ppo_update(buffer, advantages, returns, progress=progress)
        steps_done += buffer.size
        if steps_done >= next_eval:
            record_eval()
            next_eval += cfg.eval_every

    final = record_eval()
    metrics_path.write_text("\n".join(rows) + "\n", encoding="utf-8")

    if not agent.frozen_weights_unchanged():
        raise ShelmError("frozen history encoder weights changed during training")
    torch.save(
        {
            "policy_state": agent.policy.state_dict(),
            "variant": cfg.variant,
            "master_seed": master_seed,
            "steps": steps_done,
            "encoder_config": cfg.encoder.__dict__,
        },
        run_dir / "checkpoint.pt",
    )
    meta["elapsed_seconds"] = round(time.time() - start_time, 3)
    meta["steps"] = steps_done
    (run_dir / "meta.json").write_text(json.dumps(meta, indent=2, default=str),
                                       encoding="utf-8")
    return TrainSummary(run_dir=run_dir, variant=cfg.variant, seed=master_seed,
                        steps=steps_done, final_eval_success=final.success_rate,
                        final_eval_return=final.mean_return)
