"""Self-play training: sample N trajectories from one start state, battle them
pairwise with a rule, turn mean outcomes into returns, and take PPO steps.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import abr_env, cls_env
from .abr_env import AbrConfig
from .cls_env import ClsConfig
from .mlp import Mlp
from .rules import ABR_RULE, CLS_RULE, EnvironmentMismatch, RuleConfig, abr_rule, cls_rule
from .traces import ClsWorld, NetworkTrace, VideoManifest

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "policy_loss", "value_loss", "entropy", "mean_abs_winrate",
               "eval_metric_1", "eval_metric_2")


@dataclass(frozen=True)
class PpoConfig:
    clip: float = 0.2
    entropy_coef: float = 0.01
    epochs: int = 5
    n_samples: int = 16
    lr: float = 1e-4

    def __post_init__(self):
        if not 0 < self.clip < 1:
            raise ValueError("clip must be in (0, 1)")
        if self.entropy_coef < 0:
            raise ValueError("entropy_coef must be >= 0")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    probs: np.ndarray
    metrics: tuple
    env_tag: tuple
    results: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.actions)


@dataclass
class WinRateTable:
    rates: np.ndarray
    outcomes: np.ndarray  # outcomes[i, j] = o_i^j, zero on the diagonal

    @property
    def n_samples(self) -> int:
        return len(self.rates)


class AbrTask:
    kind = "abr"

    def __init__(self, traces: Sequence[NetworkTrace], manifest: VideoManifest,
                 config: AbrConfig | None = None, rule_cfg: RuleConfig = ABR_RULE):
        if not traces:
            raise ValueError("need at least one trace")
        self.traces = list(traces)
        self.manifest = manifest
        self.config = config or AbrConfig()
        self.rule = abr_rule
        self.rule_cfg = rule_cfg
        self.obs_dim = abr_env.observation_size(self.config, manifest.levels)
        self.n_actions = manifest.levels

    def sample_start(self, rng: np.random.Generator) -> tuple[int, float]:
        i = int(rng.integers(len(self.traces)))
        return i, float(rng.integers(max(1, int(self.traces[i].span))))

    def eval_start(self) -> tuple[int, float]:
        return 0, 0.0

    def new_session(self, start) -> abr_env.AbrSession:
        i, offset = start
        return abr_env.reset(self.traces[i], self.manifest, self.config, offset)

    @staticmethod
    def vector(session) -> np.ndarray:
        return session.observation().vector()

    @staticmethod
    def metrics(session) -> tuple[float, float]:
        return abr_env.session_metrics(session.results)


class ClsTask:
    kind = "cls"

    def __init__(self, world: ClsWorld, config: ClsConfig | None = None, rule_cfg: RuleConfig = CLS_RULE):
        self.world = world
        self.config = config or ClsConfig()
        self.rule = cls_rule
        self.rule_cfg = rule_cfg
        n = len(world.providers)
        self.obs_dim = cls_env.observation_size(n, self.config)
        self.n_actions = len(self.config.increments) ** n

    def sample_start(self, rng: np.random.Generator):
        return 0

    def eval_start(self):
        return 0

    def new_session(self, start) -> cls_env.ClsSession:
        return cls_env.reset(self.world, self.config)

    @staticmethod
    def vector(session) -> np.ndarray:
        return session.observation()

    @staticmethod
    def metrics(session) -> tuple[float, float]:
        return cls_env.session_metrics(session.results)


def sample_action(probs: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(np.cumsum(probs), u, side="right")), len(probs) - 1)


def mc_sample(task, policy: Mlp, n: int, seed: int, start=None) -> list[Trajectory]:
    """Roll out ``n`` trajectories from one start state, each with its own rng stream.

    Sessions advance in lockstep so the policy runs once per timestep on the
    whole batch.
    """
    if n < 2:
        raise ValueError("need at least 2 samples")
    if start is None:
        start = task.eval_start()
    sessions = [task.new_session(start) for _ in range(n)]
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]
    states, actions, probs = [], [], []
    while not all(s.done for s in sessions):
        x = np.stack([task.vector(s) for s in sessions])
        p, _ = policy.forward(x)
        acts = np.array([sample_action(p[i], rngs[i].random()) for i in range(n)])
        for s, a in zip(sessions, acts):
            s.step(a)
        states.append(x)
        actions.append(acts)
        probs.append(p[np.arange(n), acts])
    states, actions, probs = np.stack(states, 1), np.stack(actions, 1), np.stack(probs, 1)
    return [
        Trajectory(states[i], actions[i], probs[i], task.metrics(s), (s.env_tag, start, seed), s.results)
        for i, s in enumerate(sessions)
    ]


def battle_all_pairs(trajectories: Sequence, rule, cfg: RuleConfig, rng: np.random.Generator) -> WinRateTable:
    """Each unordered pair battles once; r_i is the mean outcome against the other N-1."""
    n = len(trajectories)
    if n < 2:
        raise ValueError("need at least 2 trajectories")
    tags = {getattr(t, "env_tag", None) for t in trajectories}
    if len(tags) > 1:
        raise EnvironmentMismatch(f"trajectories span {len(tags)} environments")
    outcomes = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            res = rule(trajectories[i], trajectories[j], cfg, rng)
            outcomes[i, j], outcomes[j, i] = res.s_u, res.s_v
    return WinRateTable(outcomes.sum(axis=1) / (n - 1), outcomes)


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    old_probs: np.ndarray
    returns: np.ndarray
    advantages: np.ndarray


def make_batch(trajectories: Sequence[Trajectory], win_rates, value_net: Mlp) -> Batch:
    rates = np.asarray(getattr(win_rates, "rates", win_rates), dtype=float)
    if len(rates) != len(trajectories):
        raise ValueError("win rates not aligned with trajectories")
    states = np.concatenate([t.states for t in trajectories])
    returns = np.concatenate([np.full(len(t), r) for t, r in zip(trajectories, rates)])
    v, _ = value_net.forward(states)
    return Batch(states, np.concatenate([t.actions for t in trajectories]),
                 np.concatenate([t.probs for t in trajectories]), returns, returns - v)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def policy_loss_and_grads(policy: Mlp, batch: Batch, clip: float, entropy_coef: float,
                          need_grads: bool = True):
    """Loss = -mean(clipped surrogate) - entropy_coef * mean(entropy)."""
    n = len(batch.actions)
    probs, cache = policy.forward(batch.states)
    logp = log_softmax(cache.preacts[-1])
    rows = np.arange(n)
    ratio = probs[rows, batch.actions] / batch.old_probs
    adv = batch.advantages
    clipped = np.clip(ratio, 1 - clip, 1 + clip)
    unclipped_term, clipped_term = ratio * adv, clipped * adv
    surrogate = np.minimum(unclipped_term, clipped_term)
    entropy = -(probs * logp).sum(axis=1)
    stats = {
        "policy_loss": float(-surrogate.mean()),
        "entropy": float(entropy.mean()),
        "clip_frac": float(np.mean(np.abs(ratio - 1) > clip)),
    }
    loss = stats["policy_loss"] - entropy_coef * stats["entropy"]
    if not need_grads:
        return loss, None, stats
    active = unclipped_term <= clipped_term
    d_ratio = np.where(active, -adv / n, 0.0)
    onehot = np.zeros_like(probs)
    onehot[rows, batch.actions] = 1.0
    d_logits = (d_ratio * ratio)[:, None] * (onehot - probs)
    d_logits += (entropy_coef / n) * probs * (logp + entropy[:, None])
    return loss, policy.backward(cache, d_logits, wrt="logits"), stats


def value_loss_and_grads(value_net: Mlp, batch: Batch, need_grads: bool = True):
    """Loss = 0.5 * mean((V(s) - r)^2)."""
    v, cache = value_net.forward(batch.states)
    err = v - batch.returns
    loss = float(0.5 * np.mean(err ** 2))
    if not need_grads:
        return loss, None
    return loss, value_net.backward(cache, err / len(err))


def clipped_surrogate(ratio, adv, clip):
    return np.minimum(ratio * adv, np.clip(ratio, 1 - clip, 1 + clip) * adv)


def ppo_update(policy: Mlp, value_net: Mlp, trajectories: Sequence[Trajectory], win_rates,
               cfg: PpoConfig) -> dict:
    """Several full-batch PPO passes; each network gets its own gradient and Adam step."""
    batch = make_batch(trajectories, win_rates, value_net)
    totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_frac": 0.0}
    for _ in range(cfg.epochs):
        p_loss, p_grads, stats = policy_loss_and_grads(policy, batch, cfg.clip, cfg.entropy_coef)
        v_loss, v_grads = value_loss_and_grads(value_net, batch)
        if not (np.isfinite(p_loss) and np.isfinite(v_loss)):
            log.error("non-finite loss; update aborted")
            return {**totals, "aborted": True}
        policy.optim_step(p_grads, cfg.lr)
        value_net.optim_step(v_grads, cfg.lr)
        totals["policy_loss"] += stats["policy_loss"] / cfg.epochs
        totals["entropy"] += stats["entropy"] / cfg.epochs
        totals["clip_frac"] += stats["clip_frac"] / cfg.epochs
        totals["value_loss"] += v_loss / cfg.epochs
    totals["aborted"] = False
    return totals


class NetPolicy:
    """Wraps a softmax network as a rollout policy (greedy by default)."""

    def __init__(self, net: Mlp, task_kind: str, greedy: bool = True, seed: int = 0):
        self.net = net
        self.task_kind = task_kind
        self.greedy = greedy
        self.rng = np.random.default_rng(seed)

    def __call__(self, session) -> int:
        x = session.observation().vector() if self.task_kind == "abr" else session.observation()
        p = self.net(x)
        if self.greedy:
            return int(np.argmax(p))
        return sample_action(p, self.rng.random())


def rollout(task, policy: Callable, start):
    s = task.new_session(start)
    while not s.done:
        a = policy(s)
        if isinstance(a, np.ndarray) and a.dtype.kind == "f":
            s.step_ratios(a)
        else:
            s.step(a)
    return s


def new_networks(task, seed: int) -> tuple[Mlp, Mlp]:
    return (Mlp.build(task.obs_dim, task.n_actions, "softmax", seed=seed),
            Mlp.build(task.obs_dim, 1, "tanh", seed=seed + 1))


def save_checkpoint(path, task, policy: Mlp, value_net: Mlp, epoch: int, extra: dict | None = None):
    doc = {"task": task.kind, "epoch": epoch, "obs_dim": task.obs_dim, "n_actions": task.n_actions,
           "policy": policy.to_dict(), "value": value_net.to_dict(), **(extra or {})}
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> tuple[dict, Mlp, Mlp]:
    doc = json.loads(Path(path).read_text())
    return doc, Mlp.from_dict(doc["policy"]), Mlp.from_dict(doc["value"])


def _fmt(x) -> str:
    return "" if x is None else f"{x:.10g}"


def train(task, cfg: PpoConfig = PpoConfig(), total_epochs: int = 100, seed: int = 0,
          checkpoint_dir=None, eval_every: int = 10, checkpoint_every: int = 0,
          stop_when: Callable | None = None, policy: Mlp | None = None,
          value_net: Mlp | None = None) -> dict:
    """Run the sample/battle/estimate/optimize loop.

    Returns ``{"rows": [...], "policy": Mlp, "value": Mlp, "epochs": n}``.
    ``stop_when(policy, eval_metrics)`` is checked at each evaluation and ends
    training early when it returns True.
    """
    rng = np.random.default_rng(seed)
    if policy is None or value_net is None:
        policy, value_net = new_networks(task, seed)
    out = Path(checkpoint_dir) if checkpoint_dir else None
    log_buf = None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "init.json", task, policy, value_net, 0)
        log_buf = open(out / "train_log.csv", "w", newline="")
        csv.writer(log_buf).writerow(LOG_COLUMNS)
    rows = []
    epoch = 0
    try:
        for epoch in range(1, total_epochs + 1):
            start = task.sample_start(rng)
            trajs = mc_sample(task, policy, cfg.n_samples, int(rng.integers(2 ** 63)), start)
            table = battle_all_pairs(trajs, task.rule, task.rule_cfg, rng)
            diag = ppo_update(policy, value_net, trajs, table, cfg)
            eval_metrics = (None, None)
            if eval_every and (epoch % eval_every == 0 or epoch == total_epochs):
                eval_metrics = task.metrics(rollout(task, NetPolicy(policy, task.kind), task.eval_start()))
            row = (epoch, diag["policy_loss"], diag["value_loss"], diag["entropy"],
                   float(np.abs(table.rates).mean()), *eval_metrics)
            rows.append(row)
            if log_buf:
                csv.writer(log_buf).writerow([epoch] + [_fmt(x) for x in row[1:]])
            if eval_metrics[0] is not None:
                log.info("epoch %d: eval %s entropy %.3f", epoch, eval_metrics, diag["entropy"])
            if out and checkpoint_every and epoch % checkpoint_every == 0:
                save_checkpoint(out / f"epoch_{epoch:06d}.json", task, policy, value_net, epoch)
            if stop_when and eval_metrics[0] is not None and stop_when(policy, eval_metrics):
                break
    finally:
        if log_buf:
            log_buf.close()
    if out and total_epochs > 0:
        save_checkpoint(out / "final.json", task, policy, value_net, epoch)
    return {"rows": rows, "policy": policy, "value": value_net, "epochs": epoch}
