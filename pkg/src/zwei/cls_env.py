"""CLS scheduling simulator: per-CDN allocation ratios, block ratio and cost."""

from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .traces import ClsWorld


class EpisodeFinished(RuntimeError):
    pass


@dataclass(frozen=True)
class ClsConfig:
    window: int = 20
    increments: tuple[float, ...] = (0.01, 0.05, 0.10)
    episode_len: int = 288

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not self.increments or any(not x > 0 for x in self.increments):
            raise ValueError("increments must be strictly positive")
        if self.episode_len < 1:
            raise ValueError("episode_len must be >= 1")


@dataclass(frozen=True)
class ClsStepResult:
    stall_ratio: float
    step_cost: float
    workload: float
    ratios: tuple[float, ...]
    done: bool


def decode_action(action: int, n_providers: int, n_choices: int) -> tuple[int, ...]:
    """Joint action index -> per-provider increment indices (provider 0 most significant)."""
    if not 0 <= action < n_choices ** n_providers:
        raise ValueError(f"joint action {action} out of range")
    digits = []
    for _ in range(n_providers):
        action, d = divmod(action, n_choices)
        digits.append(d)
    return tuple(reversed(digits))


def encode_action(choices: Sequence[int], n_choices: int) -> int:
    out = 0
    for c in choices:
        out = out * n_choices + int(c)
    return out


def joint_actions(n_providers: int, n_choices: int):
    return itertools.product(range(n_choices), repeat=n_providers)


@dataclass
class ClsSession:
    world: ClsWorld
    config: ClsConfig
    ratios: np.ndarray = field(init=False)
    history: np.ndarray = field(init=False)  # (window, providers, 2): workload/peak, block ratio
    t: int = 0
    total_cost: float = 0.0
    stalls: list = field(default_factory=list)
    results: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.world.providers)
        if n < 2:
            raise ValueError("need at least 2 providers")
        self.ratios = np.full(n, 1.0 / n)
        self.history = np.zeros((self.config.window, n, 2))

    @property
    def n_providers(self) -> int:
        return len(self.world.providers)

    @property
    def n_actions(self) -> int:
        return len(self.config.increments) ** self.n_providers

    @property
    def done(self) -> bool:
        return self.t >= self.config.episode_len

    @property
    def env_tag(self) -> tuple:
        return ("cls", len(self.world.workload), self.config.episode_len)

    def copy(self) -> ClsSession:
        new = copy.copy(self)
        new.ratios = self.ratios.copy()
        new.history = self.history.copy()
        new.stalls = list(self.stalls)
        new.results = list(self.results)
        return new

    def observation(self) -> np.ndarray:
        return np.concatenate([self.history.ravel(), self.ratios])

    def step(self, action) -> tuple[np.ndarray, ClsStepResult]:
        """``action`` is a joint index or a sequence of per-provider increment indices."""
        k = len(self.config.increments)
        if np.ndim(action) == 0:
            choices = decode_action(int(action), self.n_providers, k)
        else:
            choices = tuple(int(c) for c in action)
            if len(choices) != self.n_providers or any(not 0 <= c < k for c in choices):
                raise ValueError(f"increment indices {choices} invalid")
        raw = self.ratios + np.asarray([self.config.increments[c] for c in choices])
        return self.step_ratios(raw / raw.sum())

    def step_ratios(self, ratios) -> tuple[np.ndarray, ClsStepResult]:
        """Advance one step with an explicit allocation (used by constant-ratio baselines)."""
        if self.done:
            raise EpisodeFinished("stepping a finished episode")
        ratios = np.asarray(ratios, dtype=float)
        if ratios.shape != (self.n_providers,) or (ratios < 0).any() or abs(ratios.sum() - 1) > 1e-9:
            raise ValueError(f"ratios must lie on the simplex, got {ratios}")
        total = self.world.workload.at(self.t)
        loads = ratios * total
        blocks = self.world.block_ratios(loads)
        prices = self.world.provider_arrays[2]
        stall = float(np.dot(ratios, blocks))
        cost = float(np.sum(loads * (1.0 - blocks) * prices))
        peak = self.world.workload.peak
        self.history[:-1] = self.history[1:].copy()
        self.history[-1, :, 0] = loads / peak if peak > 0 else 0.0
        self.history[-1, :, 1] = blocks
        self.ratios = ratios
        self.t += 1
        self.total_cost += cost
        self.stalls.append(stall)
        result = ClsStepResult(stall, cost, total, tuple(ratios.tolist()), self.done)
        self.results.append(result)
        return self.observation(), result


def reset(world: ClsWorld, config: ClsConfig | None = None) -> ClsSession:
    return ClsSession(world, config or ClsConfig())


def observation_size(n_providers: int, config: ClsConfig) -> int:
    return config.window * n_providers * 2 + n_providers


def session_metrics(results: Sequence[ClsStepResult]) -> tuple[float, float]:
    """(average stall ratio, total cost)."""
    if not results:
        raise ValueError("empty trajectory")
    return sum(r.stall_ratio for r in results) / len(results), sum(r.step_cost for r in results)
