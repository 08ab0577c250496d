"""Heuristic baselines: rate-based, BOLA-BASIC and RobustMPC for ABR; constant-ratio WRR for CLS."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import cls_env
from .traces import ClsWorld


def harmonic_mean(values) -> float:
    values = [v for v in values if v > 0]
    if not values:
        return 0.0
    return len(values) / sum(1.0 / v for v in values)


def _recent_throughputs(throughputs, n: int = 5) -> list[float]:
    return [float(v) for v in throughputs if v > 0][-n:]


def highest_level_below(bitrates_kbps, mbps: float) -> int:
    level = 0
    for i, b in enumerate(bitrates_kbps):
        if b <= mbps * 1000.0:
            level = i
    return level


def rate_based(observation, bitrates_kbps) -> int:
    """Largest rung not above the harmonic mean of the last five nonzero throughputs."""
    est = harmonic_mean(_recent_throughputs(observation.throughput_mbps))
    return highest_level_below(bitrates_kbps, est) if est > 0 else 0


class RateBased:
    name = "rate"

    def __call__(self, session) -> int:
        return rate_based(session.observation(), session.manifest.bitrates)


@dataclass(frozen=True)
class BolaParams:
    """BOLA-BASIC control parameters in chunk units.

    Utilities are ``ln(size_a / size_min)``.  ``V`` is set so the top level is
    chosen once the buffer reaches ``Q_max - 1`` chunks:
    ``V = (Q_max - 1) / (v_max + gamma)``.
    """

    V: float
    gamma: float


def bola_params(buffer_cap: float, chunk_duration: float, sizes, gamma: float = 5.0) -> BolaParams:
    q_max = buffer_cap / chunk_duration
    v_max = math.log(max(sizes) / min(sizes))
    return BolaParams((q_max - 1) / (v_max + gamma), gamma)


def bola_scores(sizes, buffer_s: float, chunk_duration: float, params: BolaParams) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=float)
    utilities = np.log(sizes / sizes.min())
    q = buffer_s / chunk_duration
    return (params.V * (utilities + params.gamma) - q) / sizes


def bola(observation, chunk_duration: float, buffer_cap: float, gamma: float = 5.0) -> int:
    sizes = observation.next_sizes_bytes
    params = bola_params(buffer_cap, chunk_duration, sizes, gamma)
    scores = bola_scores(sizes, observation.buffer_s, chunk_duration, params)
    if not (scores > 0).any():
        return 0
    return int(np.argmax(np.where(scores > 0, scores, -np.inf)))


class Bola:
    name = "bola"

    def __init__(self, gamma: float = 5.0):
        self.gamma = gamma

    def __call__(self, session) -> int:
        return bola(session.observation(), session.manifest.chunk_duration, session.config.buffer_cap,
                    self.gamma)


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 5
    error_window: int = 5
    qoe_alpha: float = 4.3

    def __post_init__(self):
        if not 1 <= self.horizon <= 7:
            raise ValueError("horizon must be in 1..7")
        if self.error_window < 1:
            raise ValueError("error_window must be >= 1")


def robust_estimate(throughputs, error_window: int = 5) -> float:
    """HM of the last 5 throughputs discounted by the worst recent relative error.

    The prediction error at chunk j compares the HM that would have been
    predicted from chunks before j against what chunk j measured.
    """
    tp = [float(v) for v in throughputs if v > 0]
    if not tp:
        return 0.0
    est = harmonic_mean(tp[-5:])
    errors = []
    for j in range(max(1, len(tp) - error_window), len(tp)):
        pred = harmonic_mean(tp[max(0, j - 5):j])
        errors.append(abs(pred - tp[j]) / tp[j])
    return est / (1.0 + max(errors, default=0.0))


def _sequences(levels: int, horizon: int) -> np.ndarray:
    return np.array(list(itertools.product(range(levels), repeat=horizon)), dtype=int)


def mpc_plan_values(buffer_s: float, sizes_ahead, bitrates_kbps, est_mbps: float, chunk_duration: float,
                    buffer_cap: float, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """QoE of every bitrate sequence over ``len(sizes_ahead)`` chunks at constant bandwidth.

    Returns ``(sequences, values)`` with sequences in lexicographic order.
    """
    h = len(sizes_ahead)
    seqs = _sequences(len(bitrates_kbps), h)
    sizes = np.asarray(sizes_ahead, dtype=float)
    rate = est_mbps * 1e6 / 8.0
    buf = np.full(len(seqs), float(buffer_s))
    total = np.zeros(len(seqs))
    br = np.asarray(bitrates_kbps, dtype=float)
    for k in range(h):
        dl = sizes[k, seqs[:, k]] / rate
        rebuf = np.maximum(0.0, dl - buf)
        buf = np.minimum(buffer_cap, np.maximum(0.0, buf - dl) + chunk_duration)
        total = total + (br[seqs[:, k]] - alpha * rebuf)
    return seqs, total


def robust_mpc(session, cfg: MpcConfig = MpcConfig()) -> int:
    """First action of the best plan; ``argmax`` keeps the lowest index among ties."""
    m = session.manifest
    est = robust_estimate(session.throughput_log, cfg.error_window)
    if est <= 0:
        return 0
    ahead = m.chunk_sizes[session.chunk_index:session.chunk_index + cfg.horizon]
    seqs, values = mpc_plan_values(session.buffer, ahead, m.bitrates, est, m.chunk_duration,
                                   session.config.buffer_cap, cfg.qoe_alpha)
    return int(seqs[int(np.argmax(values)), 0])


class RobustMpc:
    name = "mpc"

    def __init__(self, cfg: MpcConfig = MpcConfig()):
        self.cfg = cfg

    def __call__(self, session) -> int:
        return robust_mpc(session, self.cfg)


class Wrr:
    """Constant allocation for the whole CLS episode."""

    def __init__(self, ratios, name: str = "wrr"):
        r = np.asarray(ratios, dtype=float)
        if r.ndim != 1 or (r < 0).any() or abs(r.sum() - 1.0) > 1e-9:
            raise ValueError(f"ratios must lie on the simplex, got {ratios}")
        self.ratios = r
        self.name = name

    def __call__(self, session) -> np.ndarray:
        return self.ratios


def wrr(ratios) -> Wrr:
    return Wrr(ratios)


def uniform_wrr(n_providers: int) -> Wrr:
    return Wrr(np.full(n_providers, 1.0 / n_providers), name="wrr-uniform")


def simplex_grid(n: int, step: float = 0.05):
    units = int(round(1 / step))
    for combo in itertools.product(range(units + 1), repeat=n - 1):
        if sum(combo) <= units:
            yield np.array([*combo, units - sum(combo)], dtype=float) / units


def run_constant(world: ClsWorld, ratios, config: cls_env.ClsConfig | None = None) -> tuple[float, float]:
    s = cls_env.reset(world, config)
    while not s.done:
        s.step_ratios(ratios)
    return cls_env.session_metrics(s.results)


def best_wrr(world: ClsWorld, config: cls_env.ClsConfig | None = None, step: float = 0.05) -> Wrr:
    """Grid-search the simplex for the lexicographically best (stall, cost) constant allocation."""
    best_key, best = None, None
    for r in simplex_grid(len(world.providers), step):
        key = run_constant(world, r, config)
        if best_key is None or key < best_key:
            best_key, best = key, r
    return Wrr(best, name="wrr-best")


ABR_BASELINES = {"rate": RateBased, "bola": Bola, "mpc": RobustMpc}
