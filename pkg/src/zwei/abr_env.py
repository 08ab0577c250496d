"""Chunk-level ABR streaming simulator driven by a bandwidth trace."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .traces import NetworkTrace, VideoManifest

DOWNLOAD_TIME_NORM = 10.0


class SessionFinished(RuntimeError):
    pass


@dataclass(frozen=True)
class AbrConfig:
    history_len: int = 8
    buffer_cap: float = 60.0
    rtt: float = 0.08
    payload_ratio: float = 0.95
    start_chunk_level: int = 0
    download_time_norm: float = DOWNLOAD_TIME_NORM

    def __post_init__(self):
        if self.history_len < 1:
            raise ValueError("history_len must be >= 1")
        if not self.buffer_cap > 0:
            raise ValueError("buffer_cap must be > 0")
        if not 0 < self.payload_ratio <= 1:
            raise ValueError("payload_ratio must be in (0, 1]")
        if self.rtt < 0:
            raise ValueError("rtt must be >= 0")


@dataclass(frozen=True)
class AbrObservation:
    """Raw observation; :meth:`vector` gives the normalized network input."""

    throughput_mbps: np.ndarray  # oldest first
    download_time_s: np.ndarray
    next_sizes_bytes: np.ndarray
    buffer_s: float
    chunks_remaining: float
    last_bitrate_kbps: float
    max_bitrate_kbps: float
    buffer_cap: float
    download_time_norm: float

    def vector(self) -> np.ndarray:
        top_mbps = self.max_bitrate_kbps / 1000.0
        sizes = self.next_sizes_bytes
        parts = [
            np.clip(self.throughput_mbps / top_mbps, 0.0, 1.0),
            np.clip(self.download_time_s / self.download_time_norm, 0.0, 1.0),
            sizes / sizes.max() if sizes.size and sizes.max() > 0 else sizes,
            [min(1.0, self.buffer_s / self.buffer_cap), self.chunks_remaining,
             self.last_bitrate_kbps / self.max_bitrate_kbps],
        ]
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def observation_size(config: AbrConfig, levels: int = 6) -> int:
    return 2 * config.history_len + levels + 3


@dataclass(frozen=True)
class AbrStepResult:
    level: int
    bitrate: float  # kbps
    download_time: float
    rebuffer: float
    startup: float
    idle: float
    buffer_before: float
    buffer_after: float
    done: bool


@dataclass
class AbrSession:
    trace: NetworkTrace
    manifest: VideoManifest
    config: AbrConfig
    trace_start: float = 0.0
    clock: float = field(init=False)
    buffer: float = 0.0
    chunk_index: int = 0
    last_level: int = field(init=False)
    throughput_log: list = field(default_factory=list)
    download_log: list = field(default_factory=list)
    results: list = field(default_factory=list)

    def __post_init__(self):
        if self.trace_start < 0:
            raise ValueError("trace_start must be >= 0")
        self.clock = float(self.trace_start)
        self.last_level = self.config.start_chunk_level

    @property
    def done(self) -> bool:
        return self.chunk_index >= self.manifest.chunk_count

    @property
    def env_tag(self) -> tuple:
        return (self.trace.name, self.trace_start, self.manifest.chunk_count)

    def copy(self) -> AbrSession:
        new = copy.copy(self)
        new.throughput_log = list(self.throughput_log)
        new.download_log = list(self.download_log)
        new.results = list(self.results)
        return new

    def observation(self) -> AbrObservation:
        h = self.config.history_len
        tput = np.zeros(h)
        dl = np.zeros(h)
        recent_t = self.throughput_log[-h:]
        recent_d = self.download_log[-h:]
        if recent_t:
            tput[h - len(recent_t):] = recent_t
            dl[h - len(recent_d):] = recent_d
        m = self.manifest
        nxt = np.asarray(m.chunk_sizes[self.chunk_index] if not self.done else [0] * m.levels, dtype=float)
        return AbrObservation(
            throughput_mbps=tput,
            download_time_s=dl,
            next_sizes_bytes=nxt,
            buffer_s=self.buffer,
            chunks_remaining=(m.chunk_count - self.chunk_index) / m.chunk_count,
            last_bitrate_kbps=float(m.bitrates[self.last_level]),
            max_bitrate_kbps=float(m.bitrates[-1]),
            buffer_cap=self.config.buffer_cap,
            download_time_norm=self.config.download_time_norm,
        )

    def step(self, action: int) -> tuple[AbrObservation, AbrStepResult]:
        if self.done:
            raise SessionFinished("stepping a finished session")
        m, cfg = self.manifest, self.config
        action = int(action)
        if not 0 <= action < m.levels:
            raise ValueError(f"action {action} outside 0..{m.levels - 1}")
        nbytes = m.chunk_sizes[self.chunk_index][action]
        start = self.clock + cfg.rtt
        download_time = cfg.rtt + float(self.trace.transfer_time(start, nbytes, cfg.payload_ratio))
        before = self.buffer
        stall = max(0.0, download_time - before)
        # the very first chunk's wait is startup delay, not rebuffering
        if self.chunk_index == 0:
            startup, rebuffer = stall, 0.0
        else:
            startup, rebuffer = 0.0, stall
        raw = max(0.0, before - download_time) + m.chunk_duration
        idle = max(0.0, raw - cfg.buffer_cap)
        after = raw - idle
        self.clock += download_time + idle
        self.buffer = after
        self.throughput_log.append(nbytes * 8 / download_time / 1e6)
        self.download_log.append(download_time)
        self.last_level = action
        self.chunk_index += 1
        result = AbrStepResult(action, float(m.bitrates[action]), download_time, rebuffer, startup,
                               idle, before, after, self.done)
        self.results.append(result)
        return self.observation(), result


def reset(trace: NetworkTrace, manifest: VideoManifest, config: AbrConfig | None = None,
          trace_start: float = 0.0) -> AbrSession:
    return AbrSession(trace, manifest, config or AbrConfig(), float(trace_start))


def session_metrics(results: Sequence[AbrStepResult]) -> tuple[float, float]:
    """(average bitrate in kbps, total rebuffering in seconds)."""
    if not results:
        raise ValueError("empty trajectory")
    avg = sum(r.bitrate for r in results) / len(results)
    return avg, sum(r.rebuffer for r in results)


def replay(trace, manifest, config, actions, trace_start: float = 0.0) -> AbrSession:
    s = reset(trace, manifest, config, trace_start)
    for a in actions:
        s.step(a)
    return s
