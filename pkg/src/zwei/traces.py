"""Network traces, video manifests and CLS worlds: loading, validation, synthesis.

Bandwidth traces replay as a piecewise-constant step function that loops
when exhausted.  Cumulative-byte lookups and their inverse are exact, so the
simulators never discretize time.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

HD_LADDER_KBPS = (300, 750, 1200, 1800, 2800, 4300)
UHD_LADDER_KBPS = (200, 600, 1500, 4000, 8000, 12000)
LADDERS = {"hd": HD_LADDER_KBPS, "4k": UHD_LADDER_KBPS}

CLS_DAY_STEPS = 288


class TraceError(ValueError):
    """Raised for malformed or invalid trace, manifest or world data."""


@dataclass(frozen=True)
class NetworkTrace:
    """Bandwidth samples ``(t_seconds, mbps)``.

    Each value holds until the next timestamp; the final value holds for the
    same duration as the gap before it, which fixes the loop period.
    """

    times: tuple[float, ...]
    mbps: tuple[float, ...]
    name: str = "trace"
    _starts: np.ndarray = field(init=False, repr=False, compare=False)
    _rates: np.ndarray = field(init=False, repr=False, compare=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.times) != len(self.mbps):
            raise TraceError("times and bandwidth lengths differ")
        if len(self.times) < 2:
            raise TraceError("a trace needs at least 2 points")
        for i, (t, bw) in enumerate(zip(self.times, self.mbps)):
            if not math.isfinite(t) or t < 0:
                raise TraceError(f"point {i}: timestamp must be finite and >= 0, got {t}")
            if not math.isfinite(bw) or bw <= 0:
                raise TraceError(f"point {i}: non-positive bandwidth {bw}")
            if i and t <= self.times[i - 1]:
                raise TraceError(f"point {i}: non-monotone timestamps ({self.times[i - 1]} then {t})")
        t = np.asarray(self.times, dtype=float)
        last_gap = t[-1] - t[-2]
        starts = np.append(t - t[0], t[-1] - t[0] + last_gap)
        rates = np.asarray(self.mbps, dtype=float) * 1e6 / 8.0
        cum = np.concatenate(([0.0], np.cumsum(rates * np.diff(starts))))
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_rates", rates)
        object.__setattr__(self, "_cum", cum)

    @property
    def span(self) -> float:
        return float(self._starts[-1])

    @property
    def bytes_per_loop(self) -> float:
        return float(self._cum[-1])

    def bandwidth_at(self, t):
        """Bandwidth in Mbps at replay time ``t`` (scalar or array)."""
        x = np.mod(t, self.span)
        i = np.searchsorted(self._starts, x, side="right") - 1
        i = np.clip(i, 0, len(self._rates) - 1)
        return np.asarray(self.mbps)[i]

    def bytes_until(self, t):
        """Bytes deliverable over replay interval ``[0, t]``."""
        t = np.asarray(t, dtype=float)
        loops = np.floor(t / self.span)
        x = t - loops * self.span
        i = np.clip(np.searchsorted(self._starts, x, side="right") - 1, 0, len(self._rates) - 1)
        return loops * self._cum[-1] + self._cum[i] + self._rates[i] * (x - self._starts[i])

    def time_for_bytes(self, y):
        """Inverse of :meth:`bytes_until`: earliest time by which ``y`` bytes are delivered."""
        y = np.asarray(y, dtype=float)
        total = self._cum[-1]
        loops = np.floor(y / total)
        rem = y - loops * total
        i = np.clip(np.searchsorted(self._cum, rem, side="right") - 1, 0, len(self._rates) - 1)
        return loops * self.span + self._starts[i] + (rem - self._cum[i]) / self._rates[i]

    def transfer_time(self, start, nbytes, payload_ratio: float = 1.0):
        """Seconds needed to move ``nbytes`` starting at ``start``.

        Works elementwise on arrays; the scalar path runs the same arithmetic,
        which keeps batched and step-by-step replays bit-identical.
        """
        start = np.asarray(start, dtype=float)
        done = self.time_for_bytes(self.bytes_until(start) + np.asarray(nbytes, dtype=float) / payload_ratio)
        return done - start


def parse_network_trace(text: str, name: str = "trace") -> NetworkTrace:
    times, mbps = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TraceError(f"line {lineno}: expected '<t_seconds> <bandwidth_mbps>', got {line!r}")
        try:
            t, bw = float(parts[0]), float(parts[1])
        except ValueError:
            raise TraceError(f"line {lineno}: not a number in {line!r}") from None
        if bw <= 0:
            raise TraceError(f"line {lineno}: non-positive bandwidth {bw}")
        if times and t <= times[-1]:
            raise TraceError(f"line {lineno}: non-monotone timestamps ({times[-1]} then {t})")
        times.append(t)
        mbps.append(bw)
    return NetworkTrace(tuple(times), tuple(mbps), name=name)


def load_network_trace(path) -> NetworkTrace:
    path = Path(path)
    return parse_network_trace(path.read_text(), name=path.stem)


def format_network_trace(trace: NetworkTrace) -> str:
    return "".join(f"{t!r} {bw!r}\n" for t, bw in zip(trace.times, trace.mbps))


def write_network_trace(trace: NetworkTrace, path) -> None:
    Path(path).write_text(format_network_trace(trace))


def load_trace_dir(directory) -> list[NetworkTrace]:
    directory = Path(directory)
    if not directory.is_dir():
        raise TraceError(f"trace directory not found: {directory}")
    files = sorted(p for p in directory.iterdir() if p.is_file() and not p.name.startswith("."))
    if not files:
        raise TraceError(f"no trace files in {directory}")
    return [load_network_trace(p) for p in files]


def synth_network_trace(kind: str, params: dict | None = None, seed: int = 0) -> NetworkTrace:
    """Deterministic synthetic trace sampled once per ``dt`` seconds.

    kinds and their params:
      fixed:       level, duration
      step:        low, high, period, duration
      random-walk: mean, sigma, lo, hi, duration
    """
    p = dict(params or {})
    dt = float(p.get("dt", 1.0))
    duration = float(p.get("duration", 200.0))
    if dt <= 0 or duration < 2 * dt:
        raise TraceError("need dt > 0 and duration >= 2*dt")
    n = int(round(duration / dt))
    times = tuple(i * dt for i in range(n))
    if kind == "fixed":
        level = float(p.get("level", 1.0))
        if not level > 0:
            raise TraceError(f"fixed trace level must be > 0, got {level}")
        values = [level] * n
        name = f"fixed-{level:g}"
    elif kind == "step":
        low, high = float(p.get("low", 0.5)), float(p.get("high", 3.0))
        period = float(p.get("period", 20.0))
        if not (low > 0 and high > 0 and period > 0):
            raise TraceError("step trace needs low > 0, high > 0, period > 0")
        values = [low if int(t // period) % 2 == 0 else high for t in times]
        name = f"step-{low:g}-{high:g}-{period:g}"
    elif kind == "random-walk":
        mean, sigma = float(p.get("mean", 2.0)), float(p.get("sigma", 0.3))
        lo, hi = float(p.get("lo", 0.2)), float(p.get("hi", 6.0))
        if not (0 < lo <= mean <= hi and sigma >= 0):
            raise TraceError("random-walk needs 0 < lo <= mean <= hi and sigma >= 0")
        rng = np.random.default_rng(seed)
        # mean-reverting walk in log space, clamped
        x = math.log(mean)
        values = []
        for _ in range(n):
            values.append(min(hi, max(lo, math.exp(x))))
            x += 0.1 * (math.log(mean) - x) + sigma * rng.standard_normal()
        name = f"rw-{seed}"
    else:
        raise TraceError(f"unknown trace kind {kind!r}")
    return NetworkTrace(times, tuple(values), name=name)


@dataclass(frozen=True)
class VideoManifest:
    chunk_duration: float
    bitrates: tuple[int, ...]
    chunk_sizes: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if not self.chunk_duration > 0:
            raise TraceError("chunk_duration must be > 0")
        if len(self.bitrates) < 1:
            raise TraceError("empty bitrate ladder")
        if any(b <= 0 for b in self.bitrates):
            raise TraceError("bitrates must be positive")
        if any(b2 <= b1 for b1, b2 in zip(self.bitrates, self.bitrates[1:])):
            raise TraceError(f"bitrate ladder not strictly increasing: {list(self.bitrates)}")
        if not self.chunk_sizes:
            raise TraceError("manifest has no chunks")
        for k, row in enumerate(self.chunk_sizes):
            if len(row) != len(self.bitrates):
                raise TraceError(f"chunk {k}: {len(row)} sizes for {len(self.bitrates)} bitrates")
            if any(s <= 0 for s in row):
                raise TraceError(f"chunk {k}: sizes must be > 0")
            if any(b < a for a, b in zip(row, row[1:])):
                raise TraceError(f"chunk {k}: sizes decrease across bitrate levels")

    @property
    def chunk_count(self) -> int:
        return len(self.chunk_sizes)

    @property
    def levels(self) -> int:
        return len(self.bitrates)

    def truncate(self, n_chunks: int) -> VideoManifest:
        return VideoManifest(self.chunk_duration, self.bitrates, self.chunk_sizes[:n_chunks])

    def to_json(self) -> dict:
        return {
            "chunk_duration_s": self.chunk_duration,
            "bitrates_kbps": list(self.bitrates),
            "chunk_sizes_bytes": [list(r) for r in self.chunk_sizes],
        }


def parse_manifest(doc: dict) -> VideoManifest:
    for key in ("chunk_duration_s", "bitrates_kbps", "chunk_sizes_bytes"):
        if key not in doc:
            raise TraceError(f"manifest missing key {key!r}")
    return VideoManifest(
        float(doc["chunk_duration_s"]),
        tuple(int(b) for b in doc["bitrates_kbps"]),
        tuple(tuple(int(s) for s in row) for row in doc["chunk_sizes_bytes"]),
    )


def load_manifest(path) -> VideoManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise TraceError(f"{path}: invalid JSON ({e})") from None
    return parse_manifest(doc)


def write_manifest(manifest: VideoManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_json()))


def synth_manifest(
    ladder: Sequence[int] = HD_LADDER_KBPS,
    n_chunks: int = 48,
    chunk_duration: float = 4.0,
    variation: float = 0.0,
    seed: int = 0,
) -> VideoManifest:
    """CBR sizes ``kbps * duration / 8``, optionally scaled per chunk by a
    seeded lognormal complexity factor shared across levels."""
    if n_chunks < 1:
        raise TraceError("n_chunks must be >= 1")
    rng = np.random.default_rng(seed)
    scale = np.exp(variation * rng.standard_normal(n_chunks)) if variation > 0 else np.ones(n_chunks)
    sizes = tuple(
        tuple(int(round(b * 1000 * chunk_duration / 8 * s)) for b in ladder) for s in scale
    )
    return VideoManifest(chunk_duration, tuple(int(b) for b in ladder), sizes)


@dataclass(frozen=True)
class ClsWorkloadTrace:
    workload: tuple[float, ...]

    def __post_init__(self):
        if not self.workload:
            raise TraceError("empty workload trace")
        for t, w in enumerate(self.workload):
            if not math.isfinite(w) or w < 0:
                raise TraceError(f"step {t}: workload must be finite and >= 0, got {w}")

    def __len__(self):
        return len(self.workload)

    def at(self, t: int) -> float:
        return self.workload[t % len(self.workload)]

    @property
    def peak(self) -> float:
        return max(self.workload)


@dataclass(frozen=True)
class CdnProviderModel:
    name: str
    capacity: float
    block_slope: float
    unit_price: float

    def __post_init__(self):
        if not self.capacity > 0:
            raise TraceError(f"{self.name}: capacity must be > 0")
        if not self.block_slope >= 0:
            raise TraceError(f"{self.name}: block_slope must be >= 0")
        if not self.unit_price > 0:
            raise TraceError(f"{self.name}: unit_price must be > 0")

    def block_ratio(self, w):
        return np.clip(self.block_slope * np.maximum(0.0, np.asarray(w, dtype=float) - self.capacity), 0.0, 1.0)


@dataclass(frozen=True)
class ClsWorld:
    workload: ClsWorkloadTrace
    providers: tuple[CdnProviderModel, ...]

    @cached_property
    def provider_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(capacities, block slopes, unit prices), for vectorized steps."""
        return (np.array([p.capacity for p in self.providers]),
                np.array([p.block_slope for p in self.providers]),
                np.array([p.unit_price for p in self.providers]))

    def block_ratios(self, loads: np.ndarray) -> np.ndarray:
        cap, slope, _ = self.provider_arrays
        return np.clip(slope * np.maximum(0.0, loads - cap), 0.0, 1.0)


def parse_workload_csv(text: str) -> ClsWorkloadTrace:
    rows = list(csv.reader(text.splitlines()))
    if not rows or [c.strip() for c in rows[0]] != ["t", "workload"]:
        raise TraceError("workload CSV must start with header 't,workload'")
    values = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        try:
            t, w = int(row[0]), float(row[1])
        except (ValueError, IndexError):
            raise TraceError(f"line {lineno}: expected 't,workload', got {row!r}") from None
        if t != len(values):
            raise TraceError(f"line {lineno}: timesteps must be consecutive from 0, got {t}")
        values.append(w)
    return ClsWorkloadTrace(tuple(values))


def format_workload_csv(trace: ClsWorkloadTrace) -> str:
    return "t,workload\n" + "".join(f"{t},{w!r}\n" for t, w in enumerate(trace.workload))


def parse_providers(doc) -> tuple[CdnProviderModel, ...]:
    if not isinstance(doc, list):
        raise TraceError("providers JSON must be an array")
    out = []
    for i, item in enumerate(doc):
        try:
            out.append(CdnProviderModel(str(item["name"]), float(item["capacity"]),
                                        float(item["block_slope"]), float(item["unit_price"])))
        except (KeyError, TypeError) as e:
            raise TraceError(f"provider {i}: missing field {e}") from None
    return tuple(out)


def load_cls_world(directory) -> ClsWorld:
    """Read ``workload.csv`` and ``providers.json`` from a directory."""
    directory = Path(directory)
    wl = parse_workload_csv((directory / "workload.csv").read_text())
    providers = parse_providers(json.loads((directory / "providers.json").read_text()))
    if len(providers) < 2:
        raise TraceError("a CLS world needs at least 2 providers")
    return ClsWorld(wl, providers)


def write_cls_world(world: ClsWorld, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "workload.csv").write_text(format_workload_csv(world.workload))
    doc = [
        {"name": p.name, "capacity": p.capacity, "block_slope": p.block_slope, "unit_price": p.unit_price}
        for p in world.providers
    ]
    (directory / "providers.json").write_text(json.dumps(doc, indent=1))


def diurnal_workload(base: float, noise: np.ndarray) -> np.ndarray:
    t = np.arange(len(noise))
    return np.maximum(0.0, base * (1 + 0.5 * np.sin(2 * np.pi * t / CLS_DAY_STEPS)) + noise)


def synth_cls_world(n_providers: int = 3, seed: int = 0, base: float = 300.0,
                    steps: int = CLS_DAY_STEPS) -> ClsWorld:
    """One synthetic day of workload plus a provider menu.

    workload(t) = base * (1 + 0.5 sin(2 pi t / 288)) + N(0, (0.05 base)^2), floored at 0.
    Providers are ordered cheap-and-small to expensive-and-large: provider i has
    capacity ``base * (0.35 + 0.3 i) * u_c`` and price ``(1 + 0.6 i) * u_p``, with
    ``u_c, u_p`` seeded uniform jitter in [0.9, 1.1].  Block slope is
    ``2 / capacity`` (fully blocked at 1.5x capacity).
    """
    if n_providers < 2:
        raise TraceError(f"need at least 2 providers, got {n_providers}")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 0.05 * base, size=steps)
    wl = ClsWorkloadTrace(tuple(float(w) for w in diurnal_workload(base, noise)))
    providers = []
    for i in range(n_providers):
        cap = base * (0.35 + 0.3 * i) * rng.uniform(0.9, 1.1)
        price = (1.0 + 0.6 * i) * rng.uniform(0.9, 1.1)
        providers.append(CdnProviderModel(f"cdn{i}", float(cap), float(2.0 / cap), float(price)))
    return ClsWorld(wl, tuple(providers))
