"""Exhaustive optimal bitrate sequences for short ABR sessions.

All ``levels ** chunks`` sequences are expanded breadth-first as numpy arrays
in lexicographic order, using the same per-chunk arithmetic as
:class:`zwei.abr_env.AbrSession`, so a replay of the winning sequence
reproduces its metrics bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import abr_env
from .abr_env import AbrConfig, AbrSession
from .traces import NetworkTrace, VideoManifest

MAX_CHUNKS = 8


class HorizonTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class OracleResult:
    best_sequence: tuple[int, ...]
    avg_bitrate: float
    total_rebuffer: float
    qoe: float
    objective: tuple

    @property
    def metrics(self) -> tuple[float, float]:
        return self.avg_bitrate, self.total_rebuffer

    def to_json(self) -> dict:
        return {"sequence": list(self.best_sequence), "avg_bitrate_kbps": self.avg_bitrate,
                "total_rebuffer_s": self.total_rebuffer, "qoe": self.qoe}


@dataclass
class Enumeration:
    seqs: np.ndarray
    bitrate_sum: np.ndarray
    rebuffer: np.ndarray
    qoe: np.ndarray
    n_chunks: int

    @property
    def avg_bitrate(self) -> np.ndarray:
        return self.bitrate_sum / self.n_chunks


def enumerate_session(session: AbrSession, alpha: float = 4.3) -> Enumeration:
    """Every continuation of ``session`` to the end of its manifest."""
    m, cfg, trace = session.manifest, session.config, session.trace
    remaining = m.chunk_count - session.chunk_index
    if remaining > MAX_CHUNKS:
        raise HorizonTooLarge(f"{remaining} chunks to enumerate; limit is {MAX_CHUNKS}")
    levels = m.levels
    br = np.asarray(m.bitrates, dtype=float)
    # accumulators start from whatever the session already holds
    prior_bitrate = 0
    prior_rebuf = 0
    prior_qoe = 0
    for r in session.results:
        prior_bitrate = prior_bitrate + r.bitrate
        prior_rebuf = prior_rebuf + r.rebuffer
        prior_qoe = prior_qoe + (r.bitrate - alpha * r.rebuffer)
    seqs = np.zeros((1, 0), dtype=np.int8)
    clock = np.array([session.clock])
    buf = np.array([session.buffer])
    bsum = np.array([prior_bitrate], dtype=float)
    rsum = np.array([prior_rebuf], dtype=float)
    qsum = np.array([prior_qoe], dtype=float)
    for k in range(session.chunk_index, m.chunk_count):
        n = len(clock)
        act = np.tile(np.arange(levels), n)
        clock, buf = np.repeat(clock, levels), np.repeat(buf, levels)
        bsum, rsum, qsum = np.repeat(bsum, levels), np.repeat(rsum, levels), np.repeat(qsum, levels)
        seqs = np.concatenate([np.repeat(seqs, levels, axis=0), act[:, None].astype(np.int8)], axis=1)
        nbytes = np.asarray(m.chunk_sizes[k], dtype=float)[act]
        dl = cfg.rtt + trace.transfer_time(clock + cfg.rtt, nbytes, cfg.payload_ratio)
        stall = np.maximum(0.0, dl - buf)
        rebuf = stall if k > 0 else np.zeros_like(stall)
        raw = np.maximum(0.0, buf - dl) + m.chunk_duration
        idle = np.maximum(0.0, raw - cfg.buffer_cap)
        buf = raw - idle
        clock = clock + (dl + idle)
        bits = br[act]
        bsum = bsum + bits
        rsum = rsum + rebuf
        qsum = qsum + (bits - alpha * rebuf)
    return Enumeration(seqs, bsum, rsum, qsum, m.chunk_count)


def _result(en: Enumeration, i: int, objective) -> OracleResult:
    return OracleResult(tuple(int(a) for a in en.seqs[i]), float(en.avg_bitrate[i]),
                        float(en.rebuffer[i]), float(en.qoe[i]), objective)


def best_linear(en: Enumeration) -> int:
    return int(np.argmax(en.qoe))


def best_requirement(en: Enumeration) -> int:
    """Least rebuffering, then highest average bitrate, then lexicographically smallest."""
    mask = en.rebuffer == en.rebuffer.min()
    avg = np.where(mask, en.avg_bitrate, -np.inf)
    return int(np.argmax(avg))


def _session(trace, manifest, config, max_chunks, trace_start) -> AbrSession:
    if max_chunks > MAX_CHUNKS:
        raise HorizonTooLarge(f"max_chunks {max_chunks} exceeds {MAX_CHUNKS}")
    if max_chunks < 1:
        raise ValueError("max_chunks must be >= 1")
    return abr_env.reset(trace, manifest.truncate(max_chunks), config or AbrConfig(), trace_start)


def linear_optimal(trace: NetworkTrace, manifest: VideoManifest, config: AbrConfig | None = None,
                   alpha: float = 4.3, max_chunks: int = 5, trace_start: float = 0.0) -> OracleResult:
    en = enumerate_session(_session(trace, manifest, config, max_chunks, trace_start), alpha)
    i = best_linear(en)
    return _result(en, i, (float(en.qoe[i]),))


def requirement_optimal(trace: NetworkTrace, manifest: VideoManifest, config: AbrConfig | None = None,
                        max_chunks: int = 5, trace_start: float = 0.0, alpha: float = 4.3) -> OracleResult:
    """``alpha`` only affects the reported QoE, never the choice."""
    en = enumerate_session(_session(trace, manifest, config, max_chunks, trace_start), alpha)
    i = best_requirement(en)
    return _result(en, i, (float(en.rebuffer[i]), -float(en.avg_bitrate[i])))


def both_optima(trace, manifest, config=None, alpha: float = 4.3, max_chunks: int = 5,
                trace_start: float = 0.0) -> dict[str, OracleResult]:
    en = enumerate_session(_session(trace, manifest, config, max_chunks, trace_start), alpha)
    i, j = best_linear(en), best_requirement(en)
    return {
        "linear_optimal": _result(en, i, (float(en.qoe[i]),)),
        "requirement_optimal": _result(en, j, (float(en.rebuffer[j]), -float(en.avg_bitrate[j]))),
    }


class OraclePolicy:
    """Plays the requirement-optimal (or linear-optimal) plan for the remainder of a short session."""

    def __init__(self, mode: str = "requirement", alpha: float = 4.3):
        if mode not in ("requirement", "linear"):
            raise ValueError(f"unknown oracle mode {mode!r}")
        self.mode = mode
        self.alpha = alpha
        self.name = f"oracle-{mode}"
        self._plans: dict[int, tuple[int, tuple[int, ...]]] = {}

    def __call__(self, session: AbrSession) -> int:
        key = id(session)
        plan = self._plans.get(key)
        if plan is None or plan[0] > session.chunk_index:
            en = enumerate_session(session.copy(), self.alpha)
            i = best_requirement(en) if self.mode == "requirement" else best_linear(en)
            plan = (session.chunk_index, tuple(int(a) for a in en.seqs[i]))
            self._plans = {key: plan}
        start, seq = plan
        return seq[session.chunk_index - start]
