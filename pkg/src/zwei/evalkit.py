"""QoE, Elo ratings and rule-judged tournaments between policies."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

ABR_SESSION_COLUMNS = ("avg_bitrate_kbps", "rebuffer_s", "qoe")
CLS_SESSION_COLUMNS = ("avg_stall", "total_cost")


def qoe(results, alpha: float = 4.3) -> float:
    """Sum over chunks of bitrate (kbps) minus ``alpha`` times rebuffering (s)."""
    total = 0
    for r in results:
        total = total + (r.bitrate - alpha * r.rebuffer)
    return float(total)


class UnknownPlayer(KeyError):
    pass


@dataclass
class EloTable:
    k_factor: float = 32.0
    initial: float = 1200.0
    ratings: dict = field(default_factory=dict)
    games: dict = field(default_factory=dict)
    log: list = field(default_factory=list)

    def register(self, player: str) -> None:
        self.ratings.setdefault(player, self.initial)
        self.games.setdefault(player, 0)

    @classmethod
    def for_players(cls, players, **kw) -> EloTable:
        t = cls(**kw)
        for p in players:
            t.register(p)
        return t


def expected_score(r_a: float, r_b: float) -> float:
    return 1.0 / (1.0 + 10 ** ((r_b - r_a) / 400.0))


def elo_update(table: EloTable, a: str, b: str, score: float) -> EloTable:
    """``score`` is a's result: 1 win, 0.5 draw, 0 loss."""
    for p in (a, b):
        if p not in table.ratings:
            raise UnknownPlayer(p)
    if score not in (0, 0.5, 1):
        raise ValueError(f"score must be 0, 0.5 or 1, got {score}")
    e_a = expected_score(table.ratings[a], table.ratings[b])
    delta = table.k_factor * (score - e_a)
    table.ratings[a] += delta
    table.ratings[b] -= delta
    table.games[a] += 1
    table.games[b] += 1
    table.log.append((a, b, score))
    return table


@dataclass
class TournamentResult:
    elo: EloTable
    names: list
    wins: np.ndarray  # wins[a, b] = battles a won against b
    games: np.ndarray
    sessions: list  # (match, policy, env description, *metrics)
    failures: int = 0

    @property
    def winrate(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.games > 0, self.wins / np.maximum(self.games, 1), np.nan)

    def write(self, out_dir, metric_columns: Sequence[str]) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "elo.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["policy", "rating", "games"])
            for name in self.names:
                w.writerow([name, f"{self.elo.ratings[name]:.6f}", self.elo.games[name]])
        wr = self.winrate
        with open(out / "winrate.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["policy", *self.names])
            for i, name in enumerate(self.names):
                w.writerow([name, *("" if i == j else f"{wr[i, j]:.6f}" for j in range(len(self.names)))])
        with open(out / "sessions.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["match", "policy", "trace", "offset", *metric_columns])
            for row in self.sessions:
                w.writerow([row[0], row[1], row[2], row[3], *(f"{x:.10g}" for x in row[4:])])


def session_row(task_kind: str, session, alpha: float) -> tuple:
    from . import abr_env, cls_env
    if task_kind == "abr":
        avg, rebuf = abr_env.session_metrics(session.results)
        return (avg, rebuf), (avg, rebuf, qoe(session.results, alpha))
    stall, cost = cls_env.session_metrics(session.results)
    return (stall, cost), (stall, cost)


def tournament(policies: dict, task, n_matches: int, seed: int = 0, alpha: float = 4.3,
               jobs: int = 1, starts: Sequence | None = None) -> TournamentResult:
    """Every match draws one environment; all policies play it; each pair battles once.

    ``policies`` maps names to callables ``policy(session) -> action``.
    ``starts`` (optional) fixes the environment of each match instead of
    drawing it from ``task.sample_start``.
    """
    from .selfplay import Trajectory, rollout
    names = list(policies)
    if len(names) < 2:
        raise ValueError("a tournament needs at least 2 policies")
    rng = np.random.default_rng(seed)
    elo = EloTable.for_players(names)
    n = len(names)
    wins = np.zeros((n, n))
    games = np.zeros((n, n))
    sessions = []
    failures = 0
    pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for match in range(n_matches):
            start = starts[match % len(starts)] if starts is not None else task.sample_start(rng)

            def play(name):
                try:
                    return rollout(task, policies[name], start)
                except Exception as e:  # recorded and skipped
                    log.warning("match %d: %s failed: %s", match, name, e)
                    return None

            played = list(pool.map(play, names)) if pool else [play(nm) for nm in names]
            trajs = {}
            for name, s in zip(names, played):
                if s is None:
                    failures += 1
                    continue
                metrics, row = session_row(task.kind, s, alpha)
                trajs[name] = Trajectory(None, None, None, metrics, s.env_tag)
                desc = task.traces[start[0]].name if task.kind == "abr" else "world"
                offset = start[1] if task.kind == "abr" else 0
                sessions.append((match, name, desc, offset, *row))
            for i in range(n):
                for j in range(i + 1, n):
                    a, b = names[i], names[j]
                    if a not in trajs or b not in trajs:
                        continue
                    res = task.rule(trajs[a], trajs[b], task.rule_cfg, rng)
                    wins[i, j] += res.s_u == 1
                    wins[j, i] += res.s_v == 1
                    games[i, j] += 1
                    games[j, i] += 1
                    elo_update(elo, a, b, 1 if res.s_u == 1 else 0)
    finally:
        if pool:
            pool.shutdown()
    return TournamentResult(elo, names, wins, games, sessions, failures)
