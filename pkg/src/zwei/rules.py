"""Battle rules: decide which of two trajectories better meets a lexicographic requirement.

Both rules share one shape.  A primary metric must be low (rebuffering, stall
ratio); a secondary metric breaks ties on the primary.  When both metrics are
within their thresholds the winner is a coin flip, so a battle never ends in
a draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISE = "noise"
SECONDARY = "secondary"
PRIMARY = "primary"


class EnvironmentMismatch(ValueError):
    """Raised when two trajectories were not sampled under the same environment."""


@dataclass(frozen=True)
class RuleConfig:
    eps_primary: float
    eps_secondary: float

    def __post_init__(self):
        if self.eps_primary < 0 or self.eps_secondary < 0:
            raise ValueError("rule thresholds must be >= 0")


# rebuffer seconds / bitrate kbps
ABR_RULE = RuleConfig(eps_primary=0.5, eps_secondary=10.0)
# stall ratio / cost units
CLS_RULE = RuleConfig(eps_primary=0.005, eps_secondary=1.0)


@dataclass(frozen=True)
class BattleOutcome:
    s_u: int
    s_v: int
    branch: str

    @property
    def u_wins(self) -> bool:
        return self.s_u == 1


def _metrics(t):
    return t.metrics if hasattr(t, "metrics") else tuple(t)


def _check_env(tu, tv):
    tag_u, tag_v = getattr(tu, "env_tag", None), getattr(tv, "env_tag", None)
    if tag_u is not None and tag_v is not None and tag_u != tag_v:
        raise EnvironmentMismatch(f"trajectories from different environments: {tag_u} vs {tag_v}")


def lexicographic_battle(primary_u, primary_v, secondary_u, secondary_v, cfg: RuleConfig,
                         rng: np.random.Generator, secondary_higher_is_better: bool) -> BattleOutcome:
    primary_tie = abs(primary_u - primary_v) < cfg.eps_primary
    if primary_tie and abs(secondary_u - secondary_v) < cfg.eps_secondary:
        u_wins = bool(rng.random() < 0.5)
        branch = NOISE
    elif primary_tie:
        if secondary_higher_is_better:
            u_wins = secondary_u > secondary_v
        else:
            u_wins = secondary_u < secondary_v
        branch = SECONDARY
    else:
        u_wins = primary_u < primary_v
        branch = PRIMARY
    return BattleOutcome(1, -1, branch) if u_wins else BattleOutcome(-1, 1, branch)


def abr_rule(tu, tv, cfg: RuleConfig = ABR_RULE, rng: np.random.Generator | None = None) -> BattleOutcome:
    """Low rebuffering first, then high average bitrate.

    ``tu``/``tv`` are trajectories (``.metrics == (avg_bitrate, rebuffer)``)
    or bare metric pairs.
    """
    _check_env(tu, tv)
    (r_u, b_u), (r_v, b_v) = _metrics(tu), _metrics(tv)
    rng = rng if rng is not None else np.random.default_rng()
    return lexicographic_battle(b_u, b_v, r_u, r_v, cfg, rng, secondary_higher_is_better=True)


def cls_rule(tu, tv, cfg: RuleConfig = CLS_RULE, rng: np.random.Generator | None = None) -> BattleOutcome:
    """Low stall ratio first, then low cost.  Metrics are ``(avg_stall, total_cost)``."""
    _check_env(tu, tv)
    (st_u, c_u), (st_v, c_v) = _metrics(tu), _metrics(tv)
    rng = rng if rng is not None else np.random.default_rng()
    return lexicographic_battle(st_u, st_v, c_u, c_v, cfg, rng, secondary_higher_is_better=False)


RULES = {"abr": (abr_rule, ABR_RULE), "cls": (cls_rule, CLS_RULE)}
