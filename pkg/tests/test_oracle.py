import numpy as np
import pytest

from zwei import abr_env, oracle
from zwei.abr_env import AbrConfig
from zwei.oracle import HorizonTooLarge, both_optima, linear_optimal, requirement_optimal
from zwei.rules import ABR_RULE, NOISE, abr_rule
from zwei.traces import HD_LADDER_KBPS, synth_manifest

from conftest import constant_trace, random_trace
from dfs_oracle import dfs_best


def replay(trace, manifest, config, seq, start=0.0):
    s = abr_env.reset(trace, manifest.truncate(len(seq)), config, start)
    for a in seq:
        s.step(a)
    return s


def test_single_chunk_huge_bandwidth():
    r = linear_optimal(constant_trace(1000.0), synth_manifest(), AbrConfig(), max_chunks=1)
    assert r.best_sequence == (5,)


def test_all_top_when_bandwidth_ample():
    r = requirement_optimal(constant_trace(500.0), synth_manifest(), AbrConfig(), max_chunks=5)
    assert r.best_sequence == (5,) * 5 and r.total_rebuffer == 0


def test_horizon_too_large():
    with pytest.raises(HorizonTooLarge):
        linear_optimal(constant_trace(1.0), synth_manifest(), max_chunks=9)
    with pytest.raises(HorizonTooLarge):
        requirement_optimal(constant_trace(1.0), synth_manifest(), max_chunks=9)


@pytest.mark.parametrize("seed", range(10))
def test_matches_dfs(seed):
    rng = np.random.default_rng(seed)
    trace = random_trace(rng, lo=0.2, hi=4.0)
    m = synth_manifest(HD_LADDER_KBPS, 4, variation=0.2, seed=seed)
    start = float(rng.uniform(0, 30))
    alpha = float(rng.choice([1.0, 4.3, 20.0]))
    s = abr_env.reset(trace, m, AbrConfig(), start)
    lin = linear_optimal(trace, m, AbrConfig(), alpha, 4, start)
    req = requirement_optimal(trace, m, AbrConfig(), 4, start, alpha)
    seq, q, _, _ = dfs_best(s, alpha, "linear")
    assert lin.best_sequence == seq and lin.qoe == q
    seq, _, b, r = dfs_best(s, alpha, "requirement")
    assert req.best_sequence == seq and req.total_rebuffer == r and req.avg_bitrate == b / 4


def test_replay_consistency():
    rng = np.random.default_rng(5)
    for _ in range(10):
        trace = random_trace(rng, lo=0.2, hi=3.0)
        m = synth_manifest(HD_LADDER_KBPS, 6)
        for r in both_optima(trace, m, AbrConfig(), 4.3, 5).values():
            s = replay(trace, m, AbrConfig(), r.best_sequence)
            assert abr_env.session_metrics(s.results) == r.metrics


def test_mid_session_enumeration_includes_prefix():
    trace = constant_trace(1.5)
    m = synth_manifest(HD_LADDER_KBPS, 4)
    s = abr_env.reset(trace, m, AbrConfig())
    s.step(2)
    en = oracle.enumerate_session(s)
    assert en.seqs.shape == (6 ** 3, 3)
    i = oracle.best_linear(en)
    assert en.qoe[i] == dfs_best(s, 4.3)[1]


def test_huge_alpha_minimizes_rebuffer():
    rng = np.random.default_rng(9)
    for _ in range(5):
        trace = random_trace(rng, lo=0.1, hi=1.5)
        m = synth_manifest()
        r = linear_optimal(trace, m, AbrConfig(), 1e9, 4)
        en = oracle.enumerate_session(abr_env.reset(trace, m.truncate(4), AbrConfig()))
        assert r.total_rebuffer == en.rebuffer.min()


def test_requirement_never_rebuffers_more():
    rng = np.random.default_rng(11)
    for _ in range(10):
        trace = random_trace(rng, lo=0.1, hi=2.0)
        for alpha in (1.0, 4.3, 20.0):
            b = both_optima(trace, synth_manifest(), AbrConfig(), alpha, 4)
            assert b["requirement_optimal"].total_rebuffer <= b["linear_optimal"].total_rebuffer


def test_oracle_policy_plays_plan():
    trace = constant_trace(0.5)
    m = synth_manifest(HD_LADDER_KBPS, 5)
    from zwei.selfplay import AbrTask, rollout
    task = AbrTask([trace], m)
    s = rollout(task, oracle.OraclePolicy(), (0, 0.0))
    assert tuple(r.level for r in s.results) == requirement_optimal(trace, m).best_sequence


def test_requirement_optimum_never_loses_deterministic_branches():
    trace = constant_trace(0.8)
    m = synth_manifest(HD_LADDER_KBPS, 5)
    best = requirement_optimal(trace, m)
    en = oracle.enumerate_session(abr_env.reset(trace, m, AbrConfig()))
    rng = np.random.default_rng(0)
    for i in rng.choice(len(en.seqs), 300, replace=False):
        other = (float(en.avg_bitrate[i]), float(en.rebuffer[i]))
        out = abr_rule(best.metrics, other, ABR_RULE, rng)
        assert out.branch == NOISE or out.s_u == 1
