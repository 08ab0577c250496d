from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zwei import abr_env, baselines, oracle
from zwei.abr_env import AbrConfig
from zwei.baselines import MpcConfig, bola, bola_params, bola_scores, rate_based, robust_estimate, robust_mpc
from zwei.traces import HD_LADDER_KBPS, ClsWorkloadTrace, ClsWorld, synth_cls_world, synth_manifest

from conftest import constant_trace, random_trace
from mpc_oracle import brute_force_mpc

HD = HD_LADDER_KBPS


def obs(tput=(), buffer_s=0.0, sizes=None):
    return SimpleNamespace(throughput_mbps=np.array(tput, dtype=float), buffer_s=buffer_s,
                           next_sizes_bytes=np.array(sizes if sizes is not None else [b * 500 for b in HD], float))


def test_rate_based_harmonic_mean():
    assert baselines.harmonic_mean([1, 2, 4, 4, 8]) == pytest.approx(5 / 2.125)
    assert rate_based(obs([1, 2, 4, 4, 8]), HD) == 3


def test_rate_based_floor_and_empty():
    assert rate_based(obs([0.1, 0.2, 0.25]), HD) == 0
    assert rate_based(obs([]), HD) == 0
    assert rate_based(obs([0, 0, 0]), HD) == 0


def test_rate_based_uses_last_five_nonzero():
    assert rate_based(obs([0.1, 0.1, 5, 5, 5, 5, 5]), HD) == 5


@settings(max_examples=200, deadline=None)
@given(hist=st.lists(st.floats(0.01, 20), min_size=1, max_size=8), bumps=st.lists(st.floats(0, 5), min_size=8, max_size=8))
def test_rate_based_monotone(hist, bumps):
    higher = [h + b for h, b in zip(hist, bumps)]
    assert rate_based(obs(higher), HD) >= rate_based(obs(hist), HD)


def test_bola_empty_buffer_lowest():
    assert bola(obs(buffer_s=0.0), 4.0, 60.0) == 0


def brute_bola(o, chunk_duration, cap, gamma=5.0):
    sizes = list(o.next_sizes_bytes)
    v_max = np.log(max(sizes) / min(sizes))
    V = (cap / chunk_duration - 1) / (v_max + gamma)
    best, best_score = 0, None
    for a, s in enumerate(sizes):
        score = (V * (np.log(s / min(sizes)) + gamma) - o.buffer_s / chunk_duration) / s
        if score > 0 and (best_score is None or score > best_score):
            best, best_score = a, score
    return best


def test_bola_full_buffer_is_best_positive():
    o = obs(buffer_s=60.0)
    choice = bola(o, 4.0, 60.0)
    assert choice == brute_bola(o, 4.0, 60.0)
    p = bola_params(60.0, 4.0, o.next_sizes_bytes)
    scores = bola_scores(o.next_sizes_bytes, 60.0, 4.0, p)
    assert scores[choice] > 0 or not (scores > 0).any()


def test_bola_matches_argmax_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        sizes = np.sort(rng.uniform(1e4, 3e6, size=6))
        cap = float(rng.uniform(10, 120))
        o = obs(buffer_s=float(rng.uniform(0, cap)), sizes=sizes)
        assert bola(o, 4.0, cap) == brute_bola(o, 4.0, cap)


def test_bola_climbs_with_buffer():
    levels = [bola(obs(buffer_s=b), 4.0, 60.0) for b in np.linspace(0, 54, 28)]
    assert levels == sorted(levels) and levels[-1] > 0


def _session_with_history(tput, buffer_s, chunk_index=10, n_chunks=48, cfg=None):
    s = abr_env.reset(constant_trace(1.0), synth_manifest(HD, n_chunks), cfg or AbrConfig())
    s.throughput_log = list(tput)
    s.buffer = buffer_s
    s.chunk_index = chunk_index
    return s


def test_mpc_horizon_one_ample_buffer():
    s = _session_with_history([5.0] * 8, 30.0)
    assert robust_mpc(s, MpcConfig(horizon=1, qoe_alpha=4.3)) == 5


def test_mpc_zero_error_is_plain_hm():
    assert robust_estimate([3.0] * 10) == 3.0
    assert robust_estimate([1, 2, 4, 4, 8, 2]) < baselines.harmonic_mean([2, 4, 4, 8, 2])


def test_mpc_matches_brute_force_horizon_3():
    rng = np.random.default_rng(0)
    for _ in range(200):
        s = abr_env.reset(random_trace(rng), synth_manifest(HD, 20, variation=0.2, seed=int(rng.integers(99))),
                          AbrConfig(), float(rng.uniform(0, 40)))
        for a in rng.integers(0, 6, size=int(rng.integers(1, 15))):
            s.step(int(a))
        alpha = float(rng.choice([1.0, 4.3, 20.0, 500.0]))
        assert robust_mpc(s, MpcConfig(horizon=3, qoe_alpha=alpha)) == brute_force_mpc(s, 3, alpha)


def test_mpc_equals_oracle_on_constant_prediction():
    """With zero prediction error and a constant trace at the estimate, MPC's plan is the
    linear-optimal continuation under the same simulator (no overhead)."""
    cfg = AbrConfig(rtt=0.0, payload_ratio=1.0)
    rng = np.random.default_rng(3)
    for _ in range(30):
        bw = float(rng.uniform(0.3, 5.0))
        h = int(rng.integers(1, 4))
        m = synth_manifest(HD, 1 + h)
        s = abr_env.reset(constant_trace(bw), m, cfg)
        s.step(int(rng.integers(6)))
        s.throughput_log = [bw] * 6
        alpha = float(rng.choice([1.0, 4.3, 20.0]))
        en = oracle.enumerate_session(s.copy(), alpha)
        assert robust_mpc(s, MpcConfig(horizon=h, qoe_alpha=alpha)) == en.seqs[oracle.best_linear(en), 0]


def test_mpc_horizon_limits():
    with pytest.raises(ValueError):
        MpcConfig(horizon=8)


def test_wrr_zero_workload():
    w = synth_cls_world(3, 1)
    w = ClsWorld(ClsWorkloadTrace((0.0,) * 288), w.providers)
    assert baselines.run_constant(w, baselines.uniform_wrr(3).ratios) == (0, 0)


def test_wrr_all_on_first_provider():
    from zwei import cls_env
    w = synth_cls_world(3, 1)
    s = cls_env.reset(w)
    _, r = s.step_ratios(baselines.wrr([1, 0, 0])(s))
    assert s.history[-1, 1:, 0].sum() == 0 and s.history[-1, 0, 0] > 0


def test_wrr_rejects_off_simplex():
    with pytest.raises(ValueError):
        baselines.wrr([0.5, 0.6])


def test_best_wrr_not_worse_than_uniform():
    w = synth_cls_world(3, 7)
    best = baselines.best_wrr(w, step=0.1)
    uni = baselines.run_constant(w, baselines.uniform_wrr(3).ratios)
    assert baselines.run_constant(w, best.ratios) <= uni
