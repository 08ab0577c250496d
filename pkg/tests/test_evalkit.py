import csv
from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zwei.baselines import Bola, RateBased, RobustMpc
from zwei.evalkit import EloTable, UnknownPlayer, elo_update, expected_score, qoe, tournament
from zwei.selfplay import AbrTask
from zwei.traces import synth_manifest, synth_network_trace


def chunk(bitrate, rebuffer):
    return SimpleNamespace(bitrate=bitrate, rebuffer=rebuffer)


def test_qoe_examples():
    assert qoe([chunk(1800, 0), chunk(1800, 0)], 4.3) == 3600
    assert qoe([chunk(300, 10.0)], 20) == 100
    assert qoe([], 4.3) == 0


def test_elo_equal_players():
    t = elo_update(EloTable.for_players("ab"), "a", "b", 1)
    assert t.ratings == {"a": 1216, "b": 1184}
    assert t.games == {"a": 1, "b": 1}


def test_elo_favourite_wins():
    t = EloTable.for_players("ab")
    t.ratings.update(a=1400.0, b=1000.0)
    assert expected_score(1400, 1000) == pytest.approx(0.9091, abs=1e-4)
    elo_update(t, "a", "b", 1)
    assert t.ratings["a"] == pytest.approx(1402.9, abs=0.05)


def test_elo_draw_between_equals():
    t = elo_update(EloTable.for_players("ab"), "a", "b", 0.5)
    assert t.ratings == {"a": 1200, "b": 1200}


def test_elo_errors():
    t = EloTable.for_players("ab")
    with pytest.raises(UnknownPlayer):
        elo_update(t, "a", "z", 1)
    with pytest.raises(ValueError):
        elo_update(t, "a", "b", 0.7)


@settings(max_examples=50, deadline=None)
@given(games=st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.sampled_from([0, 0.5, 1])), max_size=200))
def test_elo_conservation(games):
    t = EloTable.for_players("abcd")
    for i, j, s in games:
        if i != j:
            elo_update(t, "abcd"[i], "abcd"[j], s)
    assert sum(t.ratings.values()) == pytest.approx(4800, abs=1e-8)


@pytest.fixture(scope="module")
def small_task():
    traces = [synth_network_trace("random-walk", {"mean": 1.5, "duration": 200}, s) for s in range(6)]
    return AbrTask(traces, synth_manifest(n_chunks=10))


def test_clone_half_winrate(small_task):
    res = tournament({"rate": RateBased(), "rate-clone": RateBased()}, small_task, 200, seed=1)
    assert abs(res.winrate[0, 1] - 0.5) <= 0.1


def test_winrate_antisymmetric_and_deterministic(small_task):
    pols = {"rate": RateBased(), "bola": Bola(), "mpc": RobustMpc()}
    a = tournament(pols, small_task, 12, seed=4)
    b = tournament(pols, small_task, 12, seed=4)
    wr = a.winrate
    for i in range(3):
        for j in range(3):
            if i != j:
                assert wr[i, j] + wr[j, i] == 1
    assert a.elo.ratings == b.elo.ratings and a.sessions == b.sessions
    assert sum(a.elo.ratings.values()) == pytest.approx(3600)


def test_threads_match_serial(small_task):
    pols = {"rate": RateBased(), "bola": Bola()}
    assert tournament(pols, small_task, 5, seed=2, jobs=2).sessions == tournament(pols, small_task, 5, seed=2).sessions


def test_single_game_matches_elo_update(small_task):
    res = tournament({"a": lambda s: 0, "b": lambda s: 5}, small_task, 1, starts=[(0, 0.0)])
    winner = "a" if res.wins[0, 1] else "b"
    assert res.elo.ratings[winner] == 1216


def test_failures_counted(small_task):
    def broken(session):
        raise RuntimeError("boom")
    res = tournament({"rate": RateBased(), "bola": Bola(), "broken": broken}, small_task, 3, seed=0)
    assert res.failures == 3
    assert res.games[0, 2] == 0 and res.games[0, 1] == 3


def test_needs_two_policies(small_task):
    with pytest.raises(ValueError):
        tournament({"rate": RateBased()}, small_task, 1)


def test_write_csvs(small_task, tmp_path):
    res = tournament({"rate": RateBased(), "bola": Bola()}, small_task, 3, seed=0)
    res.write(tmp_path, ("avg_bitrate_kbps", "rebuffer_s", "qoe"))
    rows = list(csv.DictReader(open(tmp_path / "elo.csv")))
    assert [r["policy"] for r in rows] == ["rate", "bola"]
    assert sum(float(r["rating"]) for r in rows) == pytest.approx(2400, abs=1e-5)
    sess = list(csv.DictReader(open(tmp_path / "sessions.csv")))
    assert len(sess) == 6 and set(sess[0]) >= {"avg_bitrate_kbps", "rebuffer_s", "qoe"}
    wr = list(csv.reader(open(tmp_path / "winrate.csv")))
    assert wr[0] == ["policy", "rate", "bola"] and wr[1][1] == ""
    assert float(wr[1][2]) + float(wr[2][1]) == pytest.approx(1)
