"""Scalar brute-force RobustMPC, written without the vectorized planner."""

import itertools


def hm(xs):
    return len(xs) / sum(1.0 / x for x in xs)


def robust_throughput(log, window=5):
    tp = [x for x in log if x > 0]
    if not tp:
        return 0.0
    worst = 0.0
    for j in range(max(1, len(tp) - window), len(tp)):
        past = tp[max(0, j - 5):j]
        worst = max(worst, abs(hm(past) - tp[j]) / tp[j])
    return hm(tp[-5:]) / (1.0 + worst)


def brute_force_mpc(session, horizon, alpha, window=5):
    m = session.manifest
    est = robust_throughput(session.throughput_log, window)
    if est <= 0:
        return 0
    ahead = m.chunk_sizes[session.chunk_index:session.chunk_index + horizon]
    best, best_value = None, None
    for seq in itertools.product(range(m.levels), repeat=len(ahead)):
        buf, value = float(session.buffer), 0.0
        for k, a in enumerate(seq):
            dl = ahead[k][a] / (est * 1e6 / 8.0)
            rebuf = max(0.0, dl - buf)
            buf = min(session.config.buffer_cap, max(0.0, buf - dl) + m.chunk_duration)
            value = value + (m.bitrates[a] - alpha * rebuf)
        if best_value is None or value > best_value:
            best, best_value = seq, value
    return best[0]
