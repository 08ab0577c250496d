"""Recursive depth-first search over the real simulator, independent of the vectorized oracle."""


def dfs_best(session, alpha, key="linear"):
    """Returns (sequence, qoe, bitrate_sum, rebuffer) of the best continuation.

    ``key`` "linear" maximizes QoE; "requirement" minimizes rebuffer then
    maximizes bitrate.  Children are visited in ascending level order and only a
    strictly better leaf replaces the incumbent, so ties keep the
    lexicographically smallest sequence.
    """
    best = [None]

    def score(q, b, r):
        return (q,) if key == "linear" else (-r, b)

    def go(s, seq, q, b, r):
        if s.done:
            cand = (score(q, b, r), tuple(seq), q, b, r)
            if best[0] is None or cand[0] > best[0][0]:
                best[0] = cand
            return
        for a in range(s.manifest.levels):
            child = s.copy()
            _, res = child.step(a)
            go(child, seq + [a], q + (res.bitrate - alpha * res.rebuffer), b + res.bitrate, r + res.rebuffer)

    q0 = b0 = r0 = 0
    for res in session.results:
        q0 = q0 + (res.bitrate - alpha * res.rebuffer)
        b0 = b0 + res.bitrate
        r0 = r0 + res.rebuffer
    go(session.copy(), [], q0, b0, r0)
    _, seq, q, b, r = best[0]
    return seq, q, b, r
