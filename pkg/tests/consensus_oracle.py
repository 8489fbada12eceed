"""Straight-line restatement of the round verdict rules, used as a test oracle."""

from collections import Counter
from itertools import product


def verdict_after(hashes, quorum_min, submissions_max):
    """Replay ``hashes`` (one per distinct agency) and report what a round should do.

    Returns ``(verdict, winner, closed_at, disputed, blamed)`` where ``closed_at`` is
    the number of submissions accepted and ``blamed`` the indices of dissenters.
    """
    seen = Counter()
    disputed = False
    for k, h in enumerate(hashes, start=1):
        seen[h] += 1
        if len(seen) > 1:
            disputed = True
        reached = sorted(x for x, c in seen.items() if c >= quorum_min)
        if reached:
            winner = reached[0]
        elif k >= submissions_max and max(seen.values()) >= quorum_min:
            best = max(seen.values())
            winner = min(x for x, c in seen.items() if c == best)
        else:
            continue
        blamed = tuple(i for i in range(k) if hashes[i] != winner) if disputed else ()
        return "valid", winner, k, disputed, blamed
    return "pending", None, len(hashes), disputed, ()


def cases(max_agencies=5, max_quorum=3, max_alphabet=3):
    alphabet = "abc"[:max_alphabet]
    for n in range(1, max_agencies + 1):
        for q in range(1, min(max_quorum, n) + 1):
            for m in range(q, n + 1):
                for hashes in product(alphabet, repeat=n):
                    yield n, q, m, hashes
