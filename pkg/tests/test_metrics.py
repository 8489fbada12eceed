import math
import random
from itertools import combinations

import pytest
from hypothesis import given, strategies as st

from repute.metrics import entropy, gini, spearman


def gini_oracle(xs):
    xs = [max(x, 0.0) for x in xs]
    n, total = len(xs), sum(xs)
    if n == 0 or total == 0:
        return 0.0
    diff = sum(abs(a - b) for a in xs for b in xs)
    return diff / (2 * n * total)


def entropy_oracle(xs):
    xs = [max(x, 0.0) for x in xs]
    total = sum(xs)
    if total == 0:
        return 0.0
    return -sum(p * math.log2(p) for p in (x / total for x in xs) if p > 0)


def ranks(xs):
    order = sorted(range(len(xs)), key=lambda i: xs[i])
    r = [0.0] * len(xs)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        for k in range(i, j + 1):
            r[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return r


def pearson(a, b):
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / math.sqrt(va * vb)


values = st.lists(st.floats(-1, 1, allow_nan=False), max_size=30)


@given(values)
def test_gini_matches_pairwise(xs):
    assert gini(xs) == pytest.approx(gini_oracle(xs), abs=1e-12)


@given(values)
def test_entropy_matches_definition(xs):
    assert entropy(xs) == pytest.approx(entropy_oracle(xs), abs=1e-9)


def test_known_values():
    assert gini([1, 1, 1, 1]) == 0.0
    assert gini([0, 0, 0, 1]) == pytest.approx(0.75)
    assert entropy([1, 1, 1, 1]) == pytest.approx(2.0)
    assert entropy([0.5, -0.5, 0]) == 0.0
    assert gini([]) == 0.0 and entropy([]) == 0.0


@pytest.mark.parametrize("seed", range(20))
def test_spearman_matches_rank_pearson(seed):
    rnd = random.Random(seed)
    n = rnd.randint(3, 25)
    a = [rnd.choice([0.0, 0.5, 1.0]) if seed % 2 else rnd.random() for _ in range(n)]
    b = [rnd.random() for _ in range(n)]
    if len(set(a)) < 2:
        a[0], a[1] = 0.0, 1.0
    assert spearman(a, b) == pytest.approx(pearson(ranks(a), ranks(b)), abs=1e-12)


def test_spearman_edges():
    assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
    assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert math.isnan(spearman([1, 1, 1], [1, 2, 3]))
    assert math.isnan(spearman([1], [1]))
    with pytest.raises(ValueError):
        spearman([1, 2], [1])
