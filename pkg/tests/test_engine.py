import math
import random

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from repute.core import EngineConfig, RatingKind, ReputationState
from repute.engine import (
    compute_period,
    differential_endorsing,
    differential_transactional,
    log_differential,
    normalize_differential,
    normalize_financial,
    update_reputation,
)
from repute.errors import EmptyBatch, NonMonotonicTime, NonPositiveAmount

from conftest import rec, state
from engine_examples import close, worked_examples
from instances import random_instance
from oracles import lifetime_accumulator, weighted_differential


@pytest.mark.parametrize("name,actual,expected", worked_examples(), ids=lambda x: x if isinstance(x, str) else "")
def test_worked_example(name, actual, expected):
    assert close(actual, expected, 1e-12), f"{name}: {actual} != {expected}"


class TestNormalizeFinancial:
    def test_errors(self):
        with pytest.raises(EmptyBatch):
            normalize_financial([])
        with pytest.raises(NonPositiveAmount):
            normalize_financial([3, 0])

    @given(st.lists(st.floats(1e-6, 1e9), min_size=1, max_size=30))
    def test_range_and_max(self, amounts):
        out = normalize_financial(amounts)
        assert all(0 < x <= 1 for x in out)
        assert out[amounts.index(max(amounts))] == 1.0


# -- random instances -----------------------------------------------------------

def oracle_tuples(ratings):
    return [(r.rater, r.ratee, r.aspect_key, r.value, r.weight) for r in ratings]


class TestAgainstOracle:
    @pytest.mark.parametrize("seed", range(40))
    def test_transactional_matches_exact_oracle(self, seed):
        rnd = random.Random(seed)
        cfg = EngineConfig(default_reputation=0.3, aspect_weights={"quality": 2.0, "timeliness": 0.5})
        _, prior, ratings = random_instance(rnd, aspects=("quality", "timeliness", "default"))
        got = differential_transactional(ratings, state(prior), cfg)
        want = weighted_differential(oracle_tuples(ratings), prior, 0.3, 0.0, dict(cfg.aspect_weights))
        assert set(got) == set(want)
        for m in want:
            assert got[m] == pytest.approx(float(want[m]), abs=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_endorsing_uses_latest_standing_rating(self, seed):
        rnd = random.Random(1000 + seed)
        _, prior, ratings = random_instance(rnd, kind="endorse", max_ratings=60)
        latest = {}
        for r in sorted(ratings, key=lambda r: r.sort_key()):
            latest[r.rater, r.ratee, r.aspect_key] = r
        got = differential_endorsing(ratings, state(prior), EngineConfig(default_reputation=0.5))
        want = weighted_differential(oracle_tuples(latest.values()), prior, 0.5, 0.0)
        assert set(got) == set(want)
        for m in want:
            assert got[m] == pytest.approx(float(want[m]), abs=1e-12)


class TestProperties:
    @pytest.mark.parametrize("seed", range(30))
    def test_weighted_mean_bound(self, seed):
        rnd = random.Random(seed)
        _, prior, ratings = random_instance(rnd)
        got = differential_transactional(ratings, state(prior), EngineConfig(rater_weight_floor=0.01))
        for m, v in got.items():
            values = [r.value for r in ratings if r.ratee == m]
            assert min(values) - 1e-12 <= v <= max(values) + 1e-12

    @given(st.integers(0, 10**6), st.floats(1e-3, 1e3))
    @settings(max_examples=50)
    def test_stake_scale_invariance(self, seed, alpha):
        rnd = random.Random(seed)
        _, prior, ratings = random_instance(rnd, max_ratings=40)
        scaled = [rec(r.kind.value, r.rater, r.ratee, r.time, r.value, r.weight * alpha) for r in ratings]
        a = differential_transactional(ratings, state(prior), EngineConfig())
        b = differential_transactional(scaled, state(prior), EngineConfig())
        assert set(a) == set(b)
        assert all(abs(a[m] - b[m]) <= 1e-12 for m in a)

    @given(st.integers(0, 10**6), st.floats(0.01, 1.0))
    @settings(max_examples=50)
    def test_rater_reputation_scale_invariance(self, seed, alpha):
        rnd = random.Random(seed)
        _, prior, ratings = random_instance(rnd, max_ratings=40)
        rd = 0.4
        scaled_prior = {m: v * alpha for m, v in prior.items()}
        a = differential_transactional(ratings, state(prior), EngineConfig(default_reputation=rd))
        b = differential_transactional(ratings, state(scaled_prior), EngineConfig(default_reputation=rd * alpha))
        assert set(a) == set(b)
        assert all(abs(a[m] - b[m]) <= 1e-12 for m in a)

    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_log_differential_odd_monotone_bounded(self, x, y):
        lx = log_differential({"a": x})["a"]
        assert log_differential({"a": -x})["a"] == -lx
        assert abs(lx) <= abs(x) + 1e-15
        assert abs(lx) <= math.log10(2) + 1e-15
        ly = log_differential({"a": y})["a"]
        if x < y:
            assert lx <= ly
        if y - x > 1e-12:
            assert lx < ly

    @given(st.dictionaries(st.text(min_size=1, max_size=4), st.floats(-10, 10), max_size=12))
    def test_normalization_postcondition(self, d):
        p = normalize_differential(d)
        if any(v != 0 for v in d.values()):
            assert max(abs(v) for v in p.values()) == 1.0
        else:
            assert all(v == 0 for v in p.values())

    @given(st.floats(-1, 1), st.floats(-1, 1), st.integers(0, 50), st.integers(1, 50))
    def test_update_convexity(self, r, p, span_prev, span_new):
        prior = ReputationState(span_prev, 0, {"a": r})
        out = update_reputation(prior, {"a": p}, span_prev + span_new, EngineConfig()).entries["a"]
        assert min(r, p) - 1e-15 <= out <= max(r, p) + 1e-15

    @pytest.mark.parametrize("seed", range(25))
    def test_lifetime_consistency(self, seed):
        rnd = random.Random(seed)
        members = [f"m{k}" for k in range(rnd.randint(1, 6))]
        periods, dt = rnd.randint(1, 12), rnd.randint(1, 5)
        series = [{m: rnd.uniform(-1, 1) for m in members} for _ in range(periods)]
        s = ReputationState.genesis(0)
        for k, p in enumerate(series):
            s = update_reputation(s, p, (k + 1) * dt, EngineConfig())
        want = lifetime_accumulator(series, [dt] * periods)
        for m in members:
            assert s.entries[m] == pytest.approx(float(want[m]), abs=1e-9)


class TestUpdate:
    def test_non_monotonic_time(self):
        with pytest.raises(NonMonotonicTime):
            update_reputation(ReputationState(5, 0, {}), {}, 5, EngineConfig())

    def test_newcomer_starts_from_default(self):
        cfg = EngineConfig(default_reputation=0.2)
        out = update_reputation(ReputationState(1, 0, {}), {"n": 1.0}, 2, cfg)
        assert out.entries["n"] == pytest.approx((0.2 + 1.0) / 2)

    def test_no_evidence_decays_toward_default(self):
        prior = ReputationState(3, 0, {"a": 0.9})
        decay = update_reputation(prior, {}, 4, EngineConfig(default_reputation=0.1))
        hold = update_reputation(prior, {}, 4, EngineConfig(default_reputation=0.1, no_evidence="hold"))
        assert decay.entries["a"] == pytest.approx((3 * 0.9 + 0.1) / 4)
        assert hold.entries["a"] == 0.9

    def test_decay_factors(self):
        prior = ReputationState(4, 0, {"a": 1.0})
        fast = update_reputation(prior, {"a": 0.0}, 5, EngineConfig(decay_prev=0.5, decay_new=2.0))
        # a = 0.5*4, b = 2*1
        assert fast.entries["a"] == pytest.approx(2.0 / 4.0)


class TestComputePeriod:
    def test_empty_ratings_apply_no_evidence_rule(self):
        prior = ReputationState(2, 0, {"a": 0.5, "b": -0.2})
        s, res = compute_period([], prior, 4, EngineConfig())
        assert s.entries == {"a": 0.25, "b": -0.1}
        assert res.per_member == {}

    def test_single_endorsement_from_default_rater(self):
        cfg = EngineConfig(default_reputation=0.5)
        prior = ReputationState(1, 0, {})
        s, _ = compute_period([rec("endorse", "j", "i", time=2, value=0.6, weight=3)], prior, 2, cfg)
        # dS = 0.6 -> P = 1.0 after normalization, blended with R_d over equal spans
        assert s.entries["i"] == pytest.approx((0.5 + 1.0) / 2)

    def test_record_outside_period(self):
        with pytest.raises(NonMonotonicTime):
            compute_period([rec("vote", "j", "i", time=1)], ReputationState(1, 0, {}), 3, EngineConfig())

    @pytest.mark.parametrize("seed", range(10))
    def test_shuffle_invariance(self, seed):
        rnd = random.Random(seed)
        mix = []
        for kind in ("vote", "endorse", "finance"):
            _, prior, ratings = random_instance(rnd, kind=kind, max_ratings=50,
                                                aspects=("quality", "default"))
            if kind == "finance":
                ratings = [rec("finance", r.rater, r.ratee, r.time, 1.0, r.weight * 100) for r in ratings]
            mix.extend(ratings)
        cfg = EngineConfig(default_reputation=0.3, use_log_differential=bool(seed % 2))
        base, _ = compute_period(mix, state(prior), 5, cfg)
        for _ in range(5):
            rnd.shuffle(mix)
            again, _ = compute_period(mix, state(prior), 5, cfg)
            assert again.hash == base.hash
            assert again.entries == base.entries

    def test_finance_amounts_are_log_normalized(self):
        cfg = EngineConfig(default_reputation=1.0)
        ratings = [rec("finance", "j", "i", value=1.0, weight=999), rec("vote", "k", "i", value=-1.0, weight=1)]
        _, res = compute_period(ratings, ReputationState(0, 0, {}), 1, cfg)
        # weights 1.0 (finance, normalized) and 1.0 (vote) -> mean 0
        assert res.transact["i"] == pytest.approx(0.0, abs=1e-15)
        _, raw = compute_period(ratings, ReputationState(0, 0, {}), 1,
                                EngineConfig(default_reputation=1.0, financial_log_normalize=False))
        assert raw.transact["i"] == pytest.approx(998 / 1000)

    def test_sybil_null_gain(self):
        prior = ReputationState(5, 0, {"h": 0.7})
        ring = [rec("vote", a, b, time=6, value=1.0) for a in "xyz" for b in "xyz" if a != b]
        s, res = compute_period(ring, prior, 6, EngineConfig())
        assert res.per_member == {}
        assert {c.key[0] for c in res.skipped} == set("xyz")
        assert all(m not in s.entries for m in "xyz")

    def test_fine_grained_in_result(self):
        ratings = [rec("vote", "j", "i", time=1, value=0.5, aspect="quality", category="pizza", event="e")]
        _, res = compute_period(ratings, ReputationState(0, 0, {"j": 1.0}), 1, EngineConfig(), fine_grained=True)
        assert res.fine_grained["ike"][("i", "quality", "e")] == 0.5

    def test_missing_category_goes_to_default_slice(self):
        from repute.engine import differential_fine_grained

        fine = differential_fine_grained([rec("vote", "j", "i", value=0.3)], state({"j": 1.0}), EngineConfig())
        assert fine["ic"] == {("i", "default"): 0.3}
