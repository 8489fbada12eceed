import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repute.core import (
    EngineConfig,
    RatingKind,
    RatingRecord,
    ReputationState,
    canonical_bytes,
    canonical_hash,
    validate_record,
)
from repute.errors import (
    ConfigError,
    InvalidField,
    MissingField,
    NegativeWeight,
    NonFiniteValue,
    NonPositiveAmount,
    SelfRating,
    ValueOutOfRange,
)

members = st.text(min_size=1, max_size=8)
rep_values = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)


class TestValidateRecord:
    def test_accepts_vote(self):
        r = validate_record({"kind": "Vote", "from": "j", "to": "i", "time": 3, "value": 0.5, "weight": 2.0})
        assert r == RatingRecord(RatingKind.VOTE, "j", "i", 3, 0.5, 2.0)

    def test_self_rating(self):
        with pytest.raises(SelfRating):
            validate_record({"kind": "vote", "from": "i", "to": "i", "time": 1, "value": 1.0, "weight": 1})

    def test_value_out_of_range(self):
        with pytest.raises(ValueOutOfRange):
            validate_record({"kind": "endorse", "from": "j", "to": "i", "time": 1, "value": 1.7, "weight": 1})

    def test_clamps_within_tolerance(self):
        r = validate_record({"kind": "vote", "from": "j", "to": "i", "time": 1, "value": 1 + 5e-10, "weight": 1})
        assert r.value == 1.0
        r = validate_record({"kind": "vote", "from": "j", "to": "i", "time": 1, "value": -1 - 5e-10, "weight": 1})
        assert r.value == -1.0
        with pytest.raises(ValueOutOfRange):
            validate_record({"kind": "vote", "from": "j", "to": "i", "time": 1, "value": 1 + 1e-8, "weight": 1})

    def test_negative_weight(self):
        with pytest.raises(NegativeWeight):
            validate_record({"kind": "vote", "from": "j", "to": "i", "time": 1, "value": 0.1, "weight": -1})

    @pytest.mark.parametrize("missing", ["kind", "from", "to", "time", "value", "weight"])
    def test_missing_field(self, missing):
        raw = {"kind": "vote", "from": "j", "to": "i", "time": 1, "value": 0.1, "weight": 1}
        del raw[missing]
        with pytest.raises(MissingField):
            validate_record(raw)

    def test_finance_defaults_to_positive_value(self):
        r = validate_record({"kind": "finance", "from": "j", "to": "i", "time": 1, "weight": 250.0})
        assert r.value == 1.0 and r.weight == 250.0
        with pytest.raises(ValueOutOfRange):
            validate_record({"kind": "finance", "from": "j", "to": "i", "time": 1, "value": -1, "weight": 5})
        with pytest.raises(NonPositiveAmount):
            validate_record({"kind": "finance", "from": "j", "to": "i", "time": 1, "weight": 0})

    @pytest.mark.parametrize("field,bad", [("kind", "like"), ("time", -1), ("time", 1.5), ("value", "x"),
                                           ("from", 3), ("aspect", 7)])
    def test_invalid_fields(self, field, bad):
        raw = {"kind": "vote", "from": "j", "to": "i", "time": 1, "value": 0.1, "weight": 1}
        raw[field] = bad
        with pytest.raises(InvalidField):
            validate_record(raw)

    def test_non_finite(self):
        with pytest.raises(NonFiniteValue):
            validate_record({"kind": "vote", "from": "j", "to": "i", "time": 1, "value": float("nan"), "weight": 1})

    @given(
        kind=st.sampled_from(["endorse", "vote", "finance"]),
        rater=members,
        ratee=members,
        time=st.integers(0, 10**6),
        value=rep_values,
        weight=st.floats(min_value=1e-6, max_value=1e6),
        aspect=st.none() | members,
        category=st.none() | members,
    )
    def test_round_trip(self, kind, rater, ratee, time, value, weight, aspect, category):
        if rater == ratee:
            return
        raw = {"kind": kind, "from": rater, "to": ratee, "time": time, "value": value, "weight": weight}
        if aspect:
            raw["aspect"] = aspect
        if category:
            raw["category"] = category
        if kind == "finance":
            raw["value"] = 1.0
        r = validate_record(raw)
        assert validate_record(json.loads(r.to_json())) == r


class TestCanonicalHash:
    def test_order_independent(self):
        a = ReputationState(0, 0, {"a": 0.5, "b": 0.25})
        b = ReputationState(0, 0, {"b": 0.25, "a": 0.5})
        assert canonical_hash(a) == canonical_hash(b)

    def test_value_sensitive(self):
        assert canonical_hash(ReputationState(0, 0, {"a": 0.5})) != canonical_hash(ReputationState(0, 0, {"a": 0.6}))

    def test_empty_is_stable(self):
        s = ReputationState(0, 0, {})
        assert canonical_bytes(0, 0, {}) == b"[0,0,[]]"
        # sha256(b"[0,0,[]]")
        assert s.hash == "909d98dd4653eadce82e7450f85f8d4b9ed42392d2e256847ac7606b3848d27a"

    def test_canonical_form_is_documented_layout(self):
        b = canonical_bytes(5, 1, {"b": -0.25, "a": 1.0}, 3)
        assert b == b'[5,1,[["a","1.000"],["b","-0.250"]]]'

    def test_negative_zero_equals_zero(self):
        assert canonical_hash(ReputationState(0, 0, {"a": -1e-12})) == canonical_hash(ReputationState(0, 0, {"a": 0.0}))

    def test_timestamps_are_hashed(self):
        assert ReputationState(1, 0, {"a": 0.1}).hash != ReputationState(2, 0, {"a": 0.1}).hash

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteValue):
            canonical_bytes(0, 0, {"a": math.inf})
        with pytest.raises(NonFiniteValue):
            ReputationState(0, 0, {"a": math.nan})

    @given(st.dictionaries(members, rep_values, max_size=15), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, entries, rnd):
        items = list(entries.items())
        rnd.shuffle(items)
        assert ReputationState(3, 1, dict(items)).hash == ReputationState(3, 1, entries).hash

    @given(st.dictionaries(members, st.floats(-0.9, 0.9), min_size=1, max_size=15), st.data())
    def test_value_sensitivity(self, entries, data):
        m = data.draw(st.sampled_from(sorted(entries)))
        delta = data.draw(st.floats(1.5e-10, 0.1)) * data.draw(st.sampled_from([-1, 1]))
        changed = dict(entries)
        changed[m] += delta
        assert ReputationState(0, 0, changed).hash != ReputationState(0, 0, entries).hash

    @given(st.dictionaries(members, rep_values, max_size=10), st.integers(0, 100), st.integers(0, 100))
    def test_state_round_trip(self, entries, origin, span):
        s = ReputationState(origin + span, origin, entries)
        back = ReputationState.from_dict(json.loads(s.to_json()))
        assert back == s and back.hash == s.hash


def test_member_ordering_is_code_point_order():
    ids = ["b", "B", "ä", "a", "aa", "á"]
    assert sorted(ids) == sorted(ids, key=lambda s: s.encode("utf-8"))


class TestEngineConfig:
    def test_defaults(self):
        c = EngineConfig()
        assert c.endorse_blend + c.transact_blend > 0
        assert EngineConfig.from_dict(c.to_dict()) == c

    @pytest.mark.parametrize("kwargs", [
        {"endorse_blend": 0, "transact_blend": 0},
        {"default_reputation": 1.5},
        {"decay_prev": 0},
        {"rater_weight_floor": -0.1},
        {"aspect_weights": {"q": 0.0}},
        {"aspect_weights": {"q": -1.0}},
        {"no_evidence": "forget"},
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            EngineConfig(**kwargs)

    def test_unknown_keys(self):
        with pytest.raises(ConfigError):
            EngineConfig.from_dict({"bogus": 1})
