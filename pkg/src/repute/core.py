"""
Domain vocabulary: rating records, reputation states and engine configuration.

Nothing here computes reputations. The module validates raw input, holds the
immutable value types every other module passes around, and defines the
canonical serialization whose SHA-256 digest agencies compare during
consensus.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Any, Mapping, Optional

from .errors import (
    ConfigError,
    InvalidField,
    MissingField,
    NegativeWeight,
    NonFiniteValue,
    NonPositiveAmount,
    SelfRating,
    ValueOutOfRange,
)

# Aspect/category/event slot used when a record leaves the field empty.
DEFAULT_KEY = "default"

CLAMP_TOLERANCE = 1e-9
DEFAULT_HASH_PRECISION = 10

MemberId = str
Timestamp = int


class RatingKind(str, enum.Enum):
    ENDORSE = "endorse"
    VOTE = "vote"
    FINANCE = "finance"

    @classmethod
    def parse(cls, raw: Any) -> "RatingKind":
        if isinstance(raw, RatingKind):
            return raw
        if not isinstance(raw, str):
            raise InvalidField(f"kind must be a string, got {raw!r}")
        try:
            return cls(raw.strip().lower())
        except ValueError:
            raise InvalidField(f"unknown rating kind {raw!r}") from None

    @property
    def transactional(self) -> bool:
        return self is not RatingKind.ENDORSE


# Canonical tie-break order for records sharing a timestamp.
_KIND_ORDER = {RatingKind.ENDORSE: 0, RatingKind.VOTE: 1, RatingKind.FINANCE: 2}


@dataclass(frozen=True)
class RatingRecord:
    """One endorsement or transactional rating from ``rater`` to ``ratee``.

    ``weight`` is the stake backing an endorsement, or the financial value
    behind a vote. For finance records it is the raw payment amount and
    ``value`` is always +1.
    """

    kind: RatingKind
    rater: MemberId
    ratee: MemberId
    time: Timestamp
    value: float
    weight: float
    aspect: Optional[str] = None
    category: Optional[str] = None
    event: Optional[str] = None

    @property
    def aspect_key(self) -> str:
        return self.aspect or DEFAULT_KEY

    @property
    def category_key(self) -> str:
        return self.category or DEFAULT_KEY

    @property
    def event_key(self) -> str:
        return self.event or DEFAULT_KEY

    def order_key(self) -> tuple:
        """Stream ordering: (time, from, to, kind)."""
        return (self.time, self.rater, self.ratee, _KIND_ORDER[self.kind])

    def sort_key(self) -> tuple:
        """Total order used wherever record order must not leak into results."""
        return self.order_key() + (
            self.value,
            self.weight,
            self.aspect or "",
            self.category or "",
            self.event or "",
        )

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind.value,
            "from": self.rater,
            "to": self.ratee,
            "time": self.time,
            "value": self.value,
            "weight": self.weight,
        }
        for key in ("aspect", "category", "event"):
            v = getattr(self, key)
            if v is not None:
                d[key] = v
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "RatingRecord":
        return validate_record(raw)


def _require(raw: Mapping[str, Any], key: str) -> Any:
    if key not in raw or raw[key] is None or raw[key] == "":
        raise MissingField(f"missing field {key!r}")
    return raw[key]


def _as_float(name: str, raw: Any) -> float:
    if isinstance(raw, bool):
        raise InvalidField(f"{name} must be a number, got {raw!r}")
    try:
        x = float(raw)
    except (TypeError, ValueError):
        raise InvalidField(f"{name} must be a number, got {raw!r}") from None
    if not math.isfinite(x):
        raise NonFiniteValue(f"{name} is not finite: {raw!r}")
    return x


def _as_member(name: str, raw: Any) -> MemberId:
    if not isinstance(raw, str):
        raise InvalidField(f"{name} must be a string member id, got {raw!r}")
    if not raw:
        raise MissingField(f"missing field {name!r}")
    return raw


def _as_time(raw: Any) -> Timestamp:
    if isinstance(raw, bool):
        raise InvalidField(f"time must be an integer, got {raw!r}")
    if isinstance(raw, float):
        if not raw.is_integer():
            raise InvalidField(f"time must be an integer, got {raw!r}")
        raw = int(raw)
    if isinstance(raw, str):
        try:
            raw = int(raw)
        except ValueError:
            raise InvalidField(f"time must be an integer, got {raw!r}") from None
    if not isinstance(raw, int):
        raise InvalidField(f"time must be an integer, got {raw!r}")
    if raw < 0:
        raise InvalidField(f"time must be non-negative, got {raw}")
    return raw


def _optional_token(raw: Mapping[str, Any], key: str) -> Optional[str]:
    v = raw.get(key)
    if v is None or v == "":
        return None
    if not isinstance(v, str):
        raise InvalidField(f"{key} must be a string, got {v!r}")
    return v


def validate_record(raw: Mapping[str, Any]) -> RatingRecord:
    """Build a :class:`RatingRecord` from a parsed mapping, enforcing invariants.

    Values within ``CLAMP_TOLERANCE`` of ±1 are clamped; anything further out
    is rejected. Finance records get ``value = 1.0`` and need a positive amount.
    """
    kind = RatingKind.parse(_require(raw, "kind"))
    rater = _as_member("from", _require(raw, "from"))
    ratee = _as_member("to", _require(raw, "to"))
    if rater == ratee:
        raise SelfRating(f"member {rater!r} cannot rate itself")
    time = _as_time(_require(raw, "time"))
    weight = _as_float("weight", _require(raw, "weight"))
    if weight < 0:
        raise NegativeWeight(f"weight must be >= 0, got {weight}")

    if kind is RatingKind.FINANCE:
        if weight <= 0:
            raise NonPositiveAmount(f"finance amount must be > 0, got {weight}")
        raw_value = raw.get("value")
        value = 1.0 if raw_value is None else _as_float("value", raw_value)
        if abs(value - 1.0) > CLAMP_TOLERANCE:
            raise ValueOutOfRange(f"finance records carry value +1, got {value}")
        value = 1.0
    else:
        value = _as_float("value", _require(raw, "value"))
        if value > 1.0:
            if value - 1.0 > CLAMP_TOLERANCE:
                raise ValueOutOfRange(f"value {value} outside [-1, 1]")
            value = 1.0
        elif value < -1.0:
            if -1.0 - value > CLAMP_TOLERANCE:
                raise ValueOutOfRange(f"value {value} outside [-1, 1]")
            value = -1.0

    return RatingRecord(
        kind=kind,
        rater=rater,
        ratee=ratee,
        time=time,
        value=value,
        weight=weight,
        aspect=_optional_token(raw, "aspect"),
        category=_optional_token(raw, "category"),
        event=_optional_token(raw, "event"),
    )


# -----------------------------------------------------------------------------
# Reputation state
# -----------------------------------------------------------------------------

def _format_value(value: float, precision: int) -> str:
    s = f"{value:.{precision}f}"
    # -0.000... and 0.000... are the same state
    if s.startswith("-") and not s.strip("-0."):
        s = s[1:]
    return s


def canonical_bytes(
    as_of: int, origin: int, entries: Mapping[str, float], precision: int = DEFAULT_HASH_PRECISION
) -> bytes:
    """Canonical form: compact UTF-8 JSON ``[as_of, origin, [[id, "fixed"], ...]]``.

    Members sorted by code point (identical to UTF-8 byte order), values as
    fixed-point strings with ``precision`` decimals.
    """
    rows = []
    for member in sorted(entries):
        v = entries[member]
        if not math.isfinite(v):
            raise NonFiniteValue(f"reputation of {member!r} is not finite: {v!r}")
        rows.append([member, _format_value(v, precision)])
    doc = [as_of, origin, rows]
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass(frozen=True)
class ReputationState:
    """Reputation of every known member as of ``as_of``, accumulated since ``origin``."""

    as_of: Timestamp
    origin: Timestamp
    entries: Mapping[MemberId, float] = field(default_factory=dict)
    precision: int = DEFAULT_HASH_PRECISION

    def __post_init__(self):
        if self.origin < 0 or self.as_of < self.origin:
            raise ValueError(f"need 0 <= origin <= as_of, got origin={self.origin} as_of={self.as_of}")
        entries = {}
        for member, v in self.entries.items():
            if not member:
                raise InvalidField("member ids must be nonempty")
            v = float(v)
            if not math.isfinite(v):
                raise NonFiniteValue(f"reputation of {member!r} is not finite: {v!r}")
            if not -1.0 <= v <= 1.0:
                raise ValueOutOfRange(f"reputation of {member!r} outside [-1, 1]: {v}")
            entries[member] = v
        object.__setattr__(self, "entries", MappingProxyType(entries))

    @classmethod
    def genesis(cls, origin: Timestamp = 0, entries: Optional[Mapping[str, float]] = None,
                precision: int = DEFAULT_HASH_PRECISION) -> "ReputationState":
        return cls(as_of=origin, origin=origin, entries=dict(entries or {}), precision=precision)

    def get(self, member: MemberId, default: float) -> float:
        return self.entries.get(member, default)

    def __contains__(self, member: object) -> bool:
        return member in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    @cached_property
    def hash(self) -> str:
        return canonical_hash(self)

    def to_dict(self) -> dict:
        return {
            "as_of": self.as_of,
            "origin": self.origin,
            "entries": {m: self.entries[m] for m in sorted(self.entries)},
            "hash": self.hash,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], precision: int = DEFAULT_HASH_PRECISION) -> "ReputationState":
        try:
            entries = {str(k): _as_float("entry", v) for k, v in doc["entries"].items()}
            return cls(
                as_of=_as_time(doc["as_of"]),
                origin=_as_time(doc["origin"]),
                entries=entries,
                precision=precision,
            )
        except KeyError as e:
            raise MissingField(f"snapshot missing field {e.args[0]!r}") from None

    def __eq__(self, other):
        if not isinstance(other, ReputationState):
            return NotImplemented
        return (
            self.as_of == other.as_of
            and self.origin == other.origin
            and dict(self.entries) == dict(other.entries)
        )

    def __hash__(self):
        return hash(self.hash)


def canonical_hash(state: ReputationState, precision: Optional[int] = None) -> str:
    """Hex SHA-256 of the canonical serialization of ``state``."""
    p = state.precision if precision is None else precision
    return hashlib.sha256(canonical_bytes(state.as_of, state.origin, state.entries, p)).hexdigest()


# -----------------------------------------------------------------------------
# Configuration
# -----------------------------------------------------------------------------

NO_EVIDENCE_MODES = ("decay", "hold")


@dataclass(frozen=True)
class EngineConfig:
    """Free parameters of the reputation model.

    ``endorse_blend``/``transact_blend`` weigh endorsing against transactional
    evidence; ``decay_prev``/``decay_new`` scale the old and new time spans
    in the update blend (1/1 gives the plain time-weighted average).
    ``no_evidence`` picks what happens to members nobody rated in a window:
    ``"decay"`` pulls them toward ``default_reputation``, ``"hold"`` keeps them.
    """

    default_reputation: float = 0.0
    aspect_weights: Mapping[str, float] = field(default_factory=dict)
    endorse_blend: float = 1.0
    transact_blend: float = 1.0
    use_log_differential: bool = False
    decay_prev: float = 1.0
    decay_new: float = 1.0
    rater_weight_floor: float = 0.0
    financial_log_normalize: bool = True
    hash_precision: int = DEFAULT_HASH_PRECISION
    no_evidence: str = "decay"

    def __post_init__(self):
        object.__setattr__(self, "aspect_weights", MappingProxyType(dict(self.aspect_weights)))
        if not 0.0 <= self.default_reputation <= 1.0:
            raise ConfigError("default_reputation must lie in [0, 1]")
        if self.endorse_blend < 0 or self.transact_blend < 0:
            raise ConfigError("blend factors must be >= 0")
        if self.endorse_blend + self.transact_blend <= 0:
            raise ConfigError("endorse_blend + transact_blend must be > 0")
        if self.decay_prev <= 0 or self.decay_new <= 0:
            raise ConfigError("decay factors must be > 0")
        if self.rater_weight_floor < 0:
            raise ConfigError("rater_weight_floor must be >= 0")
        if any(w < 0 for w in self.aspect_weights.values()):
            raise ConfigError("aspect weights must be >= 0")
        if self.aspect_weights and not any(w > 0 for w in self.aspect_weights.values()):
            raise ConfigError("at least one aspect weight must be > 0")
        if not isinstance(self.hash_precision, int) or not 0 <= self.hash_precision <= 17:
            raise ConfigError("hash_precision must be an integer in [0, 17]")
        if self.no_evidence not in NO_EVIDENCE_MODES:
            raise ConfigError(f"no_evidence must be one of {NO_EVIDENCE_MODES}")

    def aspect_weight(self, aspect: str) -> float:
        return self.aspect_weights.get(aspect, 1.0)

    def to_dict(self) -> dict:
        return {
            "default_reputation": self.default_reputation,
            "aspect_weights": dict(sorted(self.aspect_weights.items())),
            "endorse_blend": self.endorse_blend,
            "transact_blend": self.transact_blend,
            "use_log_differential": self.use_log_differential,
            "decay_prev": self.decay_prev,
            "decay_new": self.decay_new,
            "rater_weight_floor": self.rater_weight_floor,
            "financial_log_normalize": self.financial_log_normalize,
            "hash_precision": self.hash_precision,
            "no_evidence": self.no_evidence,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "EngineConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown engine config keys: {sorted(unknown)}")
        return cls(**doc)
