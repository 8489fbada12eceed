"""
Temporal scoping: which ratings feed each recalculation, and when it runs.

* ``lifetime``: every recalculation recounts all ratings since ``t_0``,
  recent ones weighted up by an exponential half-life. Backdated ratings are
  simply absorbed by the next recount.
* ``incremental``: every transaction (every distinct tick) closes a window.
* ``up_to_date``: fixed-width windows aligned to ``t_0``; empty windows still
  run so idle reputations decay.
* ``blocked_incremental``: windows of ``block_size`` consecutive records.

Ticks are atomic: records sharing a timestamp always land in the same window,
since a period ``(t_prev, t_n]`` must have ``t_n > t_prev``.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

from .core import EngineConfig, RatingRecord, ReputationState, Timestamp
from .engine import DifferentialResult, compute_period
from .errors import ConfigError, NonMonotonicTime, UnsortedInput


class ScopingMode(str, enum.Enum):
    LIFETIME = "lifetime"
    INCREMENTAL = "incremental"
    UP_TO_DATE = "up_to_date"
    BLOCKED_INCREMENTAL = "blocked_incremental"

    @classmethod
    def parse(cls, raw) -> "ScopingMode":
        if isinstance(raw, ScopingMode):
            return raw
        key = str(raw).strip().lower().replace("-", "_")
        aliases = {"uptodate": "up_to_date", "blocked": "blocked_incremental",
                   "blockedincremental": "blocked_incremental"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigError(f"unknown scoping mode {raw!r}") from None


@dataclass(frozen=True)
class ScopingPolicy:
    mode: ScopingMode = ScopingMode.UP_TO_DATE
    window: int = 1
    block_size: int = 1
    recency_half_life: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "mode", ScopingMode.parse(self.mode))
        if self.mode is ScopingMode.UP_TO_DATE and (not isinstance(self.window, int) or self.window < 1):
            raise ConfigError("up_to_date scoping needs an integer window >= 1")
        if self.mode is ScopingMode.BLOCKED_INCREMENTAL and (
            not isinstance(self.block_size, int) or self.block_size < 1
        ):
            raise ConfigError("blocked_incremental scoping needs an integer block_size >= 1")
        if self.mode is ScopingMode.LIFETIME and not self.recency_half_life > 0:
            raise ConfigError("lifetime scoping needs recency_half_life > 0")

    def to_dict(self) -> dict:
        hl = self.recency_half_life
        return {
            "mode": self.mode.value,
            "window": self.window,
            "block_size": self.block_size,
            "half_life": None if math.isinf(hl) else hl,
        }

    @classmethod
    def from_dict(cls, doc) -> "ScopingPolicy":
        doc = dict(doc)
        hl = doc.pop("half_life", doc.pop("recency_half_life", None))
        unknown = set(doc) - {"mode", "window", "block_size"}
        if unknown:
            raise ConfigError(f"unknown scoping keys: {sorted(unknown)}")
        return cls(
            mode=doc.get("mode", ScopingMode.UP_TO_DATE),
            window=doc.get("window", 1),
            block_size=doc.get("block_size", 1),
            recency_half_life=math.inf if hl is None else float(hl),
        )


Window = Tuple[Timestamp, List[RatingRecord]]


def check_sorted(ratings: Sequence[RatingRecord]) -> None:
    for prev, cur in zip(ratings, ratings[1:]):
        if cur.order_key() < prev.order_key():
            raise UnsortedInput(
                f"record {cur.to_dict()} precedes {prev.to_dict()} in (time, from, to, kind) order"
            )


def _tick_groups(ratings: Sequence[RatingRecord]) -> List[List[RatingRecord]]:
    groups: List[List[RatingRecord]] = []
    for r in ratings:
        if groups and groups[-1][0].time == r.time:
            groups[-1].append(r)
        else:
            groups.append([r])
    return groups


def partition(
    ratings: Sequence[RatingRecord],
    policy: ScopingPolicy,
    origin: Timestamp = 0,
    until: Optional[Timestamp] = None,
) -> List[Window]:
    """Split a sorted record stream into ``(window_end, records)`` pairs.

    ``until`` extends up_to_date scoping with trailing empty windows. For
    lifetime scoping each window holds every record up to its end.
    """
    ratings = list(ratings)
    check_sorted(ratings)
    if ratings and ratings[0].time <= origin:
        raise NonMonotonicTime(f"records must come after origin t_0={origin}, first is at {ratings[0].time}")
    mode = policy.mode

    if mode is ScopingMode.UP_TO_DATE:
        w = policy.window
        last = max([r.time for r in ratings] + ([until] if until is not None else []), default=origin)
        n_windows = math.ceil((last - origin) / w) if last > origin else 0
        ends = [origin + (m + 1) * w for m in range(n_windows)]
        times = [r.time for r in ratings]
        out: List[Window] = []
        lo = 0
        for end in ends:
            hi = bisect.bisect_right(times, end)
            out.append((end, ratings[lo:hi]))
            lo = hi
        return out

    groups = _tick_groups(ratings)
    if mode is ScopingMode.INCREMENTAL:
        return [(g[0].time, g) for g in groups]

    if mode is ScopingMode.LIFETIME:
        out, seen = [], []
        for g in groups:
            seen.extend(g)
            out.append((g[0].time, list(seen)))
        return out

    # blocked incremental: close a block once it holds block_size records
    out, block = [], []
    for g in groups:
        block.extend(g)
        if len(block) >= policy.block_size:
            out.append((block[-1].time, block))
            block = []
    if block:
        out.append((block[-1].time, block))
    return out


def recency_factor(t_n: Timestamp, half_life: float):
    if math.isinf(half_life):
        return None
    return lambda r: 2.0 ** (-(t_n - r.time) / half_life)


def advance(
    state: ReputationState,
    genesis: ReputationState,
    window: Window,
    policy: ScopingPolicy,
    config: EngineConfig,
    fine_grained: bool = False,
) -> Tuple[ReputationState, DifferentialResult]:
    """Apply one window to ``state``; lifetime windows recount from ``genesis``."""
    end, records = window
    if policy.mode is ScopingMode.LIFETIME:
        return compute_period(records, genesis, end, config,
                              weight_factor=recency_factor(end, policy.recency_half_life),
                              fine_grained=fine_grained)
    return compute_period(records, state, end, config, fine_grained=fine_grained)


@dataclass
class ScheduleResult:
    final: ReputationState
    states: List[ReputationState] = field(default_factory=list)
    results: List[DifferentialResult] = field(default_factory=list)
    windows: List[Window] = field(default_factory=list)


def run_schedule(
    ratings: Sequence[RatingRecord],
    policy: ScopingPolicy,
    config: EngineConfig,
    genesis: Optional[ReputationState] = None,
    until: Optional[Timestamp] = None,
) -> ScheduleResult:
    """Fold :func:`compute_period` over every window of ``ratings``.

    Lifetime scoping does one full recount at the last window end.
    """
    genesis = genesis or ReputationState.genesis(0, precision=config.hash_precision)
    windows = partition(ratings, policy, origin=genesis.origin, until=until)
    if policy.mode is ScopingMode.LIFETIME:
        windows = windows[-1:]
        if until is not None and windows and until > windows[0][0]:
            windows = [(until, windows[0][1])]
    state = genesis
    out = ScheduleResult(final=genesis, windows=windows)
    for window in windows:
        state, res = advance(state, genesis, window, policy, config)
        out.states.append(state)
        out.results.append(res)
    out.final = state
    return out


class LifetimeRecalculator:
    """Keeps the whole rating history so backdated ratings can be inserted."""

    def __init__(self, policy: ScopingPolicy, config: EngineConfig, genesis: Optional[ReputationState] = None):
        if policy.mode is not ScopingMode.LIFETIME:
            raise ConfigError("LifetimeRecalculator needs lifetime scoping")
        self.policy = policy
        self.config = config
        self.genesis = genesis or ReputationState.genesis(0, precision=config.hash_precision)
        self._records: List[RatingRecord] = []

    def add(self, record: RatingRecord) -> None:
        if record.time <= self.genesis.origin:
            raise NonMonotonicTime(f"record at t={record.time} not after origin {self.genesis.origin}")
        bisect.insort(self._records, record, key=RatingRecord.sort_key)

    @property
    def records(self) -> List[RatingRecord]:
        return list(self._records)

    def recompute(self, t_n: Optional[Timestamp] = None) -> ReputationState:
        if not self._records:
            return self.genesis
        end = self._records[-1].time if t_n is None else t_n
        included = [r for r in self._records if r.time <= end]
        state, _ = advance(self.genesis, self.genesis, (end, included), self.policy, self.config)
        return state
