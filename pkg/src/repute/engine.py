"""
Incremental reputation model.

One recalculation period turns the ratings observed in ``(t_prev, t_n]`` into
new reputations in five steps:

1. finance amounts are log-scaled against the largest amount in the batch;
2. endorsing (dS) and transactional (dF) differentials are computed as
   weighted means of rating values, each rating weighted by its stake or
   financial value times the rater's floored prior reputation, then blended
   across aspects with the H_k weights;
3. dS and dF are blended into dP (optionally log-compressed);
4. dP is divided by its largest magnitude, giving P in [-1, 1];
5. P is blended with the prior reputation in proportion to the time spans
   ``t_prev - t_0`` and ``t_n - t_prev``.

All functions are pure. Cells whose weighted-mean denominator is zero are
skipped and reported in :class:`SkippedCell` records, never filled in.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .core import EngineConfig, MemberId, RatingKind, RatingRecord, ReputationState, Timestamp
from .errors import EmptyBatch, NonMonotonicTime, NonPositiveAmount

LOG10_2 = math.log10(2.0)
_LN10 = math.log(10.0)


@dataclass(frozen=True)
class SkippedCell:
    """A (member, slice) cell with ratings but a zero weight denominator."""

    component: str  # "endorse", "transact", "blend", "fine:ic", ...
    key: tuple
    reason: str = "zero denominator"


@dataclass
class DifferentialResult:
    per_member: Dict[MemberId, float] = field(default_factory=dict)
    endorse: Dict[MemberId, float] = field(default_factory=dict)
    transact: Dict[MemberId, float] = field(default_factory=dict)
    normalized: Dict[MemberId, float] = field(default_factory=dict)
    fine_grained: Optional[Dict[str, Dict[tuple, float]]] = None
    skipped: List[SkippedCell] = field(default_factory=list)


# -----------------------------------------------------------------------------
# Building blocks
# -----------------------------------------------------------------------------

def normalize_financial(values: Sequence[float]) -> List[float]:
    """Scale amounts to ``log10(1 + x) / max(log10(1 + x))``; the largest maps to 1."""
    if len(values) == 0:
        raise EmptyBatch("cannot normalize an empty batch")
    logs = []
    for v in values:
        if not v > 0:
            raise NonPositiveAmount(f"transaction amounts must be > 0, got {v}")
        logs.append(math.log1p(v) / _LN10)
    top = max(logs)
    return [x / top for x in logs]


def rater_weight(member: MemberId, prior: ReputationState, config: EngineConfig) -> float:
    r = prior.get(member, config.default_reputation)
    return max(r, config.rater_weight_floor)


def _weighted_means(
    cells: Mapping[tuple, List[Tuple[float, float]]], component: str, skipped: List[SkippedCell]
) -> Dict[tuple, float]:
    out = {}
    for key in sorted(cells):
        num = den = 0.0
        for value, w in cells[key]:
            num += value * w
            den += w
        if den > 0:
            out[key] = num / den
        else:
            skipped.append(SkippedCell(component, key))
    return out


def _blend_aspects(
    means: Mapping[tuple, float], config: EngineConfig, component: str, skipped: List[SkippedCell]
) -> Dict[tuple, float]:
    """Collapse the trailing aspect element of each key with the H_k weights."""
    grouped: Dict[tuple, List[Tuple[str, float]]] = defaultdict(list)
    for key, m in means.items():
        grouped[key[:-1]].append((key[-1], m))
    out = {}
    for head in sorted(grouped):
        num = den = 0.0
        for aspect, m in grouped[head]:
            h = config.aspect_weight(aspect)
            num += h * m
            den += h
        if den > 0:
            out[head] = num / den
        else:
            skipped.append(SkippedCell(component, head, "all aspect weights zero"))
    return out


WeightFactor = Callable[[RatingRecord], float]


def _cells(
    ratings: Iterable[RatingRecord],
    prior: ReputationState,
    config: EngineConfig,
    key: Callable[[RatingRecord], tuple],
    weight_factor: Optional[WeightFactor],
) -> Dict[tuple, List[Tuple[float, float]]]:
    cells: Dict[tuple, List[Tuple[float, float]]] = defaultdict(list)
    for r in ratings:
        w = r.weight * rater_weight(r.rater, prior, config)
        if weight_factor is not None:
            w *= weight_factor(r)
        cells[key(r)].append((r.value, w))
    # a fixed order of terms inside each cell keeps sums independent of input order
    return {k: sorted(v) for k, v in cells.items()}


def _latest_endorsements(ratings: Iterable[RatingRecord]) -> List[RatingRecord]:
    """Endorsements are standing ratings: only the latest per (rater, ratee, aspect) counts."""
    latest: Dict[tuple, RatingRecord] = {}
    for r in sorted(ratings, key=RatingRecord.sort_key):
        latest[(r.rater, r.ratee, r.aspect_key)] = r
    return list(latest.values())


def _check_kinds(ratings: Sequence[RatingRecord], allowed: Tuple[RatingKind, ...], op: str):
    for r in ratings:
        if r.kind not in allowed:
            raise ValueError(f"{op} got a {r.kind.value} record")


# -----------------------------------------------------------------------------
# Differentials
# -----------------------------------------------------------------------------

def differential_endorsing(
    ratings: Sequence[RatingRecord],
    prior: ReputationState,
    config: EngineConfig,
    skipped: Optional[List[SkippedCell]] = None,
    weight_factor: Optional[WeightFactor] = None,
) -> Dict[MemberId, float]:
    """dS per rated member: H_k-blend of per-aspect stake- and rater-weighted means."""
    _check_kinds(ratings, (RatingKind.ENDORSE,), "differential_endorsing")
    skipped = [] if skipped is None else skipped
    cells = _cells(_latest_endorsements(ratings), prior, config,
                   lambda r: (r.ratee, r.aspect_key), weight_factor)
    per_aspect = _weighted_means(cells, "endorse", skipped)
    return {k[0]: v for k, v in _blend_aspects(per_aspect, config, "endorse", skipped).items()}


def differential_transactional(
    ratings: Sequence[RatingRecord],
    prior: ReputationState,
    config: EngineConfig,
    skipped: Optional[List[SkippedCell]] = None,
    weight_factor: Optional[WeightFactor] = None,
) -> Dict[MemberId, float]:
    """dF per rated member from vote and finance records.

    Finance amounts are expected to be normalized already (see
    :func:`compute_period`). Categories and events are pooled; aspects are
    blended with H_k.
    """
    _check_kinds(ratings, (RatingKind.VOTE, RatingKind.FINANCE), "differential_transactional")
    skipped = [] if skipped is None else skipped
    cells = _cells(ratings, prior, config, lambda r: (r.ratee, r.aspect_key), weight_factor)
    per_aspect = _weighted_means(cells, "transact", skipped)
    return {k[0]: v for k, v in _blend_aspects(per_aspect, config, "transact", skipped).items()}


def differential_fine_grained(
    ratings: Sequence[RatingRecord],
    prior: ReputationState,
    config: EngineConfig,
    skipped: Optional[List[SkippedCell]] = None,
    weight_factor: Optional[WeightFactor] = None,
) -> Dict[str, Dict[tuple, float]]:
    """Transactional differentials restricted to key slices.

    Returns ``{"ic": {(i, c): ..}, "ik": {(i, k): ..}, "ike": {(i, k, e): ..}}``.
    ``ic`` blends aspects with H_k inside one category, ``ik`` pools every
    category for one aspect, ``ike`` holds aspect and event fixed.
    """
    _check_kinds(ratings, (RatingKind.VOTE, RatingKind.FINANCE), "differential_fine_grained")
    skipped = [] if skipped is None else skipped

    ick = _weighted_means(
        _cells(ratings, prior, config, lambda r: (r.ratee, r.category_key, r.aspect_key), weight_factor),
        "fine:ick", skipped,
    )
    ic = _blend_aspects(ick, config, "fine:ic", skipped)
    ik = _weighted_means(
        _cells(ratings, prior, config, lambda r: (r.ratee, r.aspect_key), weight_factor),
        "fine:ik", skipped,
    )
    ike = _weighted_means(
        _cells(ratings, prior, config, lambda r: (r.ratee, r.aspect_key, r.event_key), weight_factor),
        "fine:ike", skipped,
    )
    return {"ic": ic, "ik": ik, "ike": ike}


def blend_differential(
    d_endorse: Mapping[MemberId, float],
    d_transact: Mapping[MemberId, float],
    config: EngineConfig,
    skipped: Optional[List[SkippedCell]] = None,
) -> Dict[MemberId, float]:
    """dP = (S*dS + F*dF) / (S + F), counting only the components a member has."""
    s, f = config.endorse_blend, config.transact_blend
    out = {}
    for m in sorted(set(d_endorse) | set(d_transact)):
        num = den = 0.0
        if m in d_endorse:
            num += s * d_endorse[m]
            den += s
        if m in d_transact:
            num += f * d_transact[m]
            den += f
        if den > 0:
            out[m] = num / den
        elif skipped is not None:
            skipped.append(SkippedCell("blend", (m,), "blend factor of present component is zero"))
    return out


def normalize_differential(d: Mapping[MemberId, float]) -> Dict[MemberId, float]:
    """Divide by the largest absolute value; an all-zero map stays all zero."""
    top = max((abs(v) for v in d.values()), default=0.0)
    if top == 0.0:
        return {m: 0.0 for m in d}
    out = {m: v / top for m, v in d.items()}
    # exact +-1 for the extreme members
    for m, v in d.items():
        if abs(v) == top:
            out[m] = math.copysign(1.0, v)
    return out


def log_differential(d: Mapping[MemberId, float]) -> Dict[MemberId, float]:
    """sign(x) * log10(1 + |x|), applied per member."""
    return {m: math.copysign(math.log1p(abs(v)) / _LN10, v) if v != 0 else 0.0 for m, v in d.items()}


def update_reputation(
    prior: ReputationState,
    p: Mapping[MemberId, float],
    t_n: Timestamp,
    config: EngineConfig,
) -> ReputationState:
    """Blend prior reputations with the normalized differential ``p``.

    R(t_n) = (a*R(t_prev) + b*P) / (a + b) with a = decay_prev*(t_prev - t_0)
    and b = decay_new*(t_n - t_prev). Newcomers start from the default
    reputation; members without evidence follow ``config.no_evidence``.
    """
    t_prev, t0 = prior.as_of, prior.origin
    if not t_n > t_prev:
        raise NonMonotonicTime(f"t_n={t_n} must be after prior.as_of={t_prev}")
    a = config.decay_prev * (t_prev - t0)
    b = config.decay_new * (t_n - t_prev)
    rd = config.default_reputation

    entries = {}
    for m in sorted(set(prior.entries) | set(p)):
        r_prev = prior.get(m, rd)
        if m in p:
            target = p[m]
        elif config.no_evidence == "decay":
            target = rd
        else:
            target = r_prev
        r = (a * r_prev + b * target) / (a + b)
        entries[m] = min(1.0, max(-1.0, r))
    return ReputationState(as_of=t_n, origin=t0, entries=entries, precision=config.hash_precision)


# -----------------------------------------------------------------------------
# Orchestration
# -----------------------------------------------------------------------------

def normalize_finance_records(ratings: Sequence[RatingRecord]) -> List[RatingRecord]:
    """Replace finance amounts with their batch-normalized log weights."""
    finance = sorted((r for r in ratings if r.kind is RatingKind.FINANCE), key=RatingRecord.sort_key)
    if not finance:
        return list(ratings)
    scaled = dict(zip(map(id, finance), normalize_financial([r.weight for r in finance])))
    return [replace(r, weight=scaled[id(r)]) if id(r) in scaled else r for r in ratings]


def compute_period(
    ratings: Sequence[RatingRecord],
    prior: ReputationState,
    t_n: Timestamp,
    config: EngineConfig,
    weight_factor: Optional[WeightFactor] = None,
    fine_grained: bool = False,
) -> Tuple[ReputationState, DifferentialResult]:
    """Run one full recalculation period over ``ratings`` in ``(prior.as_of, t_n]``.

    ``weight_factor`` multiplies each record's weight after finance
    normalization; lifetime scoping uses it for recency weighting.
    """
    for r in ratings:
        if not prior.as_of < r.time <= t_n:
            raise NonMonotonicTime(
                f"record at t={r.time} outside period ({prior.as_of}, {t_n}]"
            )
    ratings = sorted(ratings, key=RatingRecord.sort_key)
    if config.financial_log_normalize:
        ratings = normalize_finance_records(ratings)

    endorse = [r for r in ratings if r.kind is RatingKind.ENDORSE]
    transact = [r for r in ratings if r.kind is not RatingKind.ENDORSE]

    result = DifferentialResult()
    result.endorse = differential_endorsing(endorse, prior, config, result.skipped, weight_factor)
    result.transact = differential_transactional(transact, prior, config, result.skipped, weight_factor)
    result.per_member = blend_differential(result.endorse, result.transact, config, result.skipped)
    if fine_grained:
        result.fine_grained = differential_fine_grained(transact, prior, config, result.skipped, weight_factor)

    dp = log_differential(result.per_member) if config.use_log_differential else result.per_member
    result.normalized = normalize_differential(dp)
    state = update_reputation(prior, result.normalized, t_n, config)
    return state, result
