"""
Reputation consensus among coordinated reputation agencies.

Each agency computes the reputation state for a cycle on its own and submits
the state's canonical hash. A :class:`ConsensusRound` turns the stream of
submissions into a verdict:

* a submission whose hash differs from an earlier one marks the round
  disputed and emits a ``dispute`` warning;
* a hash whose support reaches the quorum makes the round valid and closes it;
* once ``submissions_max`` submissions are in and some hash has at least
  ``quorum_min`` identical submissions, the best-supported hash wins and
  dissenters are blamed;
* past the deadline a pending round is broken and its state is discarded.

Support is a submission count, or the summed (floored) reputations of the
submitting agencies for weighted rounds. Ties resolve to the
lexicographically smallest hash everywhere.

Also here: proof-of-reputation proposer selection and the mining ledger that
rewards agencies whose state was accepted.
"""

from __future__ import annotations

import hashlib
import json
import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from .errors import (
    DeadlineNotReached,
    DuplicateSubmission,
    LateSubmission,
    NoEligibleProposer,
    RoundClosed,
    RoundNotValid,
    UnknownAgencyReputation,
    WrongRound,
)

log = logging.getLogger(__name__)

AgencyId = str

PENDING = "pending"
VALID = "valid"
BROKEN = "broken"

DISPUTE = "dispute"
BLAME = "blame"
BROKEN_WARNING = "broken"

PROPOSER_ALGORITHM = "sha256-u53-cumulative-v1"


@dataclass(frozen=True)
class StateSubmission:
    agency: AgencyId
    round: int
    state_hash: str
    received_at: int

    def to_dict(self) -> dict:
        return {"agency": self.agency, "round": self.round, "hash": self.state_hash, "at": self.received_at}


@dataclass(frozen=True)
class ConsensusWarning:
    kind: str
    round: int
    agencies: Tuple[AgencyId, ...] = ()
    detail: str = ""

    def to_dict(self) -> dict:
        return {"kind": self.kind, "round": self.round, "agencies": list(self.agencies), "detail": self.detail}


@dataclass
class ConsensusRound:
    """One consensus cycle. Mutated in place; one owner applies submissions serially."""

    round: int
    quorum_min: int
    submissions_max: int
    deadline: int
    quorum_mass: Optional[float] = None
    submissions: List[StateSubmission] = field(default_factory=list)
    support: Dict[str, float] = field(default_factory=dict)
    verdict: str = PENDING
    valid_hash: Optional[str] = None
    disputed: bool = False
    warnings: List[ConsensusWarning] = field(default_factory=list)
    events: List[dict] = field(default_factory=list)
    weighted: Optional[bool] = None

    def __post_init__(self):
        if self.quorum_min < 1:
            raise ValueError("quorum_min must be >= 1")
        if self.submissions_max < self.quorum_min:
            raise ValueError("submissions_max must be >= quorum_min")
        if self.quorum_mass is not None and not self.quorum_mass > 0:
            raise ValueError("quorum_mass must be > 0")

    # -- queries --------------------------------------------------------------

    @property
    def closed(self) -> bool:
        return self.verdict != PENDING

    @property
    def threshold(self) -> float:
        if self.weighted and self.quorum_mass is not None:
            return self.quorum_mass
        return float(self.quorum_min)

    def counts(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for s in self.submissions:
            out[s.state_hash] = out.get(s.state_hash, 0) + 1
        return out

    def leader(self) -> Optional[str]:
        """Best-supported hash so far, smallest hash on ties."""
        if not self.support:
            return None
        return min(self.support, key=lambda h: (-self.support[h], h))

    def dissenters(self, winner: str) -> Tuple[AgencyId, ...]:
        return tuple(s.agency for s in self.submissions if s.state_hash != winner)

    def agreeing(self, winner: str) -> Tuple[AgencyId, ...]:
        return tuple(s.agency for s in self.submissions if s.state_hash == winner)

    # -- transitions ----------------------------------------------------------

    def _warn(self, kind: str, agencies: Iterable[AgencyId], detail: str) -> None:
        w = ConsensusWarning(kind, self.round, tuple(agencies), detail)
        self.warnings.append(w)
        self.events.append({"event": "warning", **w.to_dict()})
        log.warning("round %d %s: %s %s", self.round, kind, detail, list(w.agencies))

    def _decide(self, verdict: str, winner: Optional[str]) -> None:
        self.verdict = verdict
        self.valid_hash = winner
        self.events.append({"event": "verdict", "round": self.round, "verdict": verdict, "hash": winner})

    def _accept(self, s: StateSubmission, mass: float) -> "ConsensusRound":
        if s.round != self.round:
            raise WrongRound(f"submission for round {s.round} sent to round {self.round}")
        if self.closed:
            raise RoundClosed(f"round {self.round} is {self.verdict}; no more states are accepted")
        if s.received_at > self.deadline:
            raise LateSubmission(f"submission at {s.received_at} after deadline {self.deadline}")
        if any(p.agency == s.agency for p in self.submissions):
            raise DuplicateSubmission(f"agency {s.agency!r} already submitted in round {self.round}")

        earlier = {p.state_hash for p in self.submissions}
        self.submissions.append(s)
        self.support[s.state_hash] = self.support.get(s.state_hash, 0.0) + mass
        self.events.append({"event": "submission", **s.to_dict(), "mass": mass})

        if earlier and (earlier - {s.state_hash}):
            self.disputed = True
            self._warn(DISPUTE, self.dissenters(self.leader()), "submitted states are not identical")

        # quorum of identical states
        for h in sorted(self.support):
            if self.support[h] >= self.threshold:
                self._decide(VALID, h)
                if self.disputed:
                    self._warn(BLAME, self.dissenters(h), "state differs from the accepted one")
                return self

        # maximum of submissions with at least quorum_min identical
        if len(self.submissions) >= self.submissions_max:
            if max(self.counts().values()) >= self.quorum_min:
                winner = self.leader()
                self._decide(VALID, winner)
                if self.disputed:
                    self._warn(BLAME, self.dissenters(winner), "state differs from the plurality state")
        return self

    def submit(self, s: StateSubmission) -> "ConsensusRound":
        if self.weighted:
            raise ValueError("weighted round: use submit_weighted")
        self.weighted = False
        return self._accept(s, 1.0)

    def submit_weighted(self, s: StateSubmission, agency_reputations: Mapping[AgencyId, float]) -> "ConsensusRound":
        if self.weighted is False:
            raise ValueError("unweighted round: use submit")
        if s.agency not in agency_reputations:
            raise UnknownAgencyReputation(f"no reputation known for agency {s.agency!r}")
        self.weighted = True
        return self._accept(s, max(float(agency_reputations[s.agency]), 0.0))

    def expire(self, now: int) -> "ConsensusRound":
        """Break a round still pending after its deadline."""
        if self.closed:
            return self
        if not now > self.deadline:
            raise DeadlineNotReached(f"now={now} is not past deadline {self.deadline}")
        self._decide(BROKEN, None)
        self._warn(BROKEN_WARNING, [s.agency for s in self.submissions],
                   "consensus broken; no reputation updated; entire agency system has to be inspected")
        return self

    def transcript(self) -> List[dict]:
        return list(self.events)


def submit(round: ConsensusRound, s: StateSubmission) -> ConsensusRound:
    return round.submit(s)


def submit_weighted(round: ConsensusRound, s: StateSubmission,
                    agency_reputations: Mapping[AgencyId, float]) -> ConsensusRound:
    return round.submit_weighted(s, agency_reputations)


def expire(round: ConsensusRound, now: int) -> ConsensusRound:
    return round.expire(now)


# -----------------------------------------------------------------------------
# Proof-of-Reputation
# -----------------------------------------------------------------------------

def seed_uniform(seed) -> float:
    """Uniform draw in [0, 1) from the top 53 bits of SHA-256(str(seed))."""
    digest = hashlib.sha256(str(seed).encode("utf-8")).digest()
    return (int.from_bytes(digest[:8], "big") >> 11) / float(1 << 53)


def select_proposer(reputations: Mapping[str, float], seed) -> str:
    """Pick a member with probability proportional to ``max(R, 0)``.

    Members are laid out in sorted id order on the cumulative distribution
    and ``seed_uniform(seed) * total`` picks the interval.
    """
    members = sorted(m for m, r in reputations.items() if r > 0)
    if not members:
        raise NoEligibleProposer("no member has positive reputation")
    cumulative = list(accumulate(float(reputations[m]) for m in members))
    x = seed_uniform(seed) * cumulative[-1]
    return members[min(bisect_right(cumulative, x), len(members) - 1)]


# -----------------------------------------------------------------------------
# Reputation mining
# -----------------------------------------------------------------------------

@dataclass
class MiningLedger:
    balances: Dict[AgencyId, float] = field(default_factory=dict)
    events: List[dict] = field(default_factory=list)

    def total(self) -> float:
        return sum(self.balances.values())


def credit_miners(round: ConsensusRound, ledger: MiningLedger, reward: float) -> MiningLedger:
    """Split ``reward`` equally among agencies that submitted the accepted state."""
    if round.verdict != VALID:
        raise RoundNotValid(f"round {round.round} is {round.verdict}")
    if reward < 0:
        raise ValueError("reward must be >= 0")
    winners = sorted(round.agreeing(round.valid_hash))
    share = reward / len(winners)
    balances = dict(ledger.balances)
    events = list(ledger.events)
    for a in winners:
        balances[a] = balances.get(a, 0.0) + share
        events.append({"event": "reward", "round": round.round, "agency": a, "amount": share})
    return MiningLedger(balances, events)


def transcript_jsonl(events: Iterable[dict]) -> str:
    return "".join(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in events)
