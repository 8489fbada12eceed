"""Exception hierarchy shared by every repute module."""


class ReputeError(Exception):
    """Base class for all repute errors."""


# -- records / states ---------------------------------------------------------

class RecordError(ReputeError, ValueError):
    """A candidate rating record violates an invariant."""


class SelfRating(RecordError):
    pass


class ValueOutOfRange(RecordError):
    pass


class NegativeWeight(RecordError):
    pass


class MissingField(RecordError):
    pass


class InvalidField(RecordError):
    pass


class NonFiniteValue(ReputeError, ValueError):
    pass


class ConfigError(ReputeError, ValueError):
    pass


# -- engine -------------------------------------------------------------------

class EmptyBatch(ReputeError, ValueError):
    pass


class NonPositiveAmount(ReputeError, ValueError):
    pass


class NonMonotonicTime(ReputeError, ValueError):
    pass


# -- scoping ------------------------------------------------------------------

class UnsortedInput(ReputeError, ValueError):
    pass


# -- consensus ----------------------------------------------------------------

class ConsensusError(ReputeError):
    pass


class DuplicateSubmission(ConsensusError):
    pass


class RoundClosed(ConsensusError):
    pass


class LateSubmission(ConsensusError):
    pass


class WrongRound(ConsensusError):
    pass


class DeadlineNotReached(ConsensusError):
    pass


class UnknownAgencyReputation(ConsensusError):
    pass


class NoEligibleProposer(ConsensusError):
    pass


class RoundNotValid(ConsensusError):
    pass


# -- storage ------------------------------------------------------------------

class StorageError(ReputeError):
    pass


class UnreadableInput(StorageError):
    pass


class SnapshotConflict(StorageError):
    pass


class SnapshotNotFound(StorageError):
    pass


class HashMismatch(StorageError):
    pass


# -- simulation ---------------------------------------------------------------

class InvalidSpec(ReputeError, ValueError):
    pass
