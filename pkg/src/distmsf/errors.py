"""Exception hierarchy shared by all modules."""


class MsfError(Exception):
    """Base class for every error raised by distmsf."""


# graph model / codec
class LocalOrderViolation(MsfError):
    pass


class UnsortedInput(MsfError):
    pass


class UnknownVertex(MsfError):
    pass


class TruncatedStream(MsfError):
    pass


class ContinuationOverflow(MsfError):
    pass


class FormatError(MsfError):
    """Bad magic, version or header in a binary edge-list file."""


# transport
class PeFailure(MsfError):
    def __init__(self, rank, cause):
        super().__init__(f"PE {rank} failed: {cause!r}")
        self.rank = rank
        self.cause = cause


class DeadlockDetected(MsfError):
    pass


class RecordSizeMismatch(MsfError):
    pass


class LengthMismatch(MsfError):
    pass


# primitives
class EmptyGlobalInput(MsfError):
    pass


# algorithms
class MissingGhostLabel(MsfError):
    pass


class UnlabeledVertex(MsfError):
    pass


class VertexCountOverThreshold(MsfError):
    pass


class UnknownEdgeId(MsfError):
    pass


class PivotDegenerate(MsfError):
    pass


class IndexOutOfRange(MsfError):
    pass


class CycleDetected(MsfError):
    pass


class InvalidSpec(MsfError):
    pass
