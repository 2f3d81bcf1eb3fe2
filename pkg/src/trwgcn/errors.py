"""Exception types raised across the engine.

Each carries enough context to be reported by the CLI without a traceback.
"""


class TrwGcnError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""

    exit_code = 1


class DataError(TrwGcnError):
    exit_code = 3


class NetworkError(TrwGcnError):
    exit_code = 2


class UsageError(TrwGcnError):
    exit_code = 64


# graph_core
class EmptyEdgeList(DataError):
    pass


class BlockOutOfRange(DataError):
    pass


# ingest
class RpcUnreachable(NetworkError):
    pass


class MalformedResponse(NetworkError):
    pass


class FixtureNotFound(DataError, FileNotFoundError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValueOverflow(DataError):
    pass


# sampler
class EmptyGraph(DataError):
    pass


class InvalidStartNode(UsageError):
    pass


class InfeasibleSample(DataError):
    pass


# gcn
class ShapeMismatch(DataError):
    pass


class NonFiniteLoss(TrwGcnError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")


class EmptyCorpus(DataError):
    pass


# detectors
class DegenerateDistances(DataError):
    pass


class NoConvergence(TrwGcnError):
    pass


# scoring / spectral
class NodeSetMismatch(DataError):
    pass


class NotSymmetric(DataError):
    pass


class SubgraphTooSmall(DataError):
    pass


class TooFewSharedNodes(DataError):
    pass


class ConfigInvalid(UsageError):
    pass
