"""Exception hierarchy shared by every faceknn module."""


class FaceKNNError(Exception):
    """Base class for all errors raised by faceknn."""


class InvalidArgumentError(FaceKNNError, ValueError):
    pass


class NotFoundError(FaceKNNError, LookupError):
    pass


class EmptyDistributionError(FaceKNNError, ValueError):
    """An identity has fewer than two images, so no distance distribution exists."""


class FormatError(FaceKNNError, ValueError):
    """A file does not follow its declared layout (bad magic, truncation, unknown token)."""


class DataError(FaceKNNError, ValueError):
    """A file parses but its content violates an invariant (non-finite value, duplicates)."""


class UnsupportedModalityError(FaceKNNError, ValueError):
    pass


class TransportError(FaceKNNError, ConnectionError):
    pass


class RemoteError(FaceKNNError):
    def __init__(self, status, body):
        super().__init__(f"remote returned HTTP {status}: {body}")
        self.status = status
        self.body = body


class ProtocolError(FaceKNNError, ValueError):
    """A remote response does not satisfy the response schema or its ordering invariants."""
