"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class RoadIriError(Exception):
    """Base class for every error raised by this package."""


# ingest
class MalformedLine(RoadIriError):
    def __init__(self, line_no: int, reason: str = "malformed row"):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class TimestampRegression(MalformedLine):
    """A row whose timestamp is earlier than its predecessor."""


class NoGpsFix(RoadIriError):
    pass


# spectral
class EmptySignal(RoadIriError):
    pass


class NonpositiveRate(RoadIriError):
    pass


class TooShort(RoadIriError):
    pass


# quarter car
class ProfileTooShort(RoadIriError):
    pass


# trees
class DegenerateData(RoadIriError):
    pass


class ModelEmpty(RoadIriError):
    pass


class SchemaVersionMismatch(RoadIriError):
    pass


class CorruptModel(RoadIriError):
    pass


# evaluate
class LengthMismatch(RoadIriError):
    pass


# pipeline / cli
class SinkClosed(RoadIriError):
    pass


class JoinMismatch(RoadIriError):
    pass


class ConfigError(RoadIriError):
    pass


class StageError(RoadIriError):
    """An upstream error annotated with the pipeline stage and sample index."""

    def __init__(self, stage: str, sample_index: int, cause: Exception):
        super().__init__(f"{stage} failed at sample {sample_index}: {cause}")
        self.stage = stage
        self.sample_index = sample_index
        self.cause = cause
