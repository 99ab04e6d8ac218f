"""Exception hierarchy shared by all inklab modules.

Three broad families map onto the CLI exit codes: ConfigError (2),
DataError (3) and ModelError (4). Everything else is a plain bug.
"""

from __future__ import annotations


class InklabError(Exception):
    """Base class for all expected failures."""


class ConfigError(InklabError):
    """Bad or inconsistent run configuration."""


class DataError(InklabError):
    """Problems with input recordings, features or labels."""


class ModelError(InklabError):
    """Problems with classifier or extractor models."""


# --- ingestion ---------------------------------------------------------

class MalformedLine(DataError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        super().__init__(f"malformed line {line_no}" + (f": {detail}" if detail else ""))


class CountMismatch(DataError):
    def __init__(self, declared: int, actual: int):
        self.declared = declared
        self.actual = actual
        super().__init__(f"header declares {declared} samples, file has {actual}")


class EmptyFile(DataError):
    pass


class NonMonotoneTime(DataError):
    def __init__(self, line_no: int):
        self.line_no = line_no
        super().__init__(f"timestamp decreases at line {line_no}")


class EmptyTrajectory(DataError):
    pass


# --- feature computation ----------------------------------------------

class InsufficientSamples(DataError):
    def __init__(self, feature: str, needed: int, got: int):
        self.feature = feature
        self.needed = needed
        self.got = got
        super().__init__(f"{feature} needs >= {needed} samples, got {got}")


class NoOnSurfaceStrokes(DataError):
    pass


class EmptyVector(DataError):
    pass


class DegenerateSeries(DataError):
    pass


# --- extractors ---------------------------------------------------------

class ModelFileMissing(ModelError):
    def __init__(self, path):
        self.path = path
        super().__init__(f"model file not found: {path}")


class ShapeMismatch(ModelError):
    def __init__(self, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"expected shape {expected}, got {got}")


class BadInputShape(ModelError):
    def __init__(self, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"extractor expects input {expected}, got {got}")


class DimMismatch(ModelError):
    pass


# --- selection / classification ----------------------------------------

class SingleClassTrainingSet(DataError):
    pass


class MissingDims(DataError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"{len(self.missing)} selected dims absent from matrix "
                         f"(first: {self.missing[:3]})")


class DimTooSmall(DataError):
    pass


class NoVoters(DataError):
    pass


class EmptyVoters(NoVoters):
    pass


# --- evaluation ---------------------------------------------------------

class TooFewSubjects(DataError):
    pass


class SingleClass(DataError):
    pass


class TooFewTasks(DataError):
    pass
