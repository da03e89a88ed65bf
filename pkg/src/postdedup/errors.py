"""Exception hierarchy for the dedup pipeline.

Three top-level families map onto CLI exit codes: configuration problems
(exit 2), data/artifact problems (exit 3), backend/service problems (exit 4).
"""

from __future__ import annotations


class DedupError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(DedupError):
    """Invalid configuration, flags, or ruleset."""


class DataError(DedupError):
    """Invalid or missing input data or artifacts."""


class MalformedRecord(DataError):
    def __init__(self, line_no: int, detail: str = "") -> None:
        self.line_no = line_no
        super().__init__(f"malformed record at line {line_no}" + (f": {detail}" if detail else ""))


class DuplicateId(DataError):
    def __init__(self, posting_id: str) -> None:
        self.posting_id = posting_id
        super().__init__(f"duplicate posting id {posting_id!r}")


class MissingRequiredField(DataError):
    def __init__(self, field: str, line_no: int | None = None) -> None:
        self.field = field
        self.line_no = line_no
        at = f" at line {line_no}" if line_no is not None else ""
        super().__init__(f"missing required field {field!r}{at}")


class FingerprintCollision(DataError):
    """Two texts share a fingerprint but differ case-insensitively.

    Diagnostic only; never expected at 128 bits.
    """

    def __init__(self, id_a: str, id_b: str) -> None:
        self.id_a = id_a
        self.id_b = id_b
        super().__init__(f"fingerprint collision between {id_a!r} and {id_b!r}")


class DimensionMismatch(DataError):
    def __init__(self, expected: int, got: int) -> None:
        self.expected = expected
        self.got = got
        super().__init__(f"expected dimension {expected}, got {got}")


class EmptyInput(DataError):
    """An operation that needs at least one record received none."""


class NlistExceedsPoints(DataError):
    def __init__(self, nlist: int, n_points: int) -> None:
        super().__init__(f"nlist={nlist} exceeds number of vectors ({n_points})")


class ZeroVector(DataError):
    """A zero (empty-text) vector reached an index; these must be filtered upstream."""


class CorruptIndex(DataError):
    """Index file failed magic/version/length/checksum validation."""


class UnknownId(DataError):
    def __init__(self, posting_id: str) -> None:
        self.posting_id = posting_id
        super().__init__(f"unknown posting id {posting_id!r}")


class NoMatchingRule(DataError):
    """No expert rule matched a pair; the terminal default rule is missing."""


class DuplicatePrediction(DataError):
    def __init__(self, id_a: str, id_b: str) -> None:
        self.id_a = id_a
        self.id_b = id_b
        super().__init__(f"pair ({id_a!r}, {id_b!r}) predicted more than once")


class BackendError(DedupError):
    """Base class for translation/embedding service failures."""


class BackendUnavailable(BackendError):
    """Backend could not be reached or kept failing after retries."""


class RateLimited(BackendError):
    def __init__(self, retry_after: float | None = None) -> None:
        self.retry_after = retry_after
        super().__init__(
            "backend rate limited" + (f" (retry after {retry_after}s)" if retry_after else "")
        )


class InvalidLanguage(ConfigError):
    def __init__(self, code: str) -> None:
        self.code = code
        super().__init__(f"invalid language code {code!r}")
