"""Exception types raised across the toolkit."""


class EdfaTwinError(Exception):
    """Base class; ``reason`` is the short machine-readable code used by the CLI."""

    reason = "error"


class NonPositivePower(EdfaTwinError, ValueError):
    reason = "non_positive_power"


class EmptyMask(EdfaTwinError, ValueError):
    reason = "empty_mask"


class UnsupportedGain(EdfaTwinError, ValueError):
    reason = "unsupported_gain"


class ParseError(EdfaTwinError, ValueError):
    reason = "parse_error"


class SchemaMismatch(EdfaTwinError, ValueError):
    reason = "schema_mismatch"


class InsufficientRecords(EdfaTwinError, ValueError):
    reason = "insufficient_records"


class InsufficientData(EdfaTwinError, ValueError):
    reason = "insufficient_data"


class InsufficientBatch(EdfaTwinError, ValueError):
    reason = "insufficient_batch"


class DegenerateStatistics(EdfaTwinError, ValueError):
    reason = "degenerate_statistics"


class DimensionMismatch(EdfaTwinError, ValueError):
    reason = "dimension_mismatch"


class MissingReference(EdfaTwinError, ValueError):
    reason = "missing_reference"


class MissingFullLoad(EdfaTwinError, ValueError):
    reason = "missing_full_load"


class EmptyShots(EdfaTwinError, ValueError):
    reason = "empty_shots"


class EmptyTestSet(EdfaTwinError, ValueError):
    reason = "empty_test_set"


class ConfigError(EdfaTwinError, ValueError):
    reason = "config_error"
