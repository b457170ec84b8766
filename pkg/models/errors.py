from typing import Optional


class ToolkitError(Exception):
    """Root of every error raised by the registration toolkit."""

    exit_code = 3

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


# ── Usage / configuration (exit 1) ─────────────────────────────────────

class UsageError(ToolkitError):
    exit_code = 1


class ConfigurationError(UsageError):
    pass


class NonPositiveDenominator(UsageError):
    """|I| <= 2·|gt|·d_max in the symmetric distance score."""


# ── Data problems (exit 2) ─────────────────────────────────────────────

class DataError(ToolkitError, ValueError):
    exit_code = 2


class ParseError(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class MissingAsset(DataError):
    pass


class IndexMismatch(DataError):
    pass


class ConnectivityMismatch(DataError):
    pass


class DegenerateExtent(DataError):
    pass


class MissingCanonicalPose(DataError):
    pass


class EmptySet(DataError):
    pass


# ── Algorithmic failures (exit 3) ──────────────────────────────────────

class AlgorithmError(ToolkitError, RuntimeError):
    exit_code = 3


class NonPositiveDepth(AlgorithmError):
    pass


class NoConvergence(AlgorithmError):
    pass


class EmptyProjection(AlgorithmError):
    pass


class DegenerateConfiguration(AlgorithmError):
    pass


class NoModelFound(AlgorithmError):
    pass


class AllRestartsFailed(AlgorithmError):
    pass
