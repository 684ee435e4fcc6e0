"""Exception hierarchy shared by all modules.

Every error carries a stable machine-readable ``code`` so the CLI can emit
single-line, parsable failures (``E_SCHEMA: <message>``).
"""


class HarnessError(Exception):
    """Base class for all errors raised by this package."""

    code = "E_INTERNAL"

    def __str__(self) -> str:
        return super().__str__() or self.code


class InputError(HarnessError):
    """Unreadable or unwritable file."""

    code = "E_IO"


class SchemaError(HarnessError):
    """Malformed dataset/scores/annotations content (fail-fast, whole file rejected)."""

    code = "E_SCHEMA"


class MissingSourceError(HarnessError):
    code = "E_MISSING_SRC"


class UnexpectedSourceError(HarnessError):
    code = "E_UNEXPECTED_SRC"


class BackendError(HarnessError):
    """Transport or HTTP failure after retries were exhausted."""

    code = "E_BACKEND"


class AuthError(HarnessError):
    code = "E_AUTH"


class BudgetExceededError(HarnessError):
    """Raised before a call that would push token spend past the configured cap."""

    code = "E_BUDGET"


class NoReferenceError(HarnessError):
    code = "E_NO_REFERENCE"


class ResourceError(HarnessError):
    """A configured stem/synonym resource file is unreadable."""

    code = "E_RESOURCE"


class ScorerUnavailableError(HarnessError):
    code = "E_SCORER_UNAVAILABLE"


class ScorerProtocolError(HarnessError):
    code = "E_SCORER_PROTOCOL"


class MissingSettingError(HarnessError):
    code = "E_MISSING_SETTING"


class MissingModeError(HarnessError):
    code = "E_MISSING_MODE"


class LengthMismatchError(HarnessError):
    code = "E_LENGTH_MISMATCH"


class WrongArityError(HarnessError):
    code = "E_WRONG_ARITY"


class UnequalRatersError(HarnessError):
    code = "E_UNEQUAL_RATERS"


class EmptyCellError(HarnessError):
    code = "E_EMPTY_CELL"


class NoSizeLabelError(HarnessError):
    code = "E_NO_SIZE_LABEL"


class UsageError(HarnessError):
    """Bad flags or flag combinations at the CLI boundary."""

    code = "E_USAGE"
