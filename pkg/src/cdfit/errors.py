"""Exception hierarchy shared across the package."""


class CDError(Exception):
    """Base class for all package errors."""


class DimensionError(CDError, ValueError):
    """State or parameter length does not match the model."""


class DegenerateConditionalError(CDError):
    """Every value of an updated coordinate (or block) is forbidden by the offset."""


class EnumerationLimitError(CDError):
    """A brute-force computation was requested on a space that is too large."""


class MLENotFoundError(CDError):
    """The observed statistics lie on the boundary of the convex hull; no finite MLE."""


class InvalidPairError(CDError):
    """A pair handed to the CI-pair kernel is not conditionally independent."""


class UnreachableSupportError(CDError):
    """The requested chain support has zero probability under the kernel."""


class ConfigError(CDError):
    """Invalid run configuration."""


class ParseError(ConfigError):
    """Malformed edge-list or attribute file.  ``lineno`` is 1-based."""

    def __init__(self, path, lineno, message):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")
