"""Exception types shared across the package."""


class TexmarkError(Exception):
    """Base class for all package errors."""


class ParameterError(TexmarkError, ValueError):
    """An argument is outside its valid range."""


class InputError(TexmarkError):
    """An input file is missing, unreadable or malformed."""


class ConfigError(TexmarkError):
    """A configuration document failed validation."""


class CompatibilityError(TexmarkError):
    """Two artifacts cannot be combined (e.g. different codebooks)."""


class SpecError(TexmarkError, ValueError):
    """A synthetic scene or distortion spec is invalid."""
