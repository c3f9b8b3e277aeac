"""Exception types raised across the package."""


class SiiteError(Exception):
    """Base class for all package errors."""


class InvalidSpecError(SiiteError, ValueError):
    """A model or run specification violates its preconditions."""


class ResourceLimitError(SiiteError):
    """An operation would exceed a configured size cap (e.g. dense matrices)."""


class NearDegeneracyError(SiiteError):
    """The shifted Hamiltonian is (nearly) singular at the requested target energy.

    Perturb the target energy slightly and retry.
    """


class SiteFailure(SiiteError):
    """A local optimisation failed at a given MPS site."""

    def __init__(self, site, message="local solve failed"):
        super().__init__(f"site {site}: {message}")
        self.site = site


class ConfigError(SiiteError, ValueError):
    """A run configuration is malformed. ``field`` names the offending key path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
