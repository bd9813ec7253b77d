"""Exception types shared across the package."""


class QuakeImpactError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(QuakeImpactError, ValueError):
    """A model parameter vector is outside its valid domain."""


class InvalidInputError(QuakeImpactError, ValueError):
    """A caller-supplied value (covariate, observation, ...) is rejected."""


class BundleError(QuakeImpactError, ValueError):
    """An event bundle failed validation; message names file and field."""


class ConfigError(QuakeImpactError, ValueError):
    """A run configuration is missing fields or internally inconsistent."""


class CheckpointError(QuakeImpactError, RuntimeError):
    """A checkpoint file is corrupt or incompatible with the run config."""
