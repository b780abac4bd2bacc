"""Exception types shared across the package."""


class HarnessError(Exception):
    """Base class for all minitune errors."""


class DataFormatError(HarnessError):
    """A dataset file violates the instruction/input/output JSONL schema."""


class ConfigError(HarnessError):
    """A tuning configuration value is out of range or inconsistent."""


class ArtifactError(HarnessError):
    """A saved artifact directory is missing pieces or has the wrong version."""
