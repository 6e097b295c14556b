from typing import Optional


class HolderLabError(Exception):
    """Base error carrying a detail message and the CLI exit code it maps to."""

    exit_code = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class DomainError(HolderLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigError(HolderLabError):
    exit_code = 2

    def __init__(self, detail: str, field: Optional[str] = None):
        super().__init__(detail)
        self.field = field


class WaveletError(HolderLabError, ValueError):
    pass


class SynthesisError(HolderLabError, ValueError):
    pass


class EstimationError(HolderLabError):
    """Not enough usable data to produce an estimate."""
