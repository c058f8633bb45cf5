"""Error types shared across the package.

Every error carries a module name and a short machine-readable code so the
CLI can emit structured diagnostics ({"module", "code", "message"}).
"""

from __future__ import annotations


class StcastError(Exception):
    """Base error with a module-qualified code."""

    module = "stcast"

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message

    def to_json_dict(self) -> dict:
        return {"module": self.module, "code": self.code, "message": self.message}


class FieldError(StcastError):
    module = "fields"


class SaaError(StcastError):
    module = "saa"


class TmoeError(StcastError):
    module = "tmoe"


class ModelError(StcastError):
    module = "model"


class MetricsError(StcastError):
    module = "metrics"


class CycloneError(StcastError):
    module = "cyclone"


class EnsembleError(StcastError):
    module = "ensemble"


class ConfigError(StcastError):
    module = "cli"
