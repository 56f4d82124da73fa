"""Exception types shared across the package."""

from __future__ import annotations

__all__ = ["ConfigError", "NanAbortError"]


class ConfigError(ValueError):
    """A scenario or run configuration is unusable (CLI exit code 3)."""


class NanAbortError(RuntimeError):
    """The solution stopped being finite; carries the offending step index."""

    def __init__(self, step_index: int, population: int | None = None):
        self.step_index = step_index
        self.population = population
        where = f" (population {population + 1})" if population is not None else ""
        super().__init__(f"non-finite density after step {step_index}{where}")
