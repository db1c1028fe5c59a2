# domain/errors.py
# -*- coding: utf-8 -*-

from __future__ import annotations

from typing import Optional, Sequence


class MovlabError(Exception):
    """Base of every error the lab raises on purpose."""


class InvalidInputError(MovlabError, ValueError):
    pass


class DomainError(MovlabError, ValueError):
    """A function was evaluated outside the set where it is defined."""


class OutOfDomainError(DomainError):
    pass


class PreconditionError(MovlabError, ValueError):
    """A hypothesis of an inequality is violated; `bound` names which one."""

    def __init__(self, message: str, bound: str = ""):
        super().__init__(message)
        self.bound = bound


class InsufficientDataError(MovlabError, ValueError):
    pass


class ConfigError(MovlabError, ValueError):
    pass


class GeometryError(MovlabError):
    pass


class SingularGeometryError(GeometryError):
    pass


class NumericalError(MovlabError, RuntimeError):
    """Solver or search failure; `params` carries the offending parameter vector."""

    def __init__(self, message: str, params: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.params = tuple(params) if params is not None else None


class AcceptanceError(MovlabError):
    """A gate-mode check failed; `failures` lists the check names."""

    def __init__(self, message: str, failures: Sequence[str] = ()):
        super().__init__(message)
        self.failures = list(failures)
