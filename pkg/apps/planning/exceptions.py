"""
Planning error hierarchy
"""
from typing import Iterable, List, Optional, Tuple


class PlanningError(Exception):
    """Base class for failures the plan command reports with exit status 2"""


class ConfigurationError(PlanningError):
    """Config document could not be parsed or violates an invariant"""

    def __init__(self, message: str, errors: Optional[Iterable[Tuple[str, str]]] = None):
        self.errors: List[Tuple[str, str]] = list(errors or [])
        super().__init__(message)

    def __str__(self):
        message = super().__str__()
        if not self.errors:
            return message
        details = '; '.join(f"{path}: {text}" if path else text for path, text in self.errors)
        return f"{message}: {details}"


class ArtifactError(PlanningError):
    """A stage input file is missing or does not match its schema"""


class DegenerateInputError(PlanningError, ValueError):
    """Computation has no meaningful answer for the given input"""
