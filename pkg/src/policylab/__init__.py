"""Task-switching robot control policies: build, run, transform, measure."""

from .core import ActionSpec, ConditionLiteral, Goal, Guard, Status, validate_action_library
from .documents import parse_policy_document, serialize_policy

__version__ = "0.1.0"

__all__ = [
    "ActionSpec",
    "ConditionLiteral",
    "Goal",
    "Guard",
    "Status",
    "parse_policy_document",
    "serialize_policy",
    "validate_action_library",
    "__version__",
]
