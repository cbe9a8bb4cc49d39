"""Access to the packaged policy, task and scenario documents.

The JSON files under ``data/`` are the serialized outputs of the
builders in :mod:`policylab.experiments`, frozen with stable node ids so
that identity-anchored comparisons and report regeneration stay
deterministic. ``write_fixtures`` regenerates them.
"""

from __future__ import annotations

from pathlib import Path

from . import documents, experiments
from .core import DocumentError
from .simworld import Scenario, parse_scenario_document, serialize_scenario


def data_dir() -> Path:
    return Path(__file__).parent / "data"


def policy_path(name: str, base: Path | None = None) -> Path:
    return (base or data_dir()) / f"{name}.json"


def available_policies(base: Path | None = None) -> list[str]:
    root = base or data_dir()
    if not root.is_dir():
        raise DocumentError(f"fixture directory {root} is missing")
    return sorted(p.stem for p in root.glob("*.json")
                  if not p.stem.endswith(("_library", "_goal")))


def load_policy(name: str, base: Path | None = None):
    path = policy_path(name, base)
    if not path.is_file():
        raise DocumentError(f"fixture {name!r} not found at {path}")
    return documents.parse_policy_document(path.read_text())


def load_library(name: str, base: Path | None = None):
    path = (base or data_dir()) / f"{name}_library.json"
    if not path.is_file():
        raise DocumentError(f"library fixture {name!r} not found at {path}")
    return documents.parse_library_document(path.read_text())


def load_goal(name: str, base: Path | None = None):
    path = (base or data_dir()) / f"{name}_goal.json"
    if not path.is_file():
        raise DocumentError(f"goal fixture {name!r} not found at {path}")
    return documents.parse_goal_document(path.read_text())


def scenario_path(name: str, base: Path | None = None) -> Path:
    return (base or data_dir()) / "scenarios" / f"{name}.json"


def load_scenario(name: str, base: Path | None = None) -> Scenario:
    path = scenario_path(name, base)
    if not path.is_file():
        raise DocumentError(f"scenario fixture {name!r} not found at {path}")
    return parse_scenario_document(path.read_text())


def write_fixtures(target: Path | None = None) -> list[Path]:
    """Regenerate every packaged document from the canonical builders."""
    root = target or data_dir()
    root.mkdir(parents=True, exist_ok=True)
    (root / "scenarios").mkdir(exist_ok=True)
    written = []

    for name, builder in experiments.FIXTURE_BUILDERS.items():
        path = root / f"{name}.json"
        path.write_text(documents.serialize_policy(builder()))
        written.append(path)

    tasks = {
        "fetch": (experiments.fetch_library(), experiments.fetch_goal()),
        "fetch_safe": (experiments.fetch_library(with_safe_move=True),
                       experiments.fetch_goal()),
        "scalability": (experiments.scalability_library(),
                        experiments.scalability_goal()),
    }
    for task, (library, goal) in tasks.items():
        lib_path = root / f"{task}_library.json"
        lib_path.write_text(documents.serialize_library(library))
        goal_path = root / f"{task}_goal.json"
        goal_path.write_text(documents.serialize_goal(goal))
        written += [lib_path, goal_path]

    for name, builder in experiments.SCENARIO_BUILDERS.items():
        path = root / "scenarios" / f"{name}.json"
        path.write_text(serialize_scenario(builder()))
        written.append(path)
    return written


if __name__ == "__main__":  # regenerate the packaged data in place
    for written_path in write_fixtures():
        print(written_path)
