"""Python interface to the concord consolidation engine."""

import json

from ._concord import (
    ConcordError,
    ConfigError,
    IncompleteTrail,
    QuorumNotMet,
    ReplayDivergence,
    explain,
    hash_content,
    replay,
    run_scenario,
    validate_workflow,
    verify,
)


def load_decision(document):
    """Parse a decision document (as returned by run_scenario or replay)."""
    return json.loads(document)


__all__ = [
    "ConcordError",
    "ConfigError",
    "IncompleteTrail",
    "QuorumNotMet",
    "ReplayDivergence",
    "explain",
    "hash_content",
    "load_decision",
    "replay",
    "run_scenario",
    "validate_workflow",
    "verify",
]
