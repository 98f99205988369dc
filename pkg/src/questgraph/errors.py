"""Exception types shared across the package."""

from __future__ import annotations


class QuestgraphError(Exception):
    """Base class for all package errors."""


class ParseError(QuestgraphError):
    """Input file is malformed (bad JSON, wrong shape, duplicate keys)."""


class ValidationError(QuestgraphError):
    """A scenario invariant is broken; ``location`` points at the culprit."""

    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class CoverageError(QuestgraphError):
    """A hint store misses nodes the game can visit."""

    def __init__(self, missing: list[str]):
        super().__init__(f"hints missing for {len(missing)} node(s): {', '.join(missing[:8])}")
        self.missing = missing


class RepeatError(QuestgraphError):
    """A hint text repeats an action text of its own node verbatim."""


class CycleError(QuestgraphError):
    """Aligned sequences induce a cycle between event clusters."""

    def __init__(self, cycle: list[str]):
        super().__init__("cycle between clusters: " + " -> ".join(cycle))
        self.cycle = cycle


class UnknownNode(QuestgraphError):
    """Node id not present in the graph."""


class ConfigError(QuestgraphError):
    """Game configuration is unusable for the given assets."""


class SamplingError(QuestgraphError):
    """Not enough eligible far nodes to fill the wrong choices."""


class OutOfRange(QuestgraphError):
    """Action index outside the presented choice list."""


class Terminated(QuestgraphError):
    """Step called on a finished game."""


class DimMismatch(QuestgraphError):
    """Embedding vectors disagree on dimensionality."""


class NonFinite(QuestgraphError):
    """Embedding file contains NaN or infinite components."""


class ShapeMismatch(QuestgraphError):
    """Feature vector does not match the network input layout."""


class NonFiniteLoss(QuestgraphError):
    """A training update produced NaN/inf; carries diagnostics."""


class OracleUnavailable(QuestgraphError):
    """Hidden correct index is not present on this observation."""


class FeatureDimMismatch(QuestgraphError):
    """Scenarios in a cross-evaluation disagree on feature dimensions."""


class MismatchError(QuestgraphError):
    """Replay diverged from the recorded transcript."""

    def __init__(self, step_index: int, detail: str = ""):
        msg = f"replay diverged at step {step_index}"
        super().__init__(msg + (f": {detail}" if detail else ""))
        self.step_index = step_index


class VersionMismatch(QuestgraphError):
    """Transcript was produced by a different engine version."""
