"""questgraph: a choice-based text game environment built from aligned
event sequence descriptions, plus from-scratch RL baselines, analysis
tooling and a newline-delimited JSON wire protocol."""

from .engine import ENGINE_VERSION

__version__ = ENGINE_VERSION
