"""Observation featurization: embedding-table lookups with a hashed fallback.

Choice texts are looked up in a pre-computed embedding table (written by an
offline exporter); anything unseen falls back to deterministic bag-of-tokens
feature hashing so featurization is total. Per-choice vectors are
concatenated in choice order, with the hint embedding appended last when a
hint is present.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import Observation
from .errors import DimMismatch, NonFinite, ParseError


def normalize_text(text: str) -> str:
    """Canonical key form: trim, collapse internal whitespace, lowercase.

    Must match the exporter's normalization exactly so table keys agree.
    """
    return " ".join(text.split()).lower()


@dataclass(frozen=True)
class EmbeddingTable:
    dim: int
    entries: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def lookup(self, text: str) -> np.ndarray | None:
        return self.entries.get(normalize_text(text))


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Read embedding JSONL: a {"dim", "model"} header line, then one
    {"text", "vec"} object per line."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty embedding file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:1: bad JSON header: {exc}") from exc
    if not isinstance(header, dict) or "dim" not in header:
        raise ParseError(f"{path}:1: header must carry a dim field")
    dim = header["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise ParseError(f"{path}:1: dim must be a positive integer")

    entries: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: bad JSON: {exc}") from exc
        if not isinstance(row, dict) or "text" not in row or "vec" not in row:
            raise ParseError(f"{path}:{lineno}: each row needs text and vec")
        key = normalize_text(str(row["text"]))
        if key in entries:
            raise ParseError(f"{path}:{lineno}: duplicate text {key!r}")
        vec = np.asarray(row["vec"], dtype=np.float64)
        if vec.ndim != 1 or vec.shape[0] != dim:
            raise DimMismatch(f"{path}:{lineno}: vector has length {vec.shape}, expected {dim}")
        if not np.all(np.isfinite(vec)):
            raise NonFinite(f"{path}:{lineno}: vector has NaN/inf components")
        entries[key] = vec
    return EmbeddingTable(dim=dim, entries=entries,
                          meta={"model": header.get("model", ""),
                                "created": header.get("created", "")})


class HashFeaturizer:
    """Deterministic bag-of-tokens feature hashing with signed buckets.

    Tokens are hashed with blake2b (stable across processes and platforms);
    the first 8 digest bytes pick the bucket, the ninth byte's low bit the
    sign. Outputs are L2-normalized; empty text maps to the zero vector.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim

    def __call__(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token in normalize_text(text).split():
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=9).digest()
            bucket = int.from_bytes(digest[:8], "big") % self.dim
            sign = 1.0 if digest[8] & 1 else -1.0
            vec[bucket] += sign
        norm = math.sqrt(float(vec @ vec))
        if norm > 0:
            vec /= norm
        return vec


def hash_featurize(text: str, dim: int) -> np.ndarray:
    return HashFeaturizer(dim)(text)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    layout: tuple[int, int, bool]  # (num_choices, dim, hint_included)

    @property
    def num_choices(self) -> int:
        return self.layout[0]

    @property
    def dim(self) -> int:
        return self.layout[1]

    @property
    def hint_included(self) -> bool:
        return self.layout[2]

    def choice_block(self, i: int) -> np.ndarray:
        return self.values[i * self.dim:(i + 1) * self.dim]

    def hint_block(self) -> np.ndarray | None:
        if not self.hint_included:
            return None
        return self.values[self.num_choices * self.dim:]


def featurize(obs: Observation, table: EmbeddingTable | None,
              fallback: HashFeaturizer, include_hint: bool = True) -> FeatureVector:
    """Per-choice embedding lookup (hashed fallback for unseen text),
    concatenated in choice order; hint block appended last when present."""
    if table is not None and table.dim != fallback.dim:
        raise DimMismatch(f"table dim {table.dim} != fallback dim {fallback.dim}")
    dim = fallback.dim

    def embed(text: str) -> np.ndarray:
        if table is not None:
            hit = table.lookup(text)
            if hit is not None:
                return hit
        return fallback(text)

    blocks = [embed(c) for c in obs.choices]
    hint_included = include_hint and obs.hint is not None
    if hint_included:
        blocks.append(embed(obs.hint))
    return FeatureVector(values=np.concatenate(blocks),
                         layout=(len(obs.choices), dim, hint_included))
