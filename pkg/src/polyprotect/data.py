"""Embedding corpora: representation, CSV I/O, synthetic generation and
per-element histogram estimation for the attacker's guess distributions."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._random import as_generator
from .errors import ConfigError, DomainError, EstimationError, ParseError

SPLITS = ("development", "evaluation")
ROLES = ("reference", "query")


@dataclass(frozen=True, eq=False)
class Embedding:
    subject_id: str
    sample_id: str
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise DomainError("embedding must be a non-empty 1-d vector")
        if not np.all(np.isfinite(values)):
            raise DomainError(f"embedding {self.subject_id}/{self.sample_id} has non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.size

    @property
    def key(self) -> tuple[str, str]:
        return (self.subject_id, self.sample_id)


@dataclass(frozen=True, eq=False)
class Corpus:
    embeddings: tuple[Embedding, ...] = ()
    split: str = "development"
    role: str = "reference"

    def __post_init__(self):
        object.__setattr__(self, "embeddings", tuple(self.embeddings))
        if self.split not in SPLITS:
            raise ConfigError(f"unknown split {self.split!r}")
        if self.role not in ROLES:
            raise ConfigError(f"unknown role {self.role!r}")
        dims = {e.dim for e in self.embeddings}
        if len(dims) > 1:
            raise DomainError(f"mixed dimensionalities in corpus: {sorted(dims)}")
        keys = [e.key for e in self.embeddings]
        if len(set(keys)) != len(keys):
            raise DomainError("duplicate (subject_id, sample_id) in corpus")

    def __len__(self):
        return len(self.embeddings)

    def __iter__(self):
        return iter(self.embeddings)

    @property
    def dim(self) -> int | None:
        return self.embeddings[0].dim if self.embeddings else None

    def matrix(self) -> np.ndarray:
        if not self.embeddings:
            return np.empty((0, 0))
        return np.stack([e.values for e in self.embeddings])

    @property
    def subject_ids(self) -> list[str]:
        return [e.subject_id for e in self.embeddings]

    def subjects(self) -> list[str]:
        return sorted(set(self.subject_ids))

    def by_subject(self) -> dict[str, list[Embedding]]:
        groups = defaultdict(list)
        for e in self.embeddings:
            groups[e.subject_id].append(e)
        return {s: groups[s] for s in sorted(groups)}

    def sorted(self) -> Corpus:
        return Corpus(sorted(self.embeddings, key=lambda e: e.key), self.split, self.role)

    def with_labels(self, split=None, role=None) -> Corpus:
        return Corpus(self.embeddings, split or self.split, role or self.role)


def split_reference_query(corpus: Corpus, n_reference: int) -> tuple[Corpus, Corpus]:
    """First `n_reference` samples (canonical order) of each subject become
    references, the rest queries."""
    if n_reference < 1:
        raise ConfigError("n_reference must be >= 1")
    refs, queries = [], []
    for subject, items in corpus.sorted().by_subject().items():
        if len(items) <= n_reference:
            raise ConfigError(
                f"subject {subject} has {len(items)} samples; need more than {n_reference} "
                "to leave at least one query"
            )
        refs.extend(items[:n_reference])
        queries.extend(items[n_reference:])
    return (Corpus(refs, corpus.split, "reference"), Corpus(queries, corpus.split, "query"))


# --- synthetic corpora -------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    n_subjects: int = 20
    samples_per_subject: int = 12
    dim: int = 128
    between_class_std: float = 1.0
    within_class_std: float = 0.1
    unit_normalize: bool = True
    seed: int = 0

    def validate(self):
        for name in ("n_subjects", "samples_per_subject", "dim"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("between_class_std", "within_class_std"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a positive real, got {value!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")


def generate_synthetic_corpus(cfg: SyntheticConfig, split="development", role="reference") -> Corpus:
    """Gaussian class centers plus Gaussian within-class noise, one row per sample."""
    cfg.validate()
    rng = np.random.default_rng(int(cfg.seed))
    centers = rng.normal(0.0, cfg.between_class_std, size=(cfg.n_subjects, cfg.dim))
    noise = rng.normal(0.0, cfg.within_class_std, size=(cfg.n_subjects, cfg.samples_per_subject, cfg.dim))
    samples = centers[:, None, :] + noise
    if cfg.unit_normalize:
        norms = np.linalg.norm(samples, axis=-1, keepdims=True)
        samples = samples / norms
    width = max(4, len(str(cfg.n_subjects - 1)))
    swidth = max(3, len(str(cfg.samples_per_subject - 1)))
    embeddings = [
        Embedding(f"s{s:0{width}d}", f"{j:0{swidth}d}", samples[s, j])
        for s in range(cfg.n_subjects)
        for j in range(cfg.samples_per_subject)
    ]
    return Corpus(embeddings, split, role)


# --- CSV I/O -----------------------------------------------------------------


def save_corpus(corpus: Corpus, path) -> None:
    dim = corpus.dim or 0
    header = ["subject_id", "sample_id"] + [f"v{i}" for i in range(dim)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for e in corpus.sorted():
            writer.writerow([e.subject_id, e.sample_id] + [format(float(x), ".17g") for x in e.values])


def load_corpus(path, expected_dim=None, split="development", role="reference") -> Corpus:
    path = Path(path)
    embeddings = []
    seen = set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file (missing header)", line=1) from None
        if header[:2] != ["subject_id", "sample_id"]:
            raise ParseError("header must start with subject_id,sample_id", line=1)
        dim = len(header) - 2
        if header[2:] != [f"v{i}" for i in range(dim)]:
            raise ParseError("value columns must be named v0..v{n-1}", line=1)
        if expected_dim is not None and dim != expected_dim:
            raise ParseError(f"header declares dim {dim}, expected {expected_dim}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) - 2 != dim:
                raise ParseError(f"row has {len(row) - 2} values, header declares {dim}", line=lineno)
            try:
                values = np.array([float(x) for x in row[2:]], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"bad number: {exc}", line=lineno) from None
            if not np.all(np.isfinite(values)):
                raise ParseError("non-finite value", line=lineno)
            key = (row[0], row[1])
            if key in seen:
                raise ParseError(f"duplicate id {key}", line=lineno)
            seen.add(key)
            embeddings.append(Embedding(row[0], row[1], values))
    if dim == 0 and embeddings:
        raise ParseError("rows present but no value columns", line=1)
    return Corpus(embeddings, split, role)


# --- element distributions ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    probs: np.ndarray

    @property
    def low(self) -> float:
        return float(self.edges[0])

    @property
    def high(self) -> float:
        return float(self.edges[-1])


@dataclass(frozen=True, eq=False)
class ElementDistributions:
    per_element: tuple[Histogram, ...] = field(default_factory=tuple)

    def __len__(self):
        return len(self.per_element)

    def __getitem__(self, i) -> Histogram:
        return self.per_element[i]


def _histogram(column: np.ndarray, bins: int) -> Histogram:
    lo, hi = float(column.min()), float(column.max())
    if lo == hi:
        return Histogram(np.array([lo, hi]), np.array([1.0]))
    counts, edges = np.histogram(column, bins=bins, range=(lo, hi))
    return Histogram(edges, counts / counts.sum())


def estimate_element_distributions(corpus: Corpus, bins: int = 100, role=None) -> ElementDistributions:
    """One equal-width histogram per embedding element.

    `role` restricts estimation to reference or query embeddings of the
    corpus (None uses everything).
    """
    if bins < 1:
        raise ConfigError("bins must be >= 1")
    if role is not None and corpus.role != role:
        raise EstimationError(f"corpus role is {corpus.role!r}, requested {role!r}")
    if len(corpus) == 0:
        raise EstimationError("cannot estimate distributions from an empty corpus")
    X = corpus.matrix()
    return ElementDistributions(tuple(_histogram(X[:, i], bins) for i in range(X.shape[1])))


def _inverse_cdf(hist: Histogram, u_bin, u_pos):
    cdf = np.cumsum(hist.probs)
    idx = np.minimum(np.searchsorted(cdf, u_bin * cdf[-1], side="right"), hist.probs.size - 1)
    left, right = hist.edges[idx], hist.edges[idx + 1]
    return left + u_pos * (right - left)


def sample_element(dist: ElementDistributions, element_index: int, rng) -> float:
    """Draw a bin by probability, then a uniform point inside it."""
    if not 0 <= element_index < len(dist):
        raise IndexError(f"element index {element_index} outside [0, {len(dist)})")
    rng = as_generator(rng)
    u = rng.random(2)
    return float(_inverse_cdf(dist[element_index], u[0], u[1]))


def sample_vectors(dist: ElementDistributions, count: int, rng) -> np.ndarray:
    """`count` complete vectors, each element drawn independently from its
    histogram. Returns shape (count, n)."""
    rng = as_generator(rng)
    n = len(dist)
    u_bin = rng.random((n, count))
    u_pos = rng.random((n, count))
    out = np.empty((count, n))
    for i, hist in enumerate(dist.per_element):
        out[:, i] = _inverse_cdf(hist, u_bin[i], u_pos[i])
    return out
