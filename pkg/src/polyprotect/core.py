"""The polynomial protection transform, parameter generation and the
negative-cosine-distance comparator."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._random import as_generator
from .errors import ComparisonError, ConfigError, DomainError, ExhaustionError, NumericError

DEFAULT_M = 5
DEFAULT_COEFF_RANGE = (-50, 50)


def output_dimension(n: int, m: int, overlap: int) -> int:
    """Number of width-`m` windows at stride ``m - overlap`` needed to cover
    all `n` elements (the last one zero-padded if partial)."""
    if m < 1 or n < m:
        raise DomainError(f"need 1 <= m <= n, got m={m}, n={n}")
    if not 0 <= overlap <= m - 1:
        raise DomainError(f"overlap must lie in [0, {m - 1}], got {overlap}")
    stride = m - overlap
    return -(-(n - m) // stride) + 1


def window_indices(n: int, m: int, overlap: int) -> np.ndarray:
    """(k, m) array of element indices per window; padded slots are -1."""
    k = output_dimension(n, m, overlap)
    idx = np.arange(k)[:, None] * (m - overlap) + np.arange(m)[None, :]
    idx[idx >= n] = -1
    return idx


@dataclass(frozen=True)
class PolyParams:
    C: tuple[int, ...]
    E: tuple[int, ...]
    overlap: int = 0
    owner_id: str = ""

    def __post_init__(self):
        C = tuple(int(c) for c in self.C)
        E = tuple(int(e) for e in self.E)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "E", E)
        m = len(C)
        if m < 1 or len(E) != m:
            raise DomainError("C and E must be non-empty and of equal length")
        if len(set(C)) != m or 0 in C:
            raise DomainError(f"C must hold unique non-zero integers, got {C}")
        if sorted(E) != list(range(1, m + 1)):
            raise DomainError(f"E must be a permutation of 1..{m}, got {E}")
        if not 0 <= self.overlap <= m - 1:
            raise DomainError(f"overlap must lie in [0, {m - 1}], got {self.overlap}")

    @property
    def m(self) -> int:
        return len(self.C)

    def check_coeff_range(self, coeff_range=DEFAULT_COEFF_RANGE):
        lo, hi = coeff_range
        bad = [c for c in self.C if not lo <= c <= hi]
        if bad:
            raise DomainError(f"coefficients {bad} outside [{lo}, {hi}]")

    def scaled(self, alpha: int) -> PolyParams:
        return PolyParams(tuple(alpha * c for c in self.C), self.E, self.overlap, self.owner_id)

    def to_dict(self) -> dict:
        return {"owner_id": self.owner_id, "m": self.m, "overlap": self.overlap, "C": list(self.C), "E": list(self.E)}

    @classmethod
    def from_dict(cls, d: dict) -> PolyParams:
        try:
            params = cls(tuple(d["C"]), tuple(d["E"]), int(d["overlap"]), str(d.get("owner_id", "")))
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed params record: {exc}") from None
        if "m" in d and int(d["m"]) != params.m:
            raise DomainError(f"declared m={d['m']} but C has {params.m} entries")
        return params


@dataclass(frozen=True, eq=False)
class ProtectedTemplate:
    values: np.ndarray
    overlap: int
    source_dim: int
    owner_id: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise DomainError("template values must be a finite 1-d vector")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def to_dict(self) -> dict:
        return {
            "owner_id": self.owner_id,
            "overlap": self.overlap,
            "source_dim": self.source_dim,
            "values": [float(x) for x in self.values],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ProtectedTemplate:
        try:
            return cls(np.array(d["values"], dtype=float), int(d["overlap"]), int(d["source_dim"]), str(d.get("owner_id", "")))
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed template record: {exc}") from None


@dataclass(frozen=True)
class ScoreRange:
    low: float
    high: float

    def __post_init__(self):
        if not -2.0 <= self.low <= self.high <= 0.0:
            raise DomainError(f"score range must satisfy -2 <= low <= high <= 0, got [{self.low}, {self.high}]")

    def contains(self, score: float, tol: float = 0.0) -> bool:
        return self.low - tol <= score <= self.high + tol

    def to_list(self) -> list[float]:
        return [self.low, self.high]


FULL_RANGE = ScoreRange(-2.0, 0.0)


# --- transform ---------------------------------------------------------------


def protect_matrix(X: np.ndarray, params: PolyParams) -> np.ndarray:
    """Protect each row of `X` (shape (N, n)); returns (N, k)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    n = X.shape[1]
    idx = window_indices(n, params.m, params.overlap)
    padded = np.concatenate([X, np.zeros((X.shape[0], 1))], axis=1)  # index -1 reads this 0
    windows = padded[:, idx]  # (N, k, m)
    out = np.zeros(windows.shape[:2])
    with np.errstate(over="ignore", invalid="ignore"):
        # term-by-term accumulation keeps results bitwise independent of batch size
        for i, (c, e) in enumerate(zip(params.C, params.E)):
            out += float(c) * windows[:, :, i] ** e
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out))[0]
        raise NumericError(f"non-finite value in window {int(bad[1])} (row {int(bad[0])})")
    return out


def protect(v, params: PolyParams) -> ProtectedTemplate:
    """Map an embedding (or raw vector) to its protected template."""
    values = getattr(v, "values", v)
    owner = getattr(v, "subject_id", params.owner_id)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size < params.m:
        raise DomainError(f"vector of shape {values.shape} cannot be protected with m={params.m}")
    if not np.all(np.isfinite(values)):
        raise DomainError("input vector has non-finite values")
    out = protect_matrix(values, params)[0]
    return ProtectedTemplate(out, params.overlap, values.size, owner)


# --- comparator --------------------------------------------------------------


def _score_from_cos(cos):
    return np.clip(cos, -1.0, 1.0) - 1.0


def compare(p, q) -> float:
    """Negative cosine distance, cos(p, q) - 1, in [-2, 0]."""
    a = np.asarray(getattr(p, "values", p), dtype=np.float64)
    b = np.asarray(getattr(q, "values", q), dtype=np.float64)
    if a.shape != b.shape:
        raise ComparisonError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ComparisonError("zero-norm vector has no direction")
    # cos - 1 == -|a/|a| - b/|b||^2 / 2, which is exact for equal directions
    diff = a / na - b / nb
    return float(np.clip(-0.5 * np.dot(diff, diff), -2.0, 0.0))


def score_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise comparator scores between rows of A and rows of B."""
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise ComparisonError("zero-norm vector has no direction")
    return _score_from_cos((A / na[:, None]) @ (B / nb[:, None]).T)


# --- parameter generation ----------------------------------------------------


def _nonzero_pool(coeff_range) -> np.ndarray:
    lo, hi = (int(x) for x in coeff_range)
    if lo > hi:
        raise ConfigError(f"empty coefficient range [{lo}, {hi}]")
    pool = np.arange(lo, hi + 1)
    return pool[pool != 0]


def _draw_batch(rng, count, m, pool):
    """`count` candidate (C, E) rows: C a uniform ordered m-subset of `pool`,
    E a uniform permutation of 1..m."""
    keys = rng.random((count, pool.size))
    C = pool[np.argsort(keys, axis=1)[:, :m]]
    E = np.argsort(rng.random((count, m)), axis=1) + 1
    return C, E


def _check_generation(m, overlap, coeff_range):
    pool = _nonzero_pool(coeff_range)
    if pool.size < m:
        raise ConfigError(f"range {tuple(coeff_range)} has {pool.size} non-zero integers, need {m}")
    if not 0 <= overlap <= m - 1:
        raise ConfigError(f"overlap must lie in [0, {m - 1}], got {overlap}")
    return pool


def generate_params_naive(m=DEFAULT_M, overlap=0, coeff_range=DEFAULT_COEFF_RANGE, owner_id="", rng=None) -> PolyParams:
    pool = _check_generation(m, overlap, coeff_range)
    C, E = _draw_batch(as_generator(rng), 1, m, pool)
    return PolyParams(tuple(C[0].tolist()), tuple(E[0].tolist()), overlap, owner_id)


@dataclass(frozen=True)
class StrictSelection:
    params: PolyParams
    tolerance: float
    attempts: int


def generate_params_strict(
    v,
    previous,
    target_range: ScoreRange,
    m=DEFAULT_M,
    overlap=0,
    coeff_range=DEFAULT_COEFF_RANGE,
    owner_id="",
    rng=None,
    max_tries_per_relaxation=100,
    relaxation_step=0.01,
) -> StrictSelection:
    """Draw random parameters until the candidate template of `v` scores
    inside `target_range` (widened by the current tolerance) against the
    template of `v` under every previously accepted parameter set.

    Candidates come in blocks of `max_tries_per_relaxation`; the first
    acceptable one in draw order wins, and a block without any raises the
    tolerance by `relaxation_step`.
    """
    if max_tries_per_relaxation < 1 or relaxation_step <= 0:
        raise ConfigError("max_tries_per_relaxation must be >= 1 and relaxation_step > 0")
    pool = _check_generation(m, overlap, coeff_range)
    rng = as_generator(rng)
    values = np.asarray(getattr(v, "values", v), dtype=np.float64)
    previous = list(previous)
    if not previous:
        return StrictSelection(generate_params_naive(m, overlap, coeff_range, owner_id, rng), 0.0, 1)

    idx = window_indices(values.size, m, overlap)
    windows = np.append(values, 0.0)[idx]  # (k, m); padded slots read 0
    # table[j, i, e - 1] = windows[j, i] ** e
    table = windows[:, :, None] ** np.arange(1, m + 1)[None, None, :]
    slot = np.arange(m)[None, :]
    prior = np.vstack([protect_matrix(values, p) for p in previous])
    prior = prior / np.linalg.norm(prior, axis=1, keepdims=True)
    seen = {(p.C, p.E) for p in previous}

    block = 0
    while True:
        tol = block * relaxation_step
        if tol > 2.0:
            raise ExhaustionError(f"no acceptable parameters after {block * max_tries_per_relaxation} attempts")
        C, E = _draw_batch(rng, max_tries_per_relaxation, m, pool)
        cand = np.einsum("kbm,bm->bk", table[:, slot, E - 1], C.astype(np.float64))
        norms = np.linalg.norm(cand, axis=1)
        usable = (norms > 0) & np.all(np.isfinite(cand), axis=1)
        scores = _score_from_cos((cand / np.where(usable, norms, 1.0)[:, None]) @ prior.T)
        ok = usable & np.all((scores >= target_range.low - tol) & (scores <= target_range.high + tol), axis=1)
        for i in np.flatnonzero(ok):
            key = (tuple(C[i].tolist()), tuple(E[i].tolist()))
            if key not in seen:
                params = PolyParams(key[0], key[1], overlap, owner_id)
                return StrictSelection(params, tol, block * max_tries_per_relaxation + int(i) + 1)
        block += 1


# --- JSON helpers ------------------------------------------------------------


def dumps(obj) -> str:
    return json.dumps(obj, allow_nan=False)


def params_list_from_json(text: str) -> list[PolyParams]:
    data = json.loads(text)
    if isinstance(data, dict):
        data = [data]
    return [PolyParams.from_dict(d) for d in data]
