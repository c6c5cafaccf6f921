"""Linkability of protected templates across enrolments.

Mated scores compare two templates of the same subject made with different
parameters; non-mated scores compare templates of different subjects. The
local measure D(s) and the global D_sys follow the likelihood-ratio
framework of Gomez-Barrero et al. (IEEE TIFS 2018).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ._random import as_generator
from .core import (
    DEFAULT_COEFF_RANGE,
    DEFAULT_M,
    ScoreRange,
    generate_params_naive,
    generate_params_strict,
    protect_matrix,
    score_matrix,
)
from .errors import ConfigError, ProtocolError

PARAM_MODES = ("naive", "strict", "baseline")
UNLINKABLE_CUTOFF = 0.05


@dataclass(eq=False)
class MatedScores:
    mated: np.ndarray
    non_mated: np.ndarray
    tolerances: list[float] = field(default_factory=list)  # strict mode only

    def __post_init__(self):
        self.mated = np.asarray(self.mated, dtype=np.float64)
        self.non_mated = np.asarray(self.non_mated, dtype=np.float64)


@dataclass
class LinkabilityReport:
    d_curve: list[tuple[float, float]]
    d_sys: float
    unlink_range: ScoreRange
    bins: int
    overlap: int | None = None

    def to_dict(self) -> dict:
        return {
            "overlap": self.overlap,
            "d_sys": self.d_sys,
            "bins": self.bins,
            "unlink_range": self.unlink_range.to_list(),
            "d_curve": [[float(s), float(d)] for s, d in self.d_curve],
        }


def _distinct_naive(values, taken, m, overlap, coeff_range, owner, rng):
    while True:
        params = generate_params_naive(m, overlap, coeff_range, owner, rng)
        if (params.C, params.E) not in taken:
            return params


def mated_protocol(
    corpus,
    overlap=0,
    templates_per_subject=10,
    n_trials=10,
    param_mode="naive",
    strict_range: ScoreRange | None = None,
    rng=None,
    m=DEFAULT_M,
    coeff_range=DEFAULT_COEFF_RANGE,
    max_tries_per_relaxation=100,
    relaxation_step=0.01,
) -> MatedScores:
    """Mated / non-mated scores over `n_trials` trials.

    Each trial samples `templates_per_subject` distinct embeddings per
    subject and protects each with its own parameters. Scores come from all
    unordered template pairs: same-subject pairs are mated, cross-subject
    pairs non-mated. ``baseline`` compares the raw embeddings instead.
    """
    if param_mode not in PARAM_MODES:
        raise ConfigError(f"unknown parameter mode {param_mode!r}")
    if param_mode == "strict" and strict_range is None:
        raise ConfigError("strict mode needs a score range")
    if templates_per_subject < 2 or n_trials < 1:
        raise ConfigError("need templates_per_subject >= 2 and n_trials >= 1")
    groups = corpus.sorted().by_subject()
    if len(groups) < 2:
        raise ProtocolError("need at least two subjects")
    short = [s for s, items in groups.items() if len(items) < templates_per_subject]
    if short:
        raise ProtocolError(f"subjects with fewer than {templates_per_subject} samples: {short[:5]}")
    rng = as_generator(rng)

    n_subj = len(groups)
    labels = np.repeat(np.arange(n_subj), templates_per_subject)
    upper = np.triu(np.ones((labels.size, labels.size), dtype=bool), k=1)
    same = labels[:, None] == labels[None, :]
    mated_mask, non_mated_mask = upper & same, upper & ~same

    mated, non_mated, tolerances = [], [], []
    for _ in range(n_trials):
        rows = []
        for subject, items in groups.items():
            pick = rng.choice(len(items), size=templates_per_subject, replace=False)
            X = np.stack([items[i].values for i in pick])
            if param_mode == "baseline":
                rows.append(X)
                continue
            accepted, block = [], []
            for x in X:
                if param_mode == "naive":
                    taken = {(p.C, p.E) for p in accepted}
                    params = _distinct_naive(x, taken, m, overlap, coeff_range, subject, rng)
                else:
                    sel = generate_params_strict(
                        x, accepted, strict_range, m, overlap, coeff_range, subject, rng,
                        max_tries_per_relaxation, relaxation_step,
                    )
                    params = sel.params
                    tolerances.append(sel.tolerance)
                accepted.append(params)
                block.append(protect_matrix(x, params)[0])
            rows.append(np.stack(block))
        S = score_matrix(np.vstack(rows), np.vstack(rows))
        mated.append(S[mated_mask])
        non_mated.append(S[non_mated_mask])
    return MatedScores(np.concatenate(mated), np.concatenate(non_mated), tolerances)


def linkability_curve(scores: MatedScores, bins=100, omega=1.0, cutoff=UNLINKABLE_CUTOFF, overlap=None) -> LinkabilityReport:
    """Histogram likelihood ratio between mated and non-mated scores.

    Both distributions share `bins` equal-width bins over the combined score
    span. Per bin, D(s) = 2 * wLR / (1 + wLR) - 1 where wLR > 1 and 0
    otherwise; bins holding mated but no non-mated scores have D(s) = 1.
    D_sys is D(s) weighted by the mated probability mass. The unlinkable
    range is the widest run of consecutive bins with D(s) <= `cutoff`.
    """
    mated, non_mated = scores.mated, scores.non_mated
    if mated.size == 0 or non_mated.size == 0:
        raise ProtocolError("linkability needs mated and non-mated scores")
    if bins < 2:
        raise ConfigError("bins must be >= 2")
    if omega <= 0:
        raise ConfigError("omega must be positive")
    lo = min(mated.min(), non_mated.min())
    hi = max(mated.max(), non_mated.max())
    if lo == hi:
        lo, hi = lo - 1e-9, hi + 1e-9
    edges = np.linspace(lo, hi, bins + 1)
    mass_m = np.histogram(mated, bins=edges)[0] / mated.size
    mass_n = np.histogram(non_mated, bins=edges)[0] / non_mated.size

    lr = np.divide(mass_m, mass_n, out=np.ones_like(mass_m), where=mass_n > 0)
    wlr = omega * lr
    D = np.where(wlr > 1.0, 2.0 * wlr / (1.0 + wlr) - 1.0, 0.0)
    D[(mass_n == 0) & (mass_m > 0)] = 1.0
    d_sys = float(np.clip(np.sum(D * mass_m), 0.0, 1.0))

    centers = (edges[:-1] + edges[1:]) / 2
    low_i, high_i = _widest_run(D <= cutoff)
    span = ScoreRange(float(np.clip(edges[low_i], -2.0, 0.0)), float(np.clip(edges[high_i + 1], -2.0, 0.0)))
    curve = [(float(s), float(d)) for s, d in zip(centers, D)]
    return LinkabilityReport(curve, d_sys, span, bins, overlap)


def _widest_run(ok: np.ndarray) -> tuple[int, int]:
    best, start = (0, -1), None
    for i, flag in enumerate(np.append(ok, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start > best[1] - best[0] + 1:
                best = (start, i - 1)
            start = None
    if best[1] < best[0]:
        raise ProtocolError("no unlinkable bin found")
    return best


def derive_unlink_range(dev_corpus, overlap=0, bins=100, omega=1.0, cutoff=UNLINKABLE_CUTOFF, **protocol) -> ScoreRange:
    """Score range of (near-)zero linkability measured on development data
    with naive parameter selection."""
    protocol.pop("param_mode", None)
    scores = mated_protocol(dev_corpus, overlap, param_mode="naive", **protocol)
    return linkability_curve(scores, bins, omega, cutoff, overlap).unlink_range


def pair_counts(n_subjects: int, templates_per_subject: int, n_trials: int = 1) -> tuple[int, int]:
    """(mated, non-mated) score counts produced by `mated_protocol`."""
    mated = n_subjects * len(list(combinations(range(templates_per_subject), 2)))
    non_mated = templates_per_subject**2 * n_subjects * (n_subjects - 1) // 2
    return mated * n_trials, non_mated * n_trials
