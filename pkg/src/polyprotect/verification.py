"""Verification accuracy of protected systems: score protocols, threshold
calibration and ROC / TMR reporting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._random import as_generator
from .core import DEFAULT_COEFF_RANGE, DEFAULT_M, generate_params_naive, protect_matrix, score_matrix
from .errors import CalibrationError, ConfigError, ProtocolError

SCENARIOS = ("normal", "sce", "baseline")
FMR_TARGETS = (1e-4, 1e-3, 1e-2)


@dataclass(eq=False)
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=np.float64)
        self.impostor = np.asarray(self.impostor, dtype=np.float64)


@dataclass
class AccuracyReport:
    scenario: str
    overlap: int | None
    n_trials: int
    tmr_at_fmr: dict[float, float]
    roc: list[tuple[float, float]] = field(default_factory=list)
    thresholds: dict[float, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "overlap": self.overlap,
            "n_trials": self.n_trials,
            "tmr_at_fmr": {repr(float(k)): float(v) for k, v in self.tmr_at_fmr.items()},
            "roc": [[float(a), float(b)] for a, b in self.roc],
        }


def _pair_scores(scores: np.ndarray, ref_subjects, query_subjects):
    same = np.asarray(ref_subjects)[:, None] == np.asarray(query_subjects)[None, :]
    return scores[same], scores[~same]


def _protect_by_subject(X, subjects, params):
    out = None
    for s in np.unique(subjects):
        rows = subjects == s
        block = protect_matrix(X[rows], params[s])
        if out is None:
            out = np.empty((X.shape[0], block.shape[1]))
        out[rows] = block
    return out


def run_scenario(
    corpus_ref,
    corpus_query,
    overlap=0,
    scenario="normal",
    n_trials=10,
    rng=None,
    m=DEFAULT_M,
    coeff_range=DEFAULT_COEFF_RANGE,
) -> ScoreSet:
    """Genuine and impostor scores over all reference/query pairs,
    concatenated over `n_trials` fresh draws of per-subject parameters.

    ``normal``: every template uses its own subject's parameters.
    ``sce``: each query is protected with the reference subject's parameters.
    ``baseline``: raw embeddings, repeated once per trial.
    """
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    if len(corpus_ref) == 0 or len(corpus_query) == 0:
        raise ProtocolError("reference and query corpora must be non-empty")
    if corpus_ref.dim != corpus_query.dim:
        raise ProtocolError(f"dimension mismatch: {corpus_ref.dim} vs {corpus_query.dim}")
    ref_subj = np.array(corpus_ref.subject_ids)
    qry_subj = np.array(corpus_query.subject_ids)
    missing = sorted(set(qry_subj) - set(ref_subj))
    if missing:
        raise ProtocolError(f"query subjects without references: {missing[:5]}")
    R, Q = corpus_ref.matrix(), corpus_query.matrix()

    if scenario == "baseline":
        gen, imp = _pair_scores(score_matrix(R, Q), ref_subj, qry_subj)
        return ScoreSet(np.tile(gen, n_trials), np.tile(imp, n_trials))

    rng = as_generator(rng)
    subjects = sorted(set(ref_subj) | set(qry_subj))
    genuine, impostor = [], []
    for _ in range(n_trials):
        params = {s: generate_params_naive(m, overlap, coeff_range, s, rng) for s in subjects}
        PR = _protect_by_subject(R, ref_subj, params)
        if scenario == "normal":
            scores = score_matrix(PR, _protect_by_subject(Q, qry_subj, params))
        else:
            scores = np.empty((len(R), len(Q)))
            for s in sorted(set(ref_subj)):
                rows = ref_subj == s
                scores[rows] = score_matrix(PR[rows], protect_matrix(Q, params[s]))
        gen, imp = _pair_scores(scores, ref_subj, qry_subj)
        genuine.append(gen)
        impostor.append(imp)
    return ScoreSet(np.concatenate(genuine), np.concatenate(impostor))


def threshold_at_fmr(impostor, fmr_target: float) -> float:
    """Smallest observed-score threshold t with ``#(impostor >= t) / N <= fmr_target``.

    If every observed score would still match too often (ties at the
    maximum), the next float above the maximum is returned.
    """
    s = np.sort(np.asarray(impostor, dtype=np.float64))
    if s.size == 0:
        raise CalibrationError("no impostor scores to calibrate on")
    if not 0.0 < fmr_target < 1.0:
        raise CalibrationError(f"FMR target must lie in (0, 1), got {fmr_target}")
    candidates = np.unique(s)
    fmr = (s.size - np.searchsorted(s, candidates, side="left")) / s.size
    ok = np.nonzero(fmr <= fmr_target)[0]
    if ok.size:
        return float(candidates[ok[0]])
    return float(np.nextafter(s[-1], np.inf))


def _rate_at(scores: np.ndarray, t) -> np.ndarray:
    s = np.sort(scores)
    return (s.size - np.searchsorted(s, t, side="left")) / s.size


def fmr_at_threshold(impostor, t: float) -> float:
    impostor = np.asarray(impostor, dtype=np.float64)
    if impostor.size == 0:
        raise CalibrationError("no impostor scores")
    return float(_rate_at(impostor, t))


def tmr_at_threshold(genuine, t: float) -> float:
    genuine = np.asarray(genuine, dtype=np.float64)
    if genuine.size == 0:
        raise CalibrationError("no genuine scores")
    return float(_rate_at(genuine, t))


def roc_points(scores: ScoreSet, n_points: int = 200) -> list[tuple[float, float]]:
    """(FMR, TMR) pairs over thresholds drawn from the observed scores,
    ordered by increasing FMR. The endpoint above every score, (0, 0), is
    always included."""
    if scores.genuine.size == 0 or scores.impostor.size == 0:
        raise CalibrationError("ROC needs genuine and impostor scores")
    if n_points < 2:
        raise ConfigError("n_points must be >= 2")
    observed = np.unique(np.concatenate([scores.genuine, scores.impostor]))
    thresholds = observed
    if thresholds.size > n_points - 1:
        pick = np.unique(np.round(np.linspace(0, thresholds.size - 1, n_points - 1)).astype(int))
        thresholds = thresholds[pick]
    thresholds = np.append(thresholds, np.nextafter(observed[-1], np.inf))[::-1]
    fmr = _rate_at(scores.impostor, thresholds)
    tmr = _rate_at(scores.genuine, thresholds)
    return [(float(a), float(b)) for a, b in zip(fmr, tmr)]


def accuracy_report(dev: ScoreSet, evaluation: ScoreSet, scenario, overlap, n_trials, fmr_targets=FMR_TARGETS, n_points=200):
    """Thresholds calibrated on development impostors, rates measured on evaluation scores."""
    thresholds = {f: threshold_at_fmr(dev.impostor, f) for f in fmr_targets}
    tmr = {f: tmr_at_threshold(evaluation.genuine, t) for f, t in thresholds.items()}
    return AccuracyReport(scenario, overlap, n_trials, tmr, roc_points(evaluation, n_points), thresholds)
