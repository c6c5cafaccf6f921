"""Full-disclosure inversion attacks on protected templates.

The attacker gets templates, their exact parameters and per-element guess
distributions. True embeddings never reach the solver; they are only used
afterwards by `score_recovery` to decide whether a recovered vector would
be accepted by the unprotected system.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._random import substream
from .core import compare
from .data import ElementDistributions, sample_vectors
from .errors import ComparisonError, ConfigError, ProtocolError, SolverInputError
from .solver import SolverConfig, SolverResult, build_inversion_system, solve_lm

log = logging.getLogger(__name__)

THRESHOLD_LABELS = ("strict", "common", "lenient")
LABEL_FMR = {"strict": 1e-4, "common": 1e-3, "lenient": 1e-2}


@dataclass(frozen=True, eq=False)
class AttackConfig:
    guess_source: ElementDistributions
    thresholds: dict[str, float]
    n_guesses: int = 100
    solver: SolverConfig = field(default_factory=SolverConfig)
    p_range: tuple[int, ...] = tuple(range(1, 11))
    seed: int = 0

    def __post_init__(self):
        if self.n_guesses < 1:
            raise ConfigError("n_guesses must be >= 1")
        for label, t in self.thresholds.items():
            if not -2.0 <= t <= 0.0:
                raise ConfigError(f"threshold {label}={t} outside [-2, 0]")
        if any(p < 1 for p in self.p_range):
            raise ConfigError("p values must be >= 1")


@dataclass
class AttackReport:
    overlap: int
    p: int
    n_targets: int
    solution_rate: float
    match_rate: dict[str, float]
    inversion_success_rate: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "overlap": self.overlap,
            "p": self.p,
            "n_targets": self.n_targets,
            "solution_rate": self.solution_rate,
            "match_rate": dict(self.match_rate),
            "inversion_success_rate": dict(self.inversion_success_rate),
        }


@dataclass(frozen=True, eq=False)
class Target:
    """One attacked embedding: its true vector (scoring only) and the
    templates/parameters the attacker holds."""

    true_vector: np.ndarray
    templates: tuple
    params: tuple


def _guesses(cfg: AttackConfig, stream: int) -> np.ndarray:
    return sample_vectors(cfg.guess_source, cfg.n_guesses, substream(cfg.seed, stream))


def invert_arm(templates, params_list, cfg: AttackConfig, stream: int = 0) -> SolverResult:
    """Stack the equations of several templates of one embedding and solve."""
    templates, params_list = list(templates), list(params_list)
    if not templates:
        raise SolverInputError("at least one template required")
    dims = {t.source_dim for t in templates}
    if len(dims) != 1:
        raise SolverInputError(f"templates come from different dimensionalities: {sorted(dims)}")
    n = dims.pop()
    if len(cfg.guess_source) != n:
        raise SolverInputError(f"guess distributions cover {len(cfg.guess_source)} elements, templates need {n}")
    system = build_inversion_system(templates, params_list, n)
    return solve_lm(system, _guesses(cfg, stream), cfg.solver)


def invert_single(template, params, cfg: AttackConfig, stream: int = 0) -> SolverResult:
    return invert_arm([template], [params], cfg, stream)


def score_recovery(recovered: np.ndarray, true_vector: np.ndarray, thresholds: dict[str, float]):
    """Comparator score of the recovered vector against the truth and the
    per-threshold match decision. Zero-norm vectors never match."""
    try:
        score = compare(recovered, true_vector)
    except ComparisonError:
        log.info("zero-norm vector in recovery scoring; counted as non-match")
        return None, {label: False for label in thresholds}
    return score, {label: score >= t for label, t in thresholds.items()}


def _attack_target(args):
    target, p, cfg, stream = args
    result = invert_arm(target.templates[:p], target.params[:p], cfg, stream)
    if not result.success:
        return False, None, {label: False for label in cfg.thresholds}
    score, matched = score_recovery(result.solution, target.true_vector, cfg.thresholds)
    return True, score, matched


def summarize(outcomes, overlap: int, p: int, labels) -> AttackReport:
    n = len(outcomes)
    successes = [o for o in outcomes if o[0]]
    solution_rate = len(successes) / n
    match_rate = {
        label: (sum(o[2][label] for o in successes) / len(successes)) if successes else 0.0 for label in labels
    }
    isr = {label: solution_rate * match_rate[label] for label in labels}
    return AttackReport(overlap, p, n, solution_rate, match_rate, isr)


def run_campaign(targets, cfg: AttackConfig, p: int = 1, workers: int = 1, return_outcomes=False):
    """Attack every target with its first `p` templates.

    Each target draws its guesses from its own substream, so the report is
    identical for any number of workers.
    """
    targets = [t if isinstance(t, Target) else Target(np.asarray(t[0]), tuple(t[1]), tuple(t[2])) for t in targets]
    if not targets:
        raise ProtocolError("no targets to attack")
    if any(len(t.templates) < p for t in targets):
        raise ProtocolError(f"every target needs at least {p} templates")
    overlaps = {tp.overlap for t in targets for tp in t.templates[:p]}
    if len(overlaps) != 1:
        raise ProtocolError(f"mixed overlaps in campaign: {sorted(overlaps)}")
    jobs = [(t, p, cfg, i) for i, t in enumerate(targets)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_attack_target, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        outcomes = [_attack_target(job) for job in jobs]
    report = summarize(outcomes, overlaps.pop(), p, list(cfg.thresholds))
    return (report, outcomes) if return_outcomes else report
