"""Inversion and record-multiplicity attacks, and campaign accounting."""

import json

import numpy as np
import pytest

from polyprotect.attack import (
    AttackConfig,
    Target,
    invert_arm,
    invert_single,
    run_campaign,
    score_recovery,
    summarize,
)
from polyprotect.core import generate_params_naive, protect
from polyprotect.data import ElementDistributions, Histogram, estimate_element_distributions
from polyprotect.errors import ConfigError, ProtocolError, SolverInputError
from polyprotect.solver import build_inversion_system

THRESHOLDS = {"strict": -0.2, "common": -0.3, "lenient": -0.4}


@pytest.fixture(scope="module")
def guess_source(small_corpus):
    return estimate_element_distributions(small_corpus, bins=20)


def make_target(v, overlap, p, seed):
    rng = np.random.default_rng(seed)
    params = []
    while len(params) < p:
        q = generate_params_naive(overlap=overlap, rng=rng)
        if q not in params:
            params.append(q)
    return Target(v, tuple(protect(v, q) for q in params), tuple(params))


def point_mass(n, value=0.0):
    return ElementDistributions(tuple(Histogram(np.array([value, value]), np.array([1.0])) for _ in range(n)))


def test_config_validation(guess_source):
    with pytest.raises(ConfigError):
        AttackConfig(guess_source, THRESHOLDS, n_guesses=0)
    with pytest.raises(ConfigError):
        AttackConfig(guess_source, {"common": 0.5})
    with pytest.raises(ConfigError):
        AttackConfig(guess_source, THRESHOLDS, p_range=(0, 1))


def test_zero_target_counts_as_non_match():
    cfg = AttackConfig(point_mass(16), THRESHOLDS, n_guesses=3)
    target = make_target(np.zeros(16), 2, 1, 0)
    report, outcomes = run_campaign([target], cfg, return_outcomes=True)
    success, score, matched = outcomes[0]
    assert success and score is None and not any(matched.values())
    assert report.solution_rate == 1.0 and report.match_rate["common"] == 0.0


def test_score_recovery_rule():
    v = np.array([1.0, 0.0])
    score, matched = score_recovery(np.array([1.0, 0.1]), v, THRESHOLDS)
    assert score == pytest.approx(np.cos(np.arctan(0.1)) - 1)
    assert all(matched.values())
    _, matched = score_recovery(np.array([-1.0, 0.0]), v, THRESHOLDS)
    assert not any(matched.values())


def test_arm_with_one_template_is_single(small_corpus, guess_source):
    v = small_corpus.embeddings[0].values
    target = make_target(v, 3, 1, 4)
    cfg = AttackConfig(guess_source, THRESHOLDS, n_guesses=5, seed=9)
    a = build_inversion_system(target.templates, target.params, v.size)
    b = build_inversion_system([target.templates[0]], [target.params[0]], v.size)
    assert a.equals(b)
    ra = invert_arm(target.templates, target.params, cfg, stream=2)
    rb = invert_single(target.templates[0], target.params[0], cfg, stream=2)
    assert ra.success == rb.success and np.array_equal(ra.solution, rb.solution)


def test_inconsistent_stack_fails(small_corpus, guess_source):
    v1, v2 = small_corpus.embeddings[0].values, small_corpus.embeddings[20].values
    t1, t2 = make_target(v1, 4, 1, 0), make_target(v2, 4, 1, 1)
    cfg = AttackConfig(guess_source, THRESHOLDS, n_guesses=5)
    result = invert_arm(t1.templates + t2.templates, t1.params + t2.params, cfg)
    assert not result.success and result.residual_norm > cfg.solver.residual_tolerance


def test_arm_input_checks(small_corpus, guess_source):
    cfg = AttackConfig(guess_source, THRESHOLDS, n_guesses=2)
    target = make_target(small_corpus.embeddings[0].values, 1, 1, 0)
    with pytest.raises(SolverInputError):
        invert_arm([], [], cfg)
    other = make_target(np.ones(40), 1, 1, 0)
    with pytest.raises(SolverInputError):
        invert_arm(target.templates + other.templates, target.params + other.params, cfg)
    with pytest.raises(SolverInputError):
        invert_single(other.templates[0], other.params[0], cfg)


@pytest.mark.parametrize(
    "outcomes, solution, match",
    [
        ([(False, None, {"common": False})] * 4, 0.0, 0.0),
        ([(True, 0.0, {"common": True})] * 4, 1.0, 1.0),
        ([(True, 0.0, {"common": True}), (True, -1.0, {"common": False}), (False, None, {"common": False})], 2 / 3, 0.5),
    ],
)
def test_summarize(outcomes, solution, match):
    report = summarize(outcomes, overlap=2, p=1, labels=["common"])
    assert report.solution_rate == solution and report.match_rate["common"] == match
    assert report.inversion_success_rate["common"] == report.solution_rate * report.match_rate["common"]


def test_campaign_report(small_corpus, guess_source):
    targets = [make_target(e.values, 4, 2, i) for i, e in enumerate(small_corpus.embeddings[:6])]
    cfg = AttackConfig(guess_source, THRESHOLDS, n_guesses=10, seed=3)
    report = run_campaign(targets, cfg, p=2)
    d = json.loads(json.dumps(report.to_dict()))
    assert set(d) == {"overlap", "p", "n_targets", "solution_rate", "match_rate", "inversion_success_rate"}
    assert d["n_targets"] == 6 and d["p"] == 2 and d["overlap"] == 4
    for label in THRESHOLDS:
        assert report.inversion_success_rate[label] == report.solution_rate * report.match_rate[label]
    assert report.match_rate["strict"] <= report.match_rate["common"] <= report.match_rate["lenient"]
    # tuples are accepted in place of Target objects
    as_tuples = [(t.true_vector, t.templates, t.params) for t in targets]
    assert run_campaign(as_tuples, cfg, p=2) == report


def test_campaign_independent_of_workers(small_corpus, guess_source):
    targets = [make_target(e.values, 2, 1, i) for i, e in enumerate(small_corpus.embeddings[:4])]
    cfg = AttackConfig(guess_source, THRESHOLDS, n_guesses=4, seed=1)
    _, serial = run_campaign(targets, cfg, workers=1, return_outcomes=True)
    _, parallel = run_campaign(targets, cfg, workers=2, return_outcomes=True)
    assert serial == parallel


def test_campaign_errors(small_corpus, guess_source):
    cfg = AttackConfig(guess_source, THRESHOLDS, n_guesses=2)
    with pytest.raises(ProtocolError):
        run_campaign([], cfg)
    v = small_corpus.embeddings[0].values
    with pytest.raises(ProtocolError):
        run_campaign([make_target(v, 1, 1, 0)], cfg, p=2)
    with pytest.raises(ProtocolError):
        run_campaign([make_target(v, 1, 1, 0), make_target(v, 2, 1, 0)], cfg)
