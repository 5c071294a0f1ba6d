import json
import math

import numpy as np
import pytest

from clmda.driver import structural
from clmda.exceptions import CholeskyError, DegenerateFit, DimensionError, InputError
from clmda.loglik import category_probs
from clmda.simulate import (
    REFERENCE_SIGMA,
    REFERENCE_V,
    Population,
    StudyDesign,
    reference_population,
    extend_V_by_rotation,
    gen_dataset,
    recovery_delta,
    rotation,
    run_study,
    study_csv,
    summarize,
)

M5 = np.array([-2.0, -1.5, -1.0, -0.5])


def test_null_population_frequencies():
    pop = Population(np.zeros((2, 2)), np.ones((3, 2)), np.eye(2), M5)
    N = 100000
    _, ds, theta = gen_dataset(pop, N, np.random.default_rng(0))
    assert np.all(theta == 0)
    pi = category_probs(0.0, M5)
    se = np.sqrt(pi * (1 - pi) / N)
    for r in range(3):
        freq = np.bincount(ds.codes[:, r], minlength=6)[1:] / N
        assert np.all(np.abs(freq - pi) < 3 * se)


def test_frequencies_match_model_probabilities():
    pop = reference_population()
    N = 100000
    _, ds, theta = gen_dataset(pop, N, np.random.default_rng(1), R=4, C=5)
    for r in range(4):
        expected = category_probs(theta[:, r], M5).mean(axis=0)
        se = np.sqrt(expected * (1 - expected) / N)
        freq = np.bincount(ds.codes[:, r], minlength=6)[1:] / N
        assert np.all(np.abs(freq - expected) < 3 * se)


def test_proximity_theta_nonpositive():
    _, ds, theta = gen_dataset(reference_population("proximity"), 500, np.random.default_rng(2))
    assert np.all(theta <= 0)
    assert ds.cats == (3,) * 8


def test_sample_covariance():
    X, _, _ = gen_dataset(reference_population(), 100000, np.random.default_rng(3), R=4)
    S = np.cov(X.values, rowvar=False)
    assert abs(S[1, 2] - (-0.59)) < 0.02
    assert np.max(np.abs(S - REFERENCE_SIGMA)) < 0.03


def test_rotation_examples():
    out = extend_V_by_rotation(np.array([[1.0, 0.0]]))
    np.testing.assert_allclose(out[1], [math.sqrt(0.5), math.sqrt(0.5)], atol=1e-15)
    twice = extend_V_by_rotation(out[1:])[1]
    np.testing.assert_allclose(twice, [0.0, 1.0], atol=1e-15)
    with pytest.raises(DimensionError):
        extend_V_by_rotation(np.ones((2, 3)))
    np.testing.assert_allclose(rotation(0.3) @ rotation(-0.3), np.eye(2), atol=1e-15)


def test_printed_rows_are_a_radian_rotation():
    base = REFERENCE_V[:4]
    by_radians = extend_V_by_rotation(base, -45.0)[4:]
    assert np.max(np.abs(by_radians - REFERENCE_V[4:])) < 0.01
    by_degrees = extend_V_by_rotation(base)[4:]
    assert np.max(np.abs(by_degrees - REFERENCE_V[4:])) > 0.5


def test_recovery_delta_examples():
    rng = np.random.default_rng(4)
    t = rng.standard_normal((6, 3))
    assert recovery_delta(t, t) == 0.0
    assert recovery_delta(np.zeros((6, 3)), t) == pytest.approx(1.0, abs=1e-15)
    h = rng.standard_normal((6, 3))
    num = sum((t[i, r] - h[i, r]) ** 2 for i in range(6) for r in range(3))
    den = sum(h[i, r] ** 2 for i in range(6) for r in range(3))
    assert abs(recovery_delta(t, h) - math.sqrt(num / den)) < 1e-12
    with pytest.raises(DegenerateFit):
        recovery_delta(t, np.zeros_like(t))
    with pytest.raises(DimensionError):
        recovery_delta(t, t[:2])


def test_recovery_delta_rotation_invariant():
    rng = np.random.default_rng(5)
    U, V = rng.standard_normal((20, 2)), rng.standard_normal((5, 2))
    truth = rng.standard_normal((20, 5))
    G = rotation(1.1)
    for family in ("dominance", "proximity"):
        a = recovery_delta(truth, structural(U, V, family))
        b = recovery_delta(truth, structural(U @ G.T, V @ G.T, family))
        assert abs(a - b) < 1e-12


def test_cholesky_error():
    Sigma = np.array([[1.0, 2.0], [2.0, 1.0]])
    pop = Population(np.zeros((2, 2)), np.ones((3, 2)), Sigma, M5)
    with pytest.raises(CholeskyError):
        gen_dataset(pop, 10, np.random.default_rng(0))


def test_population_round_trip():
    pop = reference_population("proximity")
    back = Population.from_dict(json.loads(json.dumps(pop.to_dict())))
    assert back.to_dict() == pop.to_dict()
    np.testing.assert_array_equal(back.thresholds_for(5), M5)
    with pytest.raises(InputError):
        pop.thresholds_for(4)


def _design(**kw):
    base = dict(N_levels=(120, 200), C_levels=(3,), R_levels=(4,), replications=2, seed=7, families=("dominance",), max_outer=100)
    base.update(kw)
    return StudyDesign(**base)


def test_study_deterministic():
    pop = reference_population()
    a = study_csv(run_study(pop, _design()))
    b = study_csv(run_study(pop, _design()))
    assert a == b
    assert a.splitlines()[0] == "N,R,C,family,rep,delta,seconds,converged"
    assert len(a.splitlines()) == 1 + 4


def test_study_order_independent():
    pop = reference_population()
    a = {r.key: r.delta for r in run_study(pop, _design())}
    b = {r.key: r.delta for r in run_study(pop, _design(N_levels=(200, 120)))}
    assert a == b


def test_study_design_counts():
    d = StudyDesign(replications=200, families=("dominance", "proximity"))
    assert len(d.conditions("dominance")) == 12
    with pytest.raises(InputError):
        StudyDesign(replications=0)
    with pytest.raises(InputError):
        StudyDesign.from_dict({"replicates": 3})
    assert StudyDesign.from_dict(d.to_dict()) == d


def test_summarize_medians():
    rows = run_study(reference_population(), _design(replications=3))
    summary = summarize(rows)
    assert len(summary) == 2
    for s in summary:
        deltas = [r.delta for r in rows if (r.N, r.R, r.C) == (s["N"], s["R"], s["C"])]
        assert s["median_delta"] == pytest.approx(float(np.median(deltas)))
