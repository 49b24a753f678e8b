import numpy as np
import pytest

from latentpriv.core_math import make_rng
from latentpriv.privatizer import accuracy, train_classifier
from latentpriv.scenarios import ScenarioSpec, generate_scenario, scenario_s1


def test_s1_geometry():
    spec = scenario_s1()
    assert (spec.d, spec.n_private, spec.n_utility, spec.m) == (10, 2, 2, 8000)
    assert abs(spec.weights.sum() - 1) <= 1e-12


def test_s1_is_separable_by_fresh_classifier():
    train, test = generate_scenario(scenario_s1()).split(0.75)
    rng = make_rng(0, "sep")
    priv = train_classifier(train.points, train.private_labels, 2, rng)
    util = train_classifier(train.points, train.utility_labels, 2, rng)
    assert accuracy(priv, test.points, test.private_labels) >= 0.95
    assert accuracy(util, test.points, test.utility_labels) >= 0.95


def test_zero_size_rejected():
    with pytest.raises(ValueError):
        scenario_s1(m=0)


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        ScenarioSpec("bad", np.zeros((2, 1, 1)), np.ones((2, 1, 1)), np.array([[0.5], [0.6]]), 10)


def test_fixed_seed_gives_identical_bytes():
    a = generate_scenario(scenario_s1(m=500, seed=3))
    b = generate_scenario(scenario_s1(m=500, seed=3))
    assert a.points.tobytes() == b.points.tobytes()
    assert a.private_labels.tobytes() == b.private_labels.tobytes()
    c = generate_scenario(scenario_s1(m=500, seed=4))
    assert a.points.tobytes() != c.points.tobytes()
