import math
from collections import Counter

import numpy as np
import pytest

from maxqnorm.observation import (
    ObservationSet, SamplingDistribution, draw_indices, full_observation,
    noise_level_from_db, observe, read_observations_csv, split_train_validate,
    write_observations_csv)


def multiset(obs):
    return Counter((tuple(i), v) for i, v in zip(obs.indices.tolist(), obs.values.tolist()))


def test_draw_empty():
    assert draw_indices(SamplingDistribution((2, 2)), 0, seed=1).shape == (0, 2)


def test_draw_point_mass():
    w = np.zeros(8)
    w[5] = 1.0
    idx = draw_indices(SamplingDistribution((2, 2, 2), "explicit", w), 20, seed=0)
    assert np.all(idx == np.unravel_index(5, (2, 2, 2)))


def test_draw_uniform_frequencies():
    idx = draw_indices(SamplingDistribution((2, 2, 2)), 1000, seed=4)
    counts = np.bincount(np.ravel_multi_index(idx.T, (2, 2, 2)), minlength=8) / 1000
    assert np.all(np.abs(counts - 0.125) <= 0.05)


def test_draw_deterministic():
    dist = SamplingDistribution((3, 4))
    np.testing.assert_array_equal(draw_indices(dist, 50, 7), draw_indices(dist, 50, 7))


def test_distribution_validation():
    with pytest.raises(ValueError):
        SamplingDistribution((2, 2), "explicit", np.array([0.5, 0.5, 0.5, -0.5]))
    with pytest.raises(ValueError):
        SamplingDistribution((2, 2), "explicit", np.full(4, 0.3))
    with pytest.raises(ValueError):
        SamplingDistribution((2, 2), "explicit")
    assert SamplingDistribution((2, 5)).max_weight() == pytest.approx(0.1)


def test_observe_noiseless(rng):
    T = rng.standard_normal((3, 3, 3))
    idx = draw_indices(SamplingDistribution(T.shape), 40, seed=2)
    obs = observe(T, idx, sigma=0.0)
    np.testing.assert_array_equal(obs.values, T[tuple(idx.T)])


def test_observe_noise_moments():
    T = np.zeros((4, 4, 4))
    idx = draw_indices(SamplingDistribution(T.shape), 10_000, seed=1)
    obs = observe(T, idx, sigma=1.0, seed=2)
    assert abs(obs.values.mean()) <= 0.05
    assert 0.9 <= obs.values.var() <= 1.1


def test_observe_duplicates_get_independent_noise():
    obs = observe(np.zeros((2, 2)), np.array([[1, 1], [1, 1]]), sigma=1.0, seed=3)
    assert obs.values[0] != obs.values[1]


def test_observation_set_validation():
    with pytest.raises(ValueError):
        ObservationSet((2, 2), np.array([[0, 2]]), np.array([1.0]))
    with pytest.raises(ValueError):
        ObservationSet((2, 2), np.array([[0, 1]]), np.array([1.0, 2.0]))


def test_split_sizes_and_union(rng):
    T = rng.standard_normal((3, 3))
    obs = observe(T, draw_indices(SamplingDistribution(T.shape), 10, seed=5))
    train, valid = split_train_validate(obs, 0.8, seed=1)
    assert (train.m, valid.m) == (8, 2)
    assert multiset(train) + multiset(valid) == multiset(obs)
    assert set(train.slots).isdisjoint(valid.slots)
    train2, _ = split_train_validate(obs, 0.8, seed=1)
    np.testing.assert_array_equal(train.slots, train2.slots)


def test_split_rejects():
    obs = full_observation(np.ones((1, 1)))
    with pytest.raises(ValueError):
        split_train_validate(obs, 0.8)
    with pytest.raises(ValueError):
        split_train_validate(full_observation(np.ones((2, 2))), 1.0)


def test_noise_level_from_db():
    signs = np.where(np.random.default_rng(0).random((4, 4, 4)) > 0.5, 1.0, -1.0)
    assert noise_level_from_db(signs, 10) == pytest.approx(10 ** -0.5)
    assert noise_level_from_db(signs, 300) < 1e-14
    T = np.random.default_rng(1).standard_normal((3, 3))
    assert noise_level_from_db(2 * T, 10) == pytest.approx(2 * noise_level_from_db(T, 10))
    with pytest.raises(ValueError):
        noise_level_from_db(np.zeros((2, 2)), 10)


def test_csv_round_trip(tmp_path, rng):
    T = rng.standard_normal((3, 4, 2))
    obs = observe(T, draw_indices(SamplingDistribution(T.shape), 30, seed=1), 0.1, seed=2)
    path = tmp_path / "obs.csv"
    write_observations_csv(path, obs)
    assert path.read_text().splitlines()[0] == "i1,i2,i3,value"
    back = read_observations_csv(path, T.shape)
    np.testing.assert_array_equal(back.indices, obs.indices)
    np.testing.assert_array_equal(back.values, obs.values)


def test_csv_uses_one_based_indices(tmp_path):
    obs = ObservationSet((2, 2), np.array([[0, 1]]), np.array([math.pi]))
    path = tmp_path / "obs.csv"
    write_observations_csv(path, obs)
    assert path.read_text().splitlines()[1].startswith("1,2,")


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "obs.csv"
    path.write_text("a,b,value\n1,1,0.5\n")
    with pytest.raises(ValueError):
        read_observations_csv(path, (2, 2))
    path.write_text("i1,i2,value\n3,1,0.5\n")
    with pytest.raises(ValueError):
        read_observations_csv(path, (2, 2))
