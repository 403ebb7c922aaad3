import math

import numpy as np
import pytest

from phasekaczmarz.errors import ContractViolation, DomainError
from phasekaczmarz.geometry import (
    SeededRng,
    dist_up_to_sign,
    geodesic_frac,
    sample_unit_sphere,
    sample_unit_sphere_batch,
    sigma,
)


@pytest.mark.parametrize('w, expected', [(3.2, 1.0), (-0.5, -1.0), (0.0, 1.0)])
def test_sigma_examples(w, expected):
    assert sigma(w) == expected


def test_sigma_recovers_value(rng):
    for w in rng.standard_normal(1000) * 10:
        assert sigma(w) * abs(w) == w


def test_dist_examples():
    assert dist_up_to_sign([1, 0], [1, 0]) == 0.0
    assert dist_up_to_sign([1, 0], [-1, 0]) == 0.0
    assert dist_up_to_sign([1, 0], [0, 1]) == pytest.approx(math.sqrt(2))


def test_dist_symmetries(rng):
    for _ in range(200):
        u = rng.standard_normal(5)
        v = rng.standard_normal(5)
        d = dist_up_to_sign(u, v)
        assert dist_up_to_sign(v, u) == pytest.approx(d, abs=1e-15)
        assert dist_up_to_sign(-u, v) == pytest.approx(d, abs=1e-15)
        assert d <= np.linalg.norm(u - v)


def test_dist_dimension_mismatch():
    with pytest.raises(ContractViolation):
        dist_up_to_sign([1, 0], [1, 0, 0])


def test_geodesic_examples():
    assert geodesic_frac([1, 0], [0, 1]) == pytest.approx(0.5)
    assert geodesic_frac([2, 3], [2, 3]) == pytest.approx(0.0, abs=1e-7)
    assert geodesic_frac([1, 0], [-1, 0]) == 1.0


def test_geodesic_scale_invariant(rng):
    for _ in range(100):
        x = rng.standard_normal(4)
        y = rng.standard_normal(4)
        a, b = rng.uniform(0.1, 10.0, size=2)
        assert geodesic_frac(a * x, b * y) == pytest.approx(geodesic_frac(x, y), abs=1e-12)


def test_geodesic_rejects_zero():
    with pytest.raises(DomainError):
        geodesic_frac([0, 0], [1, 0])


def test_sphere_d1_is_balanced():
    rng = SeededRng(3)
    draws = np.array([sample_unit_sphere(1, rng)[0] for _ in range(10_000)])
    assert set(np.unique(draws)) == {-1.0, 1.0}
    assert abs(np.mean(draws > 0) - 0.5) < 0.03


def test_sphere_unit_norm():
    v = sample_unit_sphere(3, SeededRng(7))
    assert abs(np.linalg.norm(v) - 1.0) < 1e-12
    batch = sample_unit_sphere_batch(1000, 17, SeededRng(7))
    assert np.all(np.abs(np.linalg.norm(batch, axis=1) - 1.0) < 1e-12)


def test_sphere_first_coordinate_centered():
    batch = sample_unit_sphere_batch(10**6, 8, SeededRng(11))
    assert -0.004 < np.mean(batch[:, 0]) < 0.004


def test_seed_replay_is_bit_exact():
    a = sample_unit_sphere_batch(50, 6, SeededRng(99))
    b = sample_unit_sphere_batch(50, 6, SeededRng(99))
    assert np.array_equal(a, b)


def test_children_are_pure_and_distinct():
    base = SeededRng(5)
    first = base.child(3).standard_normal(4)
    base.standard_normal(100)  # advancing the parent changes nothing
    assert np.array_equal(first, SeededRng(5).child(3).standard_normal(4))
    assert not np.array_equal(first, SeededRng(5).child(4).standard_normal(4))


@pytest.mark.parametrize('seed', [-1, 2**64, 1.5, True])
def test_seed_validation(seed):
    with pytest.raises(ContractViolation):
        SeededRng(seed)
