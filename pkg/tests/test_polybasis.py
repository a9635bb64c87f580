"""Multi-index sets and monomial basis evaluation."""

import math

import numpy as np
import pytest

from mapmcmc.polybasis import eval_basis, total_degree_set


def test_cardinality_formula():
    for d in (1, 2, 3, 5):
        for i in range(d + 1):
            for ell in range(4):
                s = total_degree_set(d, i, ell)
                assert len(s) == math.comb(i + ell, i)


def test_enumeration_frozen_d3_i2_ell2():
    s = total_degree_set(3, 2, 2)
    expected = [
        (0, 0, 0),
        (0, 1, 0),
        (1, 0, 0),
        (0, 2, 0),
        (1, 1, 0),
        (2, 0, 0),
    ]
    assert [tuple(j) for j in s.indices] == expected


def test_graded_lex_order():
    s = total_degree_set(4, 3, 3)
    degrees = [int(j.sum()) for j in s.indices]
    assert degrees == sorted(degrees)
    # within a degree class, ascending tuple order
    for deg in set(degrees):
        block = [tuple(j) for j in s.indices if j.sum() == deg]
        assert block == sorted(block)


def test_inactive_coordinates_zero():
    s = total_degree_set(5, 2, 3)
    assert np.all(s.indices[:, 2:] == 0)


def test_validation_errors():
    with pytest.raises(ValueError):
        total_degree_set(0, 0, 1)
    with pytest.raises(ValueError):
        total_degree_set(2, 3, 1)
    with pytest.raises(ValueError):
        total_degree_set(2, 1, -1)


def test_eval_basis_matches_manual():
    s = total_degree_set(2, 2, 2)
    point = np.array([0.3, -1.2])
    values = eval_basis(s, point)
    manual = np.array([point[0] ** j[0] * point[1] ** j[1] for j in s.indices])
    np.testing.assert_allclose(values, manual, rtol=1e-15)


def test_eval_basis_batch_matches_single():
    rng = np.random.default_rng(0)
    s = total_degree_set(3, 3, 2)
    pts = rng.normal(size=(7, 3))
    batch = eval_basis(s, pts)
    assert batch.shape == (7, len(s))
    for k in range(7):
        np.testing.assert_array_equal(batch[k], eval_basis(s, pts[k]))


def test_zero_to_the_zero_is_one():
    s = total_degree_set(2, 2, 1)
    values = eval_basis(s, np.zeros(2))
    # constant term must be exactly 1 even at the origin
    assert values[0] == 1.0


def test_degrees_helper():
    s = total_degree_set(2, 2, 3)
    np.testing.assert_array_equal(s.degrees(), s.indices.sum(axis=1))
