import numpy as np
import pytest

from adreg.errors import InvalidArgumentError, OracleFailure
from adreg.gradcheck import central_difference, check, compare, interior_logits
from adreg.simplex import softmax


def test_quadratic_is_exact():
    g = central_difference(lambda x: np.sum(x**2), np.array([1.0, 2.0]))
    np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-9)


def test_constant_gives_zero():
    np.testing.assert_array_equal(central_difference(lambda x: 3.0, np.ones(4)), np.zeros(4))


def test_degree_two_polynomials_within_1e9(rng):
    # truncation error vanishes for quadratics; what remains is round-off of
    # order eps * |f| / h, so keep |f| near unit scale
    for _ in range(20):
        a = 0.2 * rng.normal(size=(5, 5))
        b = 0.2 * rng.normal(size=5)
        x = 0.5 * rng.normal(size=5)
        f = lambda v: v @ a @ v + b @ v + 0.5  # noqa: E731
        exact = (a + a.T) @ x + b
        assert np.max(np.abs(central_difference(f, x) - exact)) <= 1e-9


def test_non_finite_names_coordinate():
    def f(x):
        return np.inf if x[1] > 0.5 else 0.0

    with pytest.raises(OracleFailure) as info:
        central_difference(f, np.array([0.0, 0.5]), h=1e-3)
    assert info.value.coordinate == 1


def test_does_not_mutate_input():
    x = np.array([1.0, 2.0, 3.0])
    central_difference(lambda v: float(v.sum()), x)
    np.testing.assert_array_equal(x, [1.0, 2.0, 3.0])


def test_compare_cases():
    same = compare([1.0, -2.0], [1.0, -2.0])
    assert same.passed and same.max_rel_err == 0.0
    assert not compare([1.0], [1.00002], rtol=1e-5).passed
    assert compare([0.0, 1e-9], [0.0, 0.0], atol=1e-8).passed
    with pytest.raises(InvalidArgumentError):
        compare([1.0], [1.0, 2.0])


def test_compare_is_symmetric(rng):
    for _ in range(50):
        a = rng.normal(size=6)
        b = a + rng.normal(scale=1e-5, size=6)
        r1, r2 = compare(a, b), compare(b, a)
        assert r1.passed == r2.passed
        assert r1.max_rel_err == r2.max_rel_err
        assert r1.worst_index == r2.worst_index


def test_check_flags_wrong_gradient():
    x = np.array([0.3, -0.7])
    f = lambda v: float(np.sin(v).sum())  # noqa: E731
    assert check(f, np.cos(x), x)
    assert not check(f, np.cos(x) * 1.001, x)


def test_interior_logits_respects_floor_and_gap(rng):
    for c, tau in [(5, 2), (100, 5)]:
        p = np.sort(softmax(interior_logits(rng, c, tau)))[::-1]
        assert p.min() >= 1e-3
        assert p[tau - 1] - p[tau] >= 1e-4
