import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wrenchsim.errors import EmptySystem
from wrenchsim.numerics import StackedSystem, cross, skew, solve_least_squares

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)
vectors = st.tuples(finite, finite, finite).map(np.array)


def _system(forces, r=None, rhs=None):
    sys = StackedSystem()
    for i, f in enumerate(forces):
        f = np.asarray(f, dtype=float)
        b = np.cross(r, f) if rhs is None else rhs[i]
        sys.append(-skew(f), b)
    return sys


def test_skew_zero_vector():
    assert np.array_equal(skew(np.zeros(3)), np.zeros((3, 3)))


def test_skew_matches_cross_example():
    # oracle: componentwise v x w
    assert np.allclose(skew(np.array([1.0, 2.0, 3.0])) @ np.array([4.0, 5.0, 6.0]), [-3.0, 6.0, -3.0])


def test_skew_antisymmetric():
    S = skew(np.array([0.1, -0.2, 0.3]))
    assert np.array_equal(S + S.T, np.zeros((3, 3)))


@pytest.mark.parametrize("a, b, expected", [
    ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
    ((2, -1, 5), (2, -1, 5), (0, 0, 0)),
    ((0.085, 0, 0), (0, 0, 9.81), (0, -0.83385, 0)),
])
def test_cross_examples(a, b, expected):
    assert np.allclose(cross(np.array(a, float), np.array(b, float)), expected, atol=1e-15)


@given(vectors, vectors)
def test_skew_is_cross(v, w):
    assert np.allclose(skew(v) @ w, np.cross(v, w), rtol=0, atol=1e-9 * (1 + np.abs(v).max() * np.abs(w).max()))
    assert np.allclose(cross(v, w), np.cross(v, w), rtol=0, atol=1e-9 * (1 + np.abs(v).max() * np.abs(w).max()))


def test_identity_block_system():
    sys = StackedSystem()
    sys.append(np.eye(3), [1.0, 2.0, 3.0])
    res = solve_least_squares(sys)
    assert np.allclose(res.solution, [1, 2, 3], atol=1e-15)
    assert res.rank == 3
    assert res.residual_norm == pytest.approx(0.0, abs=1e-15)


def test_parallel_forces_rank_two():
    sys = _system([(0, 0, 10), (0, 0, 20)], r=np.array([0.1, 0.2, 0.3]))
    assert solve_least_squares(sys).rank == 2


def test_two_horizontal_forces_round_trip():
    x = np.array([0.02, -0.01, 0.05])
    sys = _system([(10, 0, 0), (0, 10, 0)], r=x)
    res = solve_least_squares(sys)
    assert res.rank == 3
    assert np.allclose(res.solution, x, atol=1e-12)


def test_empty_system_raises():
    with pytest.raises(EmptySystem):
        solve_least_squares(StackedSystem())


def test_minimum_norm_matches_pseudoinverse():
    # independent route: explicit pseudo-inverse of the stacked matrix
    rng = np.random.default_rng(3)
    d = rng.normal(size=3)
    forces = [s * d for s in (1.0, 2.5, -4.0)]
    rhs = [rng.normal(size=3) for _ in forces]
    sys = _system(forces, rhs=rhs)
    A, b = sys.matrices()
    expected = np.linalg.pinv(A, rcond=1e-8) @ b
    res = solve_least_squares(sys)
    assert res.rank == 2
    assert np.allclose(res.solution, expected, atol=1e-12)
    assert abs(res.solution @ d) < 1e-12


@settings(max_examples=60)
@given(st.lists(vectors, min_size=2, max_size=8), vectors)
def test_full_rank_recovery(forces, x):
    forces = [f for f in forces if np.linalg.norm(f) > 1.0]
    if len(forces) < 2:
        return
    sys = _system(forces, r=x)
    A, _ = sys.matrices()
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] < 1e-3 * s[0]:
        return
    res = solve_least_squares(sys)
    assert res.rank == 3
    assert np.linalg.norm(res.solution - x) <= 1e-10 * max(np.linalg.norm(x), 1e-3)


@given(st.lists(st.floats(min_value=-50, max_value=50).filter(lambda s: abs(s) > 0.1),
                min_size=1, max_size=6), vectors.filter(lambda d: np.linalg.norm(d) > 1e-2), vectors)
def test_parallel_forces_never_full_rank(scales, d, r):
    sys = _system([s * d for s in scales], r=r)
    assert solve_least_squares(sys).rank <= 2


@given(st.lists(vectors, min_size=1, max_size=6), vectors)
def test_residual_zero_in_column_space(forces, x):
    sys = _system(forces, r=x)
    _, b = sys.matrices()
    res = solve_least_squares(sys)
    assert res.residual_norm <= 1e-12 * max(np.linalg.norm(b), 1.0) * 1e3
