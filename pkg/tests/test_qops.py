import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optomech.errors import ContractViolationError, InvalidDimensionError, TruncationWarning
from optomech.qops import (
    ATOM,
    CAVITY,
    MOTION,
    Dims,
    MotionalState,
    expectation,
    hermitian_function,
    is_hermitian,
    ladder_lowering,
    number_operator,
    position_grid,
    tensor,
    thermal_density,
    thermal_occupation,
)


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a + a.conj().T


def test_dims():
    d = Dims(3, 4)
    assert d.factors == (3, 2, 4)
    assert d.total == 24
    with pytest.raises(InvalidDimensionError):
        Dims(0, 4)
    with pytest.raises(InvalidDimensionError):
        Dims(2, 2, n_atom=3)


def test_ladder_lowering_small():
    np.testing.assert_array_equal(ladder_lowering(2), [[0, 1], [0, 0]])
    L = ladder_lowering(3)
    assert L[0, 1] == 1 and math.isclose(L[1, 2].real, math.sqrt(2))
    assert np.count_nonzero(L) == 2


def test_number_identity():
    L = ladder_lowering(4)
    np.testing.assert_allclose(L.conj().T @ L, np.diag([0, 1, 2, 3]))
    np.testing.assert_allclose(number_operator(4), np.diag([0, 1, 2, 3]))


def test_ladder_rejects_empty():
    with pytest.raises(InvalidDimensionError):
        ladder_lowering(0)


def test_tensor_identity_and_size():
    d = Dims(3, 2)
    np.testing.assert_array_equal(tensor([], [], d), np.eye(12))
    assert tensor([ladder_lowering(3)], [CAVITY], d).shape == (12, 12)


def test_tensor_trace_factorizes():
    rng = np.random.default_rng(1)
    d = Dims(3, 4)
    A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    B = rng.normal(size=(4, 4))
    full = tensor([A, B], [ATOM, MOTION], d)
    # identity on the cavity contributes its dimension
    assert np.isclose(np.trace(full), 3 * np.trace(A) * np.trace(B))
    np.testing.assert_allclose(full, np.kron(np.eye(3), np.kron(A, B)))


def test_tensor_dimension_mismatch():
    with pytest.raises(InvalidDimensionError):
        tensor([np.eye(3)], [ATOM], Dims(2, 2))
    with pytest.raises(InvalidDimensionError):
        tensor([np.eye(2), np.eye(2)], [ATOM, ATOM], Dims(2, 2))


def test_hermitian_function_identity():
    H = random_hermitian(np.random.default_rng(2), 6)
    np.testing.assert_allclose(hermitian_function(H, lambda x: x), H, atol=1e-12 * np.abs(H).max())


def test_hermitian_function_exp():
    out = hermitian_function(np.diag([0.0, math.pi]), lambda x: np.exp(1j * x))
    np.testing.assert_allclose(out, np.diag([1, -1]), atol=1e-12)


def test_hermitian_function_sine_vs_taylor():
    X = ladder_lowering(20)
    X = X + X.conj().T
    S = hermitian_function(X, np.sin)
    taylor = np.zeros_like(X)
    term = X.copy()
    for k in range(10):
        taylor += term * (-1) ** k / math.factorial(2 * k + 1)
        term = term @ X @ X
    g = np.zeros(20)
    g[0] = 1
    assert abs(expectation(S, g) - expectation(taylor, g)) < 1e-8


def test_hermitian_function_rejects_non_hermitian():
    with pytest.raises(ContractViolationError):
        hermitian_function(np.array([[0, 1], [0, 0]]), np.sin)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_functional_calculus_commutes(n, seed):
    H = random_hermitian(np.random.default_rng(seed), n)
    f = hermitian_function(H, np.sin)
    g = hermitian_function(H, np.cos)
    fg = hermitian_function(H, lambda x: np.sin(x) * np.cos(x))
    np.testing.assert_allclose(f @ g, fg, atol=1e-10 * max(1.0, np.abs(fg).max()))


def test_position_grid_small():
    vals, _ = position_grid(2)
    np.testing.assert_allclose(vals, [-1, 1], atol=1e-12)
    vals, _ = position_grid(3)
    np.testing.assert_allclose(vals, [-math.sqrt(3), 0, math.sqrt(3)], atol=1e-12)


@pytest.mark.parametrize("n", [1, 5, 50])
def test_position_grid_diagonalizes(n):
    vals, U = position_grid(n)
    X = ladder_lowering(n)
    X = X + X.conj().T
    np.testing.assert_allclose(U.T @ U, np.eye(n), atol=1e-10)
    np.testing.assert_allclose(U.T @ X @ U, np.diag(vals), atol=1e-10)
    np.testing.assert_allclose(vals, -vals[::-1], atol=1e-10)
    assert np.all(np.diff(vals) >= 0)


def test_position_grid_is_read_only():
    vals, U = position_grid(4)
    with pytest.raises(ValueError):
        vals[0] = 1.0


def test_expectation():
    assert expectation(number_operator(5), MotionalState.ground(5)) == 0
    rho = thermal_density(120, 3.0)
    assert abs(expectation(number_operator(120), rho).real - 1 / math.expm1(1 / 3)) < 0.01
    assert np.isclose(expectation(np.eye(120), rho), 1)
    with pytest.raises(InvalidDimensionError):
        expectation(np.eye(3), MotionalState.ground(4))


def test_thermal_density():
    rho = thermal_density(5, 0.0)
    assert rho.is_pure and rho.populations()[0] == 1
    rho = thermal_density(200, 1.0)
    assert abs(rho.populations()[0] - (1 - math.exp(-1))) < 1e-12
    assert np.isclose(np.trace(rho.data), 1)
    assert np.all(np.diff(rho.populations()) <= 0)


def test_thermal_truncation_warning():
    with pytest.warns(TruncationWarning):
        thermal_density(10, 3.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        thermal_density(150, 3.0)


def test_thermal_occupation():
    assert thermal_occupation(0) == 0
    assert math.isclose(thermal_occupation(3), 2.528, abs_tol=1e-3)


def test_motional_state_validation():
    with pytest.raises(ContractViolationError):
        MotionalState(np.array([1.0, 1.0]))
    with pytest.raises(ContractViolationError):
        MotionalState(np.diag([1.5, -0.5]))
    MotionalState(np.array([1.0, 1.0]), normalized=False)
    s = MotionalState.fock(2, 4)
    assert s.kind == "pure" and s.n_phonon == 4
    with pytest.raises(ValueError):
        s.data[0] = 1


def test_is_hermitian_tolerance():
    H = random_hermitian(np.random.default_rng(3), 5)
    assert is_hermitian(H)
    assert not is_hermitian(H + 1e-6 * np.triu(np.ones((5, 5)), 1))
