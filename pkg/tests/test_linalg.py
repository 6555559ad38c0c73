import numpy as np
import pytest

from pfp.core.exceptions import InvariantViolationError, NotHermitianError
from pfp.schemas import SystemLayout
from pfp.services.linalg import (
    check_hermitian, eigvalsh, hermitian_eig, ket, partial_trace, permute_systems, pinv_sqrt, projector,
    random_density, random_unitary, tensor, trace_norm_distance,
)


def test_partial_trace_of_product_state():
    rng = np.random.default_rng(1)
    a = random_density(2, rng)
    b = random_density(3, rng)
    layout = SystemLayout.of(A=2, B=3)
    rho = np.kron(a, b)
    assert np.abs(partial_trace(rho, layout, {"A"}) - a).max() < 1e-12
    assert np.abs(partial_trace(rho, layout, {"B"}) - b).max() < 1e-12
    assert np.abs(partial_trace(rho, layout, {"A", "B"}) - rho).max() < 1e-12
    assert np.isclose(partial_trace(rho, layout, set())[0, 0], 1.0)


def test_partial_trace_keeps_middle_factor():
    rng = np.random.default_rng(2)
    a, b, c = random_density(2, rng), random_density(2, rng), random_density(3, rng)
    layout = SystemLayout.of(A=2, B=2, C=3)
    rho = tensor(a, b, c)
    assert np.abs(partial_trace(rho, layout, {"B"}) - b).max() < 1e-12
    assert np.abs(partial_trace(rho, layout, {"A", "C"}) - np.kron(a, c)).max() < 1e-12


def test_partial_trace_rejects_bad_layout():
    layout = SystemLayout.of(A=2, B=2)
    with pytest.raises(InvariantViolationError):
        partial_trace(np.eye(4) / 4, layout, {"C"})
    with pytest.raises(InvariantViolationError):
        partial_trace(np.eye(3) / 3, layout, {"A"})


def test_layout_rejects_duplicate_labels():
    with pytest.raises(ValueError):
        SystemLayout(factors=[("A", 2), ("A", 3)])


def test_trace_distance_of_zero_and_plus():
    plus = np.array([1, 1]) / np.sqrt(2)
    assert np.isclose(trace_norm_distance(projector(ket(2, 0)), projector(plus)), np.sqrt(2), atol=1e-12)


def test_eigenvalues_of_small_hermitian():
    m = np.array([[0.25, 0.1], [0.1, 0.75]])
    values, vectors = hermitian_eig(m)
    expected = [0.5 + np.sqrt(0.0725), 0.5 - np.sqrt(0.0725)]
    assert np.abs(values - expected).max() < 1e-12
    assert np.abs(vectors.conj().T @ vectors - np.eye(2)).max() < 1e-12
    assert np.abs(vectors @ np.diag(values) @ vectors.conj().T - m).max() < 1e-12


@pytest.mark.parametrize("dim", [2, 16, 64, 256])
def test_eigen_reconstruction_on_random_hermitian(dim):
    rng = np.random.default_rng(dim)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = (g + g.conj().T) / 2
    values, vectors = hermitian_eig(m)
    assert np.all(np.diff(values) <= 0)
    assert np.abs(vectors.conj().T @ vectors - np.eye(dim)).max() < 1e-10
    assert np.abs(vectors @ np.diag(values) @ vectors.conj().T - m).max() < 1e-9 * max(1.0, np.abs(m).max())


def test_non_hermitian_is_rejected():
    with pytest.raises(NotHermitianError):
        check_hermitian(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(NotHermitianError):
        hermitian_eig(np.array([[1.0, 1e-6], [0.0, 1.0]]))


def test_permute_systems_swaps_factors():
    rng = np.random.default_rng(3)
    a, b = random_density(2, rng), random_density(3, rng)
    swapped = permute_systems(np.kron(a, b), [2, 3], [1, 0])
    assert np.abs(swapped - np.kron(b, a)).max() < 1e-12


def test_pinv_sqrt_on_support_only():
    m = np.diag([4.0, 0.0, 1.0])
    assert np.abs(pinv_sqrt(m) - np.diag([0.5, 0.0, 1.0])).max() < 1e-12


def test_tensor_of_nothing_is_scalar_one():
    assert tensor().shape == (1, 1)


def test_random_unitary_is_unitary():
    u = random_unitary(4, np.random.default_rng(4))
    assert np.abs(u.conj().T @ u - np.eye(4)).max() < 1e-12


def test_trace_distance_monotone_under_partial_trace():
    rng = np.random.default_rng(5)
    layout = SystemLayout.of(R=2, B=3)
    for _ in range(500):
        rho = random_density(6, rng)
        sigma = random_density(6, rng, rank=int(rng.integers(1, 7)))
        full = trace_norm_distance(rho, sigma)
        reduced = trace_norm_distance(partial_trace(rho, layout, {"B"}), partial_trace(sigma, layout, {"B"}))
        assert reduced <= full + 1e-12
        assert 0.0 <= full <= 2.0 + 1e-12


def test_batched_eigvalsh_descending():
    rng = np.random.default_rng(6)
    stack = np.stack([random_density(3, rng) for _ in range(4)])
    values = eigvalsh(stack)
    assert values.shape == (4, 3)
    assert np.all(np.diff(values, axis=1) <= 1e-15)
