"""Dense complex linear algebra on tensor-product spaces.

Matrices are plain ``numpy.ndarray`` objects; subsystem structure travels
separately as a :class:`pfp.schemas.SystemLayout`.
"""
import logging
from functools import reduce
from typing import Iterable, Sequence, Tuple

import numpy as np

from pfp.core.exceptions import InvariantViolationError, NotHermitianError
from pfp.schemas import SystemLayout

logger = logging.getLogger("pfp")

HERMITIAN_TOL = 1e-12
SUPPORT_TOL = 1e-12


def as_matrix(m) -> np.ndarray:
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2:
        raise InvariantViolationError(f"expected a matrix, got array of shape {arr.shape}")
    return arr


def max_asymmetry(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def check_hermitian(m, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Returns (M + M^dagger)/2 after checking M is Hermitian within `tol`."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise InvariantViolationError(f"Hermitian matrix must be square, got {m.shape}")
    asym = max_asymmetry(m)
    if asym > tol:
        raise NotHermitianError(asym, tol)
    return (m + m.conj().T) / 2


def hermitian_eig(m) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and the matching unitary of eigenvectors (columns)."""
    h = check_hermitian(m)
    values, vectors = np.linalg.eigh(h)
    order = np.argsort(values, kind="stable")[::-1]
    return values[order], vectors[:, order]


def eigvalsh(m) -> np.ndarray:
    """Descending eigenvalues of a Hermitian matrix (or a stack of them)."""
    arr = np.asarray(m, dtype=complex)
    arr = (arr + np.swapaxes(arr.conj(), -1, -2)) / 2
    return np.linalg.eigvalsh(arr)[..., ::-1]


def tensor(*ms) -> np.ndarray:
    if not ms:
        return np.ones((1, 1), dtype=complex)
    return reduce(np.kron, (np.asarray(m, dtype=complex) for m in ms))


def _check_layout(m: np.ndarray, layout: SystemLayout) -> None:
    if m.shape != (layout.total_dim, layout.total_dim):
        raise InvariantViolationError(
            f"matrix of shape {m.shape} does not match layout {layout.factors} (dim {layout.total_dim})"
        )


def partial_trace(m, layout: SystemLayout, keep: Iterable[str]) -> np.ndarray:
    """Traces out every factor of `layout` not named in `keep`; kept factors stay in layout order."""
    m = as_matrix(m)
    _check_layout(m, layout)
    keep = set(keep)
    unknown = keep - set(layout.labels)
    if unknown:
        raise InvariantViolationError(f"unknown subsystem labels {sorted(unknown)} for layout {layout.labels}")

    dims = layout.dims
    k = len(dims)
    tensor_m = m.reshape(dims + dims)
    row_axes = list(range(k))
    col_axes = list(range(k, 2 * k))
    # einsum: shared index letters on traced-out factors
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * k > len(letters):
        raise InvariantViolationError(f"too many tensor factors ({k}) for partial trace")
    row = [letters[i] for i in row_axes]
    col = [letters[k + i] if layout.labels[i] in keep else letters[i] for i in range(k)]
    out_row = [row[i] for i in range(k) if layout.labels[i] in keep]
    out_col = [col[i] for i in range(k) if layout.labels[i] in keep]
    spec = "".join(row + col) + "->" + "".join(out_row + out_col)
    reduced = np.einsum(spec, tensor_m)
    kept_dim = int(np.prod([d for label, d in layout.factors if label in keep], dtype=np.int64))
    return reduced.reshape(kept_dim, kept_dim)


def permute_systems(m, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorders tensor factors: factor order[i] of the input becomes factor i of the output."""
    m = as_matrix(m)
    dims = list(dims)
    k = len(dims)
    if sorted(order) != list(range(k)):
        raise InvariantViolationError(f"{order} is not a permutation of {k} factors")
    total = int(np.prod(dims, dtype=np.int64))
    if m.shape != (total, total):
        raise InvariantViolationError(f"matrix of shape {m.shape} does not match factor dims {dims}")
    axes = list(order) + [k + i for i in order]
    return m.reshape(dims + dims).transpose(axes).reshape(total, total)


def trace_norm_distance(rho, sigma) -> float:
    """||rho - sigma||_1 = sum of |eigenvalues| of the Hermitian difference."""
    rho = as_matrix(rho)
    sigma = as_matrix(sigma)
    if rho.shape != sigma.shape:
        raise InvariantViolationError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    diff = check_hermitian(rho - sigma, tol=1e-9)
    return float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def trace_norm(m) -> float:
    return float(np.sum(np.abs(eigvalsh(m))))


def pinv_sqrt(m, tol: float = SUPPORT_TOL) -> np.ndarray:
    """M^{-1/2} on the support of a positive semidefinite M, zero on its kernel."""
    values, vectors = np.linalg.eigh(check_hermitian(m, tol=1e-9))
    cutoff = tol * max(1.0, float(np.max(np.abs(values))) if values.size else 1.0)
    inv = np.zeros_like(values)
    support = values > cutoff
    inv[support] = 1.0 / np.sqrt(values[support])
    return (vectors * inv) @ vectors.conj().T


def ket(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def purity(rho) -> float:
    rho = as_matrix(rho)
    return float(np.real(np.trace(rho @ rho)))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_pure_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.real(np.trace(rho))
