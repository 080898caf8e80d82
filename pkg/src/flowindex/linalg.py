"""Small dense linear-algebra helpers used across the package."""

from __future__ import annotations

import numpy as np
import scipy.linalg
from scipy.stats import unitary_group

from .errors import ValidationError


def as_complex_matrix(m, name="matrix") -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} has non-finite entries")
    return a


def unitarity_residual(u: np.ndarray) -> float:
    n = u.shape[0]
    eye = np.eye(n)
    return float(max(np.abs(u.conj().T @ u - eye).max(), np.abs(u @ u.conj().T - eye).max()))


def require_unitary(u, tol=1e-10, name="matrix") -> np.ndarray:
    a = as_complex_matrix(u, name)
    res = unitarity_residual(a) if a.size else 0.0
    if res > tol:
        raise ValidationError(f"{name} is not unitary (residual {res:.3e} > {tol:.1e})")
    return a


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    if n == 1:
        return np.exp(2j * np.pi * rng.random()) * np.ones((1, 1))
    return unitary_group.rvs(n, random_state=rng)


def polar_unitary(a: np.ndarray) -> np.ndarray:
    """Closest unitary to ``a`` in Frobenius norm."""
    u, _, vh = np.linalg.svd(a)
    return u @ vh


def unitary_log(v: np.ndarray) -> np.ndarray:
    """Hermitian ``h`` with ``v = exp(i h)`` and spectrum in (-pi, pi]."""
    t, z = scipy.linalg.schur(np.asarray(v, dtype=complex), output="complex")
    theta = np.angle(np.diag(t))
    # phases numerically at -pi are moved onto the included end of the branch
    theta = np.where(theta <= -np.pi + 1e-12, np.pi, theta)
    h = (z * theta) @ z.conj().T
    return 0.5 * (h + h.conj().T)


def unitary_power(v: np.ndarray, t: float) -> np.ndarray:
    """``exp(i t log v)`` along the principal branch."""
    h = unitary_log(v)
    w, z = np.linalg.eigh(h)
    return (z * np.exp(1j * t * w)) @ z.conj().T


def cluster_sorted(values: np.ndarray, tol: float) -> list[np.ndarray]:
    """Group indices of ascending ``values`` whose consecutive gaps are <= tol."""
    groups, start = [], 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > tol:
            groups.append(np.arange(start, i))
            start = i
    return groups


def null_space(a: np.ndarray, rel_tol: float = 1e-9, abs_floor: float = 1e-12) -> np.ndarray:
    """Orthonormal columns spanning the numerical kernel of ``a``."""
    if a.shape[0] == 0:
        return np.eye(a.shape[1], dtype=a.dtype)
    if a.shape[0] > a.shape[1]:
        # only the right singular vectors are needed; reduce a tall matrix first
        a = scipy.linalg.qr(a, mode="r")[0][: a.shape[1]]
    s, vh = np.linalg.svd(a, full_matrices=True)[1:]
    smax = s[0] if s.size else 0.0
    thresh = max(rel_tol * smax, abs_floor)
    rank = int(np.sum(s > thresh))
    return vh[rank:].conj().T


def orthonormal_range(a: np.ndarray, rel_tol: float = 1e-9) -> np.ndarray:
    """Orthonormal columns spanning the numerical range of ``a``."""
    if a.size == 0:
        return np.zeros((a.shape[0], 0), dtype=complex)
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return u[:, :0]
    return u[:, : int(np.sum(s > rel_tol * s[0]))]


def complete_basis(v: np.ndarray) -> np.ndarray:
    """Unitary whose first column is the unit vector ``v``."""
    n = v.shape[0]
    q, _ = np.linalg.qr(np.column_stack([v, np.eye(n, dtype=complex)]))
    q = q[:, :n]
    q[:, 0] *= np.vdot(q[:, 0], v)  # fix phase so q[:,0] == v
    return q


def cell_generators(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic shift and clock matrices; together they generate all d x d matrices."""
    x = np.roll(np.eye(d, dtype=complex), 1, axis=0)
    z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return x, z


def matrix_unit(d: int, i: int, j: int) -> np.ndarray:
    e = np.zeros((d, d), dtype=complex)
    e[i, j] = 1.0
    return e
