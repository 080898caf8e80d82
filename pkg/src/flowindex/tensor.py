"""Index gymnastics for operators on tensor products of small factors."""

from __future__ import annotations

from math import prod

import numpy as np

from .errors import ValidationError


def permute_factors(mat: np.ndarray, dims, order) -> np.ndarray:
    """Reorder tensor factors: factor ``order[t]`` of the input becomes factor ``t``."""
    dims = tuple(dims)
    n = len(dims)
    order = list(order)
    if sorted(order) != list(range(n)):
        raise ValidationError(f"invalid factor order {order} for {n} factors")
    if order == list(range(n)):
        return mat
    t = mat.reshape(dims + dims).transpose(order + [n + o for o in order])
    d = prod(dims)
    return t.reshape(d, d)


def split_blocks(mat: np.ndarray, dims, keep) -> np.ndarray:
    """View ``mat`` as an array indexed (kept, rest, kept, rest)."""
    dims = tuple(dims)
    keep = list(keep)
    rest = [i for i in range(len(dims)) if i not in keep]
    dk = prod(dims[i] for i in keep)
    dr = prod(dims[i] for i in rest)
    return permute_factors(mat, dims, keep + rest).reshape(dk, dr, dk, dr)


def embed(op: np.ndarray, positions, window_dims) -> np.ndarray:
    """Place ``op`` (acting on window factors ``positions`` in that order) into the window."""
    window_dims = tuple(window_dims)
    positions = list(positions)
    rest = [i for i in range(len(window_dims)) if i not in positions]
    d_rest = prod(window_dims[i] for i in rest)
    big = np.kron(op, np.eye(d_rest, dtype=complex))
    order = positions + rest
    inverse = list(np.argsort(order))
    return permute_factors(big, [window_dims[i] for i in order], inverse)


def pad_identity(mat: np.ndarray, left: int, right: int) -> np.ndarray:
    out = mat
    if left > 1:
        out = np.kron(np.eye(left, dtype=complex), out)
    if right > 1:
        out = np.kron(out, np.eye(right, dtype=complex))
    return out


def conjugate_by_gate(mat: np.ndarray, dims, gate: np.ndarray, first: int, width: int) -> np.ndarray:
    """Return ``G* X G`` where ``G`` acts on factors ``first .. first+width-1``."""
    dims = tuple(dims)
    a = prod(dims[:first])
    g = prod(dims[first:first + width])
    b = prod(dims[first + width:])
    if gate.shape != (g, g):
        raise ValidationError("gate dimension does not match the factors it acts on")
    x = np.matmul(gate.conj().T, mat.reshape(a, g, b * a * g * b))
    x = np.matmul(gate.T, x.reshape(a * g * b * a, g, b))
    d = a * g * b
    return x.reshape(d, d)


def factor_is_identity(mat: np.ndarray, dims, side: str, rel_tol: float = 1e-11):
    """If the outermost factor on ``side`` acts trivially, return the reduced matrix."""
    dims = tuple(dims)
    d0 = dims[0] if side == "left" else dims[-1]
    rest = prod(dims) // d0
    norm = np.linalg.norm(mat)
    if side == "left":
        x = mat.reshape(d0, rest, d0, rest)
        y = np.einsum("iaib->ab", x) / d0
        dev = x - np.einsum("ij,ab->iajb", np.eye(d0), y)
    else:
        x = mat.reshape(rest, d0, rest, d0)
        y = np.einsum("aibi->ab", x) / d0
        dev = x - np.einsum("ab,ij->aibj", y, np.eye(d0))
    if np.linalg.norm(dev) <= rel_tol * max(norm, 1e-300):
        return y
    return None


def strip_identity(mat: np.ndarray, dims, rel_tol: float = 1e-11):
    """Remove identity factors at both ends.  Returns (n_left_removed, dims, matrix)."""
    dims = list(dims)
    left = 0
    while len(dims) > 1:
        y = factor_is_identity(mat, dims, "left", rel_tol)
        if y is None:
            break
        mat, dims, left = y, dims[1:], left + 1
    while len(dims) > 1:
        y = factor_is_identity(mat, dims, "right", rel_tol)
        if y is None:
            break
        mat, dims = y, dims[:-1]
    return left, tuple(dims), mat


def reduce_to(mat: np.ndarray, dims, keep):
    """Best approximation ``X (x) 1`` of ``mat`` with ``X`` on the kept factors.

    Returns ``(X, residual)`` where the residual is the Frobenius distance
    relative to the norm of ``mat``.
    """
    blocks = split_blocks(mat, dims, keep)
    dr = blocks.shape[1]
    x = np.einsum("iaja->ij", blocks) / dr
    dev = blocks - np.einsum("ij,ab->iajb", x, np.eye(dr))
    norm = np.linalg.norm(mat)
    return x, float(np.linalg.norm(dev) / max(norm, 1e-300))
