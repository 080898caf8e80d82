"""Slow, direct reference computations used to cross-check the library.

Nothing here imports the routines under test beyond plain data containers.
"""

from __future__ import annotations

import itertools
from functools import reduce

import numpy as np


def flow_across_cut(matrix, dims, cut):
    """Net weight moving rightwards across ``cut``, by enumerating block pairs near it."""
    m = len(dims)
    off = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    half = m // 2
    total = 0.0
    for y in range(m):
        yl = (y - cut + half) % m - half  # position of y relative to the cut, in (-half, half]
        for x in range(m):
            delta = (x - y + half) % m - half
            xl = yl + delta
            w = np.sum(np.abs(matrix[off[x]:off[x + 1], off[y]:off[y + 1]]) ** 2)
            if yl < 0 <= xl:
                total += w
            elif xl < 0 <= yl:
                total -= w
    return total


def ring_gate_unitary(dims, cells, gate):
    """Full-ring unitary of ``gate`` acting on the listed (cyclic) cells."""
    n = len(dims)
    rest = [c for c in range(n) if c not in cells]
    order = list(cells) + rest
    big = np.kron(gate, np.eye(int(np.prod([dims[c] for c in rest])) if rest else 1))
    shape = [dims[c] for c in order]
    t = big.reshape(shape + shape)
    inv = list(np.argsort(order))
    t = t.transpose(inv + [n + i for i in inv])
    d = int(np.prod(dims))
    return t.reshape(d, d)


def ring_shift_unitary(dims, by):
    """Permutation moving the content of cell x to cell x + by."""
    n = len(dims)
    d = dims[0]
    total = d**n
    perm = np.zeros((total, total))
    for idx in range(total):
        digits = np.unravel_index(idx, (d,) * n)
        new = [0] * n
        for x in range(n):
            new[(x + by) % n] = digits[x]
        perm[np.ravel_multi_index(new, (d,) * n), idx] = 1
    return perm


def ring_embed(op, start, dims):
    n = len(dims)
    k = int(round(np.log(op.shape[0]) / np.log(dims[0])))
    cells = [(start + i) % n for i in range(k)]
    return ring_gate_unitary(dims, cells, op) if len(set(cells)) == k else None


def closure_dimension(elements, d, tol=1e-9):
    """Dimension of the unital *-algebra generated by ``elements`` via repeated products."""
    vecs = []

    def add(x):
        v = x.reshape(-1)
        for b in vecs:
            v = v - np.vdot(b, v) * b
        n = np.linalg.norm(v)
        if n > tol * max(1.0, np.linalg.norm(x)):
            vecs.append(v / n)
            return True
        return False

    add(np.eye(d, dtype=complex))
    for e in elements:
        add(e)
        add(e.conj().T)
    grew = True
    while grew:
        grew = False
        mats = [v.reshape(d, d) for v in vecs]
        for a, b in itertools.product(mats, repeat=2):
            if add(a @ b):
                grew = True
    return len(vecs)


def support_dimension(elements, dims, keep):
    """Dimension of the support algebra from all spectator matrix elements."""
    n = len(dims)
    rest = [i for i in range(n) if i not in keep]
    dk = int(np.prod([dims[i] for i in keep]))
    dr = int(np.prod([dims[i] for i in rest])) if rest else 1
    pieces = []
    for x in elements:
        t = x.reshape(list(dims) * 2).transpose(keep + rest + [n + i for i in keep + rest])
        t = t.reshape(dk, dr, dk, dr)
        for i in range(dr):
            for j in range(dr):
                if np.abs(t[:, i, :, j]).max() > 1e-12:
                    pieces.append(t[:, i, :, j])
    return closure_dimension(pieces, dk)


def hs_projector(spanning):
    a = np.array([m.reshape(-1) for m in spanning]).T
    q, r = np.linalg.qr(a)
    keep = np.abs(np.diag(r)) > 1e-10
    q = q[:, keep]
    return q @ q.conj().T


def eta_direct(span_a, span_b):
    pa, pb = hs_projector(span_a), hs_projector(span_b)
    return float(np.sqrt(np.trace(pa @ pb).real))


def welch_count(f, q, rho, r):
    """Welch index by plain enumeration of windows on [-r-rho, 2r-1+rho]."""
    length = 3 * r + 2 * rho
    seen = set()
    for c in itertools.product(range(q), repeat=length):
        at = lambda pos: c[pos + r + rho]
        image = tuple(f(*[at(x + j) for j in range(-rho, rho + 1)]) for x in range(-r, r))
        own = tuple(at(x) for x in range(0, 2 * r))
        seen.add(own + image)
    return len(seen), q ** (3 * r)


def mean_position(coeffs_by_shift, d, ring, steps):
    """Evolve ``psi_{t+1}(x) = sum_k U_k psi_t(x - k)`` from a maximally mixed coin at 0."""
    out = [0.0]
    psis = []
    for col in range(d):
        psi = np.zeros((ring, d), dtype=complex)
        psi[0, col] = 1
        psis.append(psi)
    pos = np.arange(ring)
    pos = np.where(pos > ring // 2, pos - ring, pos)
    for _ in range(steps):
        new = []
        for psi in psis:
            nxt = np.zeros_like(psi)
            for k, u in coeffs_by_shift.items():
                nxt += np.roll(psi, k, axis=0) @ u.T
            new.append(nxt)
        psis = new
        out.append(sum(float(np.sum(pos[:, None] * np.abs(p) ** 2)) for p in psis) / d)
    return np.array(out)


def winding_by_unwrapping(symbol_fn, grid=4096):
    p = 2 * np.pi * np.arange(grid + 1) / grid
    dets = np.array([np.linalg.det(symbol_fn(x)) for x in p])
    ph = np.unwrap(np.angle(dets))
    return (ph[-1] - ph[0]) / (2 * np.pi)


def kron_all(mats):
    return reduce(np.kron, mats)
