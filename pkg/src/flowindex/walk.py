"""Banded unitaries on rings of finite-dimensional cells.

A walk on a ring of ``M`` sites with cell dimensions ``dims`` is a unitary
whose block ``U[x, y]`` (from site ``y`` to site ``x``) vanishes unless the
cyclic distance of ``x`` and ``y`` is at most the band ``L``, with ``2L < M``.
Matrices act in the Schrodinger picture: a product ``A @ B`` applies ``B``
first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndexConditionError, ValidationError, VerificationError
from .linalg import (
    as_complex_matrix,
    polar_unitary,
    require_unitary,
    unitarity_residual,
    unitary_log,
    unitary_power,
)

INTEGRALITY_TOL = 1e-8
RECONSTRUCTION_TOL = 1e-9


def cyclic_distance(x: int, y: int, m: int) -> int:
    k = (x - y) % m
    return min(k, m - k)


class BandedUnitary:
    """Dense unitary on a ring cell structure with a declared band."""

    def __init__(self, dims, band: int, matrix, *, tol: float = 1e-10, check: bool = True):
        self.dims = tuple(int(d) for d in dims)
        if not self.dims or any(d < 1 for d in self.dims):
            raise ValidationError("cell dimensions must be positive integers")
        self.band = int(band)
        if self.band < 0 or 2 * self.band >= self.M:
            raise ValidationError(f"band {self.band} is not admissible on a ring of {self.M} sites")
        self.offsets = np.concatenate([[0], np.cumsum(self.dims)]).astype(int)
        mat = as_complex_matrix(matrix, "walk matrix")
        if mat.shape[0] != self.offsets[-1]:
            raise ValidationError(f"matrix size {mat.shape[0]} does not match total dimension {self.offsets[-1]}")
        mat.setflags(write=False)
        self.matrix = mat
        if check:
            res = unitarity_residual(mat)
            if res > tol:
                raise ValidationError(f"walk is not unitary (residual {res:.3e})")
            leak = self.band_violation(self.band)
            if leak > tol:
                raise ValidationError(f"walk has entries beyond its band {self.band} (norm {leak:.3e})")

    @property
    def M(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return int(self.offsets[-1])

    def sites(self, x: int) -> slice:
        x %= self.M
        return slice(self.offsets[x], self.offsets[x + 1])

    def block(self, x: int, y: int) -> np.ndarray:
        return self.matrix[self.sites(x), self.sites(y)]

    def band_violation(self, band: int) -> float:
        worst = 0.0
        for x in range(self.M):
            for y in range(self.M):
                if cyclic_distance(x, y, self.M) > band:
                    worst = max(worst, float(np.linalg.norm(self.block(x, y))))
        return worst

    def measured_band(self, tol: float = 1e-12) -> int:
        best = 0
        for x in range(self.M):
            for y in range(self.M):
                if np.linalg.norm(self.block(x, y)) > tol:
                    best = max(best, cyclic_distance(x, y, self.M))
        return best

    def blocks(self):
        """Yield ``(x, y, block)`` for every block pair within the band."""
        for x in range(self.M):
            for k in range(-self.band, self.band + 1):
                y = (x - k) % self.M
                yield x, y, self.block(x, y)

    @classmethod
    def from_blocks(cls, dims, band, blocks, **kw) -> "BandedUnitary":
        dims = tuple(int(d) for d in dims)
        off = np.concatenate([[0], np.cumsum(dims)]).astype(int)
        mat = np.zeros((off[-1], off[-1]), dtype=complex)
        for (x, y), b in blocks.items():
            mat[off[x]:off[x + 1], off[y]:off[y + 1]] += b
        return cls(dims, band, mat, **kw)

    @classmethod
    def identity(cls, dims) -> "BandedUnitary":
        n = sum(dims)
        return cls(dims, 0, np.eye(n))

    @classmethod
    def shift(cls, m: int, d: int = 1, k: int = 1) -> "BandedUnitary":
        """Uniform shift moving every cell ``k`` sites in the positive direction."""
        perm = np.zeros((m, m))
        for x in range(m):
            perm[(x + k) % m, x] = 1
        return cls((d,) * m, abs(k), np.kron(perm, np.eye(d)))

    def __repr__(self):
        return f"BandedUnitary(M={self.M}, dims={self.dims}, band={self.band})"


def _same_structure(u: BandedUnitary, v: BandedUnitary):
    if u.dims != v.dims:
        raise ValidationError(f"cell structures differ: {u.dims} vs {v.dims}")


def compose(u: BandedUnitary, v: BandedUnitary) -> BandedUnitary:
    """Product ``u v`` (``v`` acts first); its band is the sum of the bands."""
    _same_structure(u, v)
    band = u.band + v.band
    if 2 * band >= u.M:
        raise ValidationError(f"band overflow: {band} is not admissible on a ring of {u.M} sites")
    return BandedUnitary(u.dims, band, u.matrix @ v.matrix, check=False)


def adjoint(u: BandedUnitary) -> BandedUnitary:
    return BandedUnitary(u.dims, u.band, u.matrix.conj().T, check=False)


def direct_sum(u: BandedUnitary, v: BandedUnitary) -> BandedUnitary:
    """Cellwise direct sum: the cell at ``x`` becomes ``H_u(x) + H_v(x)``."""
    if u.M != v.M:
        raise ValidationError("direct sum needs rings of equal size")
    dims = tuple(a + b for a, b in zip(u.dims, v.dims))
    out = BandedUnitary.identity(dims).matrix.copy()
    off = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    for x in range(u.M):
        for y in range(u.M):
            rx, ry = off[x], off[y]
            out[rx:rx + u.dims[x], ry:ry + u.dims[y]] = u.block(x, y)
            out[rx + u.dims[x]:off[x + 1], ry + u.dims[y]:off[y + 1]] = v.block(x, y)
    return BandedUnitary(dims, max(u.band, v.band), out, check=False)


def regroup(u: BandedUnitary, size: int, offset: int = 0) -> BandedUnitary:
    """Merge ``size`` consecutive sites, the first group starting at ``offset``."""
    if size < 1 or u.M % size:
        raise ValidationError(f"cannot group {u.M} sites into groups of {size}")
    order = [(offset + i) % u.M for i in range(u.M)]
    idx = np.concatenate([np.arange(u.offsets[x], u.offsets[x + 1]) for x in order])
    mat = u.matrix[np.ix_(idx, idx)]
    dims = [sum(u.dims[order[g * size + i]] for i in range(size)) for g in range(u.M // size)]
    band = -(-u.band // size)
    return BandedUnitary(dims, band, mat, check=False)


# ---------------------------------------------------------------------------
# index


def index_raw(u: BandedUnitary, cut: int = 0) -> float:
    """Net squared-norm flow across the cut between sites ``cut-1`` and ``cut``."""
    total = 0.0
    for off in range(u.band):
        x = cut + off
        for k in range(off + 1, u.band + 1):
            y = x - k
            total += np.linalg.norm(u.block(x, y)) ** 2 - np.linalg.norm(u.block(y, x)) ** 2
    return float(total)


def _as_integer(raw: float, tol: float, what: str) -> int:
    n = int(round(raw))
    if abs(raw - n) > tol:
        raise VerificationError(f"{what} {raw:.12f} is not an integer within {tol:.1e}")
    return n


def index(u: BandedUnitary, cut: int = 0, tol: float = INTEGRALITY_TOL) -> int:
    return _as_integer(index_raw(u, cut), tol, "index sum")


def all_cut_indices(u: BandedUnitary, tol: float = INTEGRALITY_TOL) -> list[int]:
    return [index(u, c, tol) for c in range(u.M)]


@dataclass(frozen=True)
class Interval:
    start: int
    length: int

    def sites(self, m: int) -> list[int]:
        return [(self.start + i) % m for i in range(self.length)]


def _interval(v) -> Interval:
    return v if isinstance(v, Interval) else Interval(int(v[0]), int(v[1]))


def index_rank_form(u: BandedUnitary, left, middle, right, tol: float = INTEGRALITY_TOL) -> int:
    """``rank(P_{MR} U P_{LM}) - dim H_M`` for consecutive regions L, M, R."""
    left, middle, right = _interval(left), _interval(middle), _interval(right)
    m = u.M
    if (left.start + left.length - middle.start) % m or (middle.start + middle.length - right.start) % m:
        raise ValidationError("regions must be consecutive")
    for r in (left, middle, right):
        if r.length < max(u.band, 1):
            raise ValidationError(f"region of width {r.length} is too narrow for band {u.band}")
    if left.length + middle.length + right.length + u.band > m:
        raise ValidationError("regions too wide for the ring and band")

    def idx(sites):
        return np.concatenate([np.arange(u.offsets[x], u.offsets[x + 1]) for x in sites])

    rows = idx(middle.sites(m) + right.sites(m))
    cols = idx(left.sites(m) + middle.sites(m))
    s = np.linalg.svd(u.matrix[np.ix_(rows, cols)], compute_uv=False)
    if np.any((s > tol) & (np.abs(s - 1) > 1e-6)):
        raise VerificationError("compressed walk is not a partial isometry; band or unitarity violated")
    rank = int(np.sum(s > 0.5))
    return rank - int(sum(u.dims[x] for x in middle.sites(m)))


# ---------------------------------------------------------------------------
# partitioned layers


class PartitionedLayer:
    """Independent unitaries on disjoint blocks of cyclically consecutive sites."""

    def __init__(self, dims, blocks, *, tol: float = 1e-10, covering: bool = True):
        self.dims = tuple(int(d) for d in dims)
        m = len(self.dims)
        seen = set()
        clean = []
        for sites, mat in blocks:
            sites = tuple(int(s) % m for s in sites)
            for a, b in zip(sites, sites[1:]):
                if (b - a) % m != 1:
                    raise ValidationError(f"block sites {sites} are not consecutive")
            if seen.intersection(sites):
                raise ValidationError(f"block {sites} overlaps another block")
            seen.update(sites)
            mat = require_unitary(mat, tol, f"block on sites {sites}")
            if mat.shape[0] != sum(self.dims[s] for s in sites):
                raise ValidationError(f"block on sites {sites} has wrong dimension")
            clean.append((sites, mat))
        if covering:
            for s in range(m):
                if s not in seen:
                    clean.append(((s,), np.eye(self.dims[s], dtype=complex)))
        self.blocks = tuple(sorted(clean, key=lambda b: b[0][0]))

    @property
    def M(self) -> int:
        return len(self.dims)

    def matrix(self) -> np.ndarray:
        off = np.concatenate([[0], np.cumsum(self.dims)]).astype(int)
        n = off[-1]
        out = np.zeros((n, n), dtype=complex)
        for sites, mat in self.blocks:
            idx = np.concatenate([np.arange(off[s], off[s + 1]) for s in sites])
            out[np.ix_(idx, idx)] = mat
        return out

    def width(self) -> int:
        return max(len(s) for s, _ in self.blocks)

    def to_walk(self) -> BandedUnitary:
        return BandedUnitary(self.dims, self.width() - 1, self.matrix(), check=False)

    def nontrivial_sites(self, tol: float = 1e-12) -> set[int]:
        out = set()
        for sites, mat in self.blocks:
            if np.abs(mat - np.eye(mat.shape[0])).max() > tol:
                out.update(sites)
        return out

    @classmethod
    def pairs(cls, dims, offset: int, unitaries) -> "PartitionedLayer":
        m = len(dims)
        if m % 2:
            raise ValidationError("pair layers need an even ring")
        blocks = [((offset + 2 * k, offset + 2 * k + 1), unitaries[k]) for k in range(m // 2)]
        return cls(dims, blocks)


# ---------------------------------------------------------------------------
# decoupling and local implementations


def _lift_window(u: BandedUnitary, lo: int, hi: int):
    """Matrix of the walk restricted to lifted sites [lo, hi) (as if on the line)."""
    sites = list(range(lo, hi))
    sizes = [u.dims[s % u.M] for s in sites]
    off = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    mat = np.zeros((off[-1], off[-1]), dtype=complex)
    for i, x in enumerate(sites):
        for j, y in enumerate(sites):
            if abs(x - y) <= u.band:
                mat[off[i]:off[i + 1], off[j]:off[j + 1]] = u.block(x, y)
    return mat, off


def decouple_unitary(u: BandedUnitary, cut: int = 0, tol: float = INTEGRALITY_TOL):
    """Local unitary on sites ``[cut-L, cut+L)`` making ``u V`` commute with the cut.

    Returns ``(sites, V)``; ``sites`` are ring positions in lifted order.
    """
    n = index(u, cut, tol)
    if n != 0:
        raise IndexConditionError(f"index {n} ≠ 0", found=n, required=0)
    L = u.band
    if L == 0:
        return (), np.zeros((0, 0), dtype=complex)
    mat, off = _lift_window(u, cut - 2 * L, cut + 2 * L)
    w = slice(off[L], off[3 * L])  # columns of the window [cut-L, cut+L)
    p_full = np.zeros(off[-1])
    p_full[off[2 * L]:] = 1.0  # sites >= cut
    cols = mat[:, w]
    q = cols.conj().T @ (p_full[:, None] * cols)
    p = np.diag(p_full[w])
    diff = 0.5 * ((q - p) + (q - p).conj().T)
    ev, evec = np.linalg.eigh(diff)
    rng_vecs = evec[:, np.abs(ev) > 1e-9]
    nw = diff.shape[0]
    v = np.eye(nw, dtype=complex)
    if rng_vecs.shape[1]:
        qr = rng_vecs.conj().T @ q @ rng_vecs
        pr = rng_vecs.conj().T @ p @ rng_vecs
        eq, vq = np.linalg.eigh(0.5 * (qr + qr.conj().T))
        ep, vp = np.linalg.eigh(0.5 * (pr + pr.conj().T))
        y1, y0 = vq[:, eq > 0.5], vq[:, eq <= 0.5]
        x1, x0 = vp[:, ep > 0.5], vp[:, ep <= 0.5]
        if y1.shape[1] != x1.shape[1]:
            raise VerificationError("projection ranks differ inside the window; index is not zero")
        # V maps ran P onto ran Q, hence V* Q V = P and U V commutes with P
        vr = y1 @ polar_unitary(y1.conj().T @ x1) @ x1.conj().T
        vr = vr + y0 @ polar_unitary(y0.conj().T @ x0) @ x0.conj().T
        v = v + rng_vecs @ (vr - np.eye(vr.shape[0])) @ rng_vecs.conj().T
    sites = tuple((cut - L + i) % u.M for i in range(2 * L))
    return sites, v


def decouple(u: BandedUnitary, cut: int = 0, tol: float = INTEGRALITY_TOL) -> PartitionedLayer:
    sites, v = decouple_unitary(u, cut, tol)
    blocks = [(sites, v)] if sites else []
    return PartitionedLayer(u.dims, blocks)


def crossing_norm(u: BandedUnitary | np.ndarray, dims, band: int, cut: int) -> float:
    """Largest norm of a block of ``u`` connecting the two sides of ``cut`` locally."""
    mat = u.matrix if isinstance(u, BandedUnitary) else u
    m = len(dims)
    off = np.concatenate([[0], np.cumsum(dims)]).astype(int)

    def blk(x, y):
        x, y = x % m, y % m
        return mat[off[x]:off[x + 1], off[y]:off[y + 1]]

    worst = 0.0
    for a in range(1, band + 1):
        for b in range(0, band):
            if a + b <= band:
                worst = max(worst, np.linalg.norm(blk(cut + b, cut - a)), np.linalg.norm(blk(cut - a, cut + b)))
    return float(worst)


def two_layer_implementation(u: BandedUnitary, tol: float = INTEGRALITY_TOL):
    """Pair layers ``(first, second)`` with ``u = second.matrix() @ first.matrix()``.

    ``first`` acts on pairs ``{2k-1, 2k}``, ``second`` on pairs ``{2k, 2k+1}``.
    """
    if u.band > 1:
        raise ValidationError("two-layer form needs a nearest-neighbour walk; regroup first")
    if u.M % 2:
        raise ValidationError("two-layer form needs an even number of sites")
    n = index(u, 0, tol)
    if n != 0:
        raise IndexConditionError(f"index {n} ≠ 0", found=n, required=0)
    m = u.M
    blocks = []
    for k in range(m // 2):
        sites, v = decouple_unitary(u, 2 * k, tol)
        if sites:
            blocks.append((sites, v))
    vlayer = PartitionedLayer(u.dims, blocks)
    w = u.matrix @ vlayer.matrix()
    off = u.offsets
    second_blocks = []
    for k in range(m // 2):
        idx = np.arange(off[2 * k], off[2 * k + 2])
        second_blocks.append(((2 * k, 2 * k + 1), polar_unitary(w[np.ix_(idx, idx)])))
    second = PartitionedLayer(u.dims, second_blocks)
    first = PartitionedLayer(u.dims, [(s, v.conj().T) for s, v in blocks])
    res = float(np.abs(second.matrix() @ first.matrix() - u.matrix).max())
    if res > RECONSTRUCTION_TOL:
        raise VerificationError(f"two-layer reconstruction residual {res:.3e}")
    return first, second


@dataclass(frozen=True)
class HomotopySample:
    t: float
    value: BandedUnitary
    generator_norm: float


def connect_to_identity(u: BandedUnitary, t: float, tol: float = INTEGRALITY_TOL) -> HomotopySample:
    """Point ``t`` of a band-2 path from the identity (t=0) to ``u`` (t=1)."""
    if not 0.0 <= t <= 1.0:
        raise ValidationError("path parameter must lie in [0, 1]")
    first, second = two_layer_implementation(u, tol)
    if 2 * 2 >= u.M:
        raise ValidationError("band-2 path samples need a ring of at least 5 sites")
    gen_norm = 0.0
    layers = []
    for layer in (first, second):
        blocks = []
        for sites, mat in layer.blocks:
            h = unitary_log(mat)
            gen_norm = max(gen_norm, float(np.abs(np.linalg.eigvalsh(h)).max()) if h.size else 0.0)
            blocks.append((sites, unitary_power(mat, t)))
        layers.append(PartitionedLayer(u.dims, blocks))
    value = layers[1].matrix() @ layers[0].matrix()
    return HomotopySample(float(t), BandedUnitary(u.dims, 2, value), gen_norm)


def crossover(u1: BandedUnitary, u2: BandedUnitary, cut: int = 0, tol: float = INTEGRALITY_TOL) -> BandedUnitary:
    """Walk equal to ``u1`` on the arc left of ``cut`` and ``u2`` on the arc right of it.

    On a ring the two arcs meet at two interfaces, ``cut`` and the antipodal
    position ``cut + M//2``; both are spliced.
    """
    _same_structure(u1, u2)
    n1, n2 = index(u1, cut, tol), index(u2, cut, tol)
    if n1 != n2:
        raise IndexConditionError(f"indices differ: {n1} ≠ {n2}", found=(n1, n2))
    x = compose(adjoint(u2), u1)
    m = u1.M
    anti = cut + m // 2
    if m // 2 < 2 * x.band or m - m // 2 < 2 * x.band:
        raise ValidationError("ring too small to splice both interfaces")
    v = np.eye(u1.total_dim, dtype=complex)
    for c in (cut, anti):
        sites, vc = decouple_unitary(x, c, tol)
        if sites:
            idx = np.concatenate([np.arange(u1.offsets[s], u1.offsets[s + 1]) for s in sites])
            v[np.ix_(idx, idx)] = vc
    left_arc = [(anti + i) % m for i in range((cut - anti) % m)]
    p_left = np.zeros(u1.total_dim)
    for s in left_arc:
        p_left[u1.offsets[s]:u1.offsets[s + 1]] = 1.0
    mat = (u1.matrix @ v) * p_left[None, :] + u2.matrix * (1 - p_left)[None, :]
    out = BandedUnitary(u1.dims, 0, mat, check=False)
    band = out.measured_band(1e-12)
    if 2 * band >= m:
        raise ValidationError("spliced walk exceeds the admissible band")
    return BandedUnitary(u1.dims, band, mat, tol=1e-9)


def splice_window(u1: BandedUnitary, u2: BandedUnitary, cut: int = 0) -> set[int]:
    """Sites of the left arc whose columns may differ from ``u1`` after a crossover."""
    lx = u1.band + u2.band
    m = u1.M
    anti = cut + m // 2
    return {(cut - 1 - i) % m for i in range(lx)} | {(anti + i) % m for i in range(lx)}


def doubled_implementation(u: BandedUnitary):
    """Commuting local unitaries ``T_x`` and swaps ``S_x`` on the doubled cells.

    ``(prod S_x)(prod T_x)`` equals ``direct_sum(u, adjoint(u))``.
    """
    dims2 = tuple(2 * d for d in u.dims)
    off2 = np.concatenate([[0], np.cumsum(dims2)]).astype(int)
    n = off2[-1]
    first = np.concatenate([np.arange(off2[x], off2[x] + u.dims[x]) for x in range(u.M)])
    lift = np.eye(n, dtype=complex)
    lift[np.ix_(first, first)] = u.matrix
    swaps, ts = [], []
    for x in range(u.M):
        s = np.eye(n, dtype=complex)
        d = u.dims[x]
        a = np.arange(off2[x], off2[x] + d)
        b = a + d
        s[np.ix_(a, a)] = 0
        s[np.ix_(b, b)] = 0
        s[np.ix_(a, b)] = np.eye(d)
        s[np.ix_(b, a)] = np.eye(d)
        swaps.append(BandedUnitary(dims2, 0, s, check=False))
        ts.append(lift.conj().T @ s @ lift)
    band2 = min(2 * u.band, (u.M - 1) // 2)
    ts = [BandedUnitary(dims2, band2, t, check=False) for t in ts]
    return ts, swaps


def doubled_product(ts, swaps) -> np.ndarray:
    n = ts[0].total_dim
    pt = np.eye(n, dtype=complex)
    for t in ts:
        pt = t.matrix @ pt
    ps = np.eye(n, dtype=complex)
    for s in swaps:
        ps = s.matrix @ ps
    return ps @ pt


def circuit_walk(dims, layers) -> BandedUnitary:
    """Product of layers (first layer acts first); a layer is a PartitionedLayer or an int shift."""
    dims = tuple(dims)
    m = len(dims)
    mat = np.eye(sum(dims), dtype=complex)
    band = 0
    for layer in layers:
        if isinstance(layer, PartitionedLayer):
            if layer.dims != dims:
                raise ValidationError("layer cell structure differs from the circuit")
            mat = layer.matrix() @ mat
            band += layer.width() - 1
        else:
            k = int(layer)
            if any(dims[(x + k) % m] != dims[x] for x in range(m)):
                raise ValidationError("shift layer needs cell dims invariant under the rotation")
            mat = _shift_matrix(dims, k) @ mat
            band += abs(k)
    measured = BandedUnitary(dims, 0, mat, check=False).measured_band()
    return BandedUnitary(dims, measured, mat)


def _shift_matrix(dims, k: int) -> np.ndarray:
    m = len(dims)
    off = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    n = off[-1]
    mat = np.zeros((n, n), dtype=complex)
    for x in range(m):
        y = (x + k) % m
        mat[off[y]:off[y + 1], off[x]:off[x + 1]] = np.eye(dims[x])
    return mat
