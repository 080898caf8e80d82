"""Finite-dimensional *-subalgebras of matrix algebras.

Every algebra is stored through a basis that is orthonormal for the
normalized Hilbert-Schmidt product ``<x, y> = Tr(x* y) / D``.  Structural
questions (is it a full matrix algebra, what is its commutant, which unitary
maps it onto another algebra) are answered from a block decomposition

    A = W (M_{r_1} (x) 1_{m_1}  +  ...  +  M_{r_k} (x) 1_{m_k}) W*

which is computed once per algebra and cached.  Algebras generated by a set
of matrices are obtained as double commutants, so no product closure over the
full span is ever iterated.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import prod

import numpy as np

from .errors import ValidationError, VerificationError
from .linalg import (
    as_complex_matrix,
    cluster_sorted,
    null_space,
    polar_unitary,
    require_unitary,
    unitarity_residual,
)
from .tensor import split_blocks

_SEED = 0x5EED
MEMBERSHIP_TOL = 1e-9
GRAM_TOL = 1e-10


def normalized_trace(m) -> complex:
    a = as_complex_matrix(m)
    return complex(np.trace(a) / a.shape[0])


def hs_inner(x, y) -> complex:
    a, b = as_complex_matrix(x), as_complex_matrix(y)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b) / a.shape[0])


@dataclass(frozen=True)
class TensorSplit:
    factor_dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        if not dims or any(d < 1 for d in dims):
            raise ValidationError(f"factor dims must be positive integers, got {self.factor_dims}")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def total(self) -> int:
        return prod(self.factor_dims)

    def flat_index(self, multi) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.factor_dims))

    def multi_index(self, flat: int) -> tuple:
        return tuple(int(i) for i in np.unravel_index(flat, self.factor_dims))


class BlockStructure:
    """Adapted orthonormal basis ``W`` and block shapes ``(r, m)``.

    Column ``k*m + j`` of block ``i`` is the ``j``-th copy of the ``k``-th
    matrix-unit vector, so the algebra acts as ``M_r (x) 1_m`` on it.
    """

    def __init__(self, unitary: np.ndarray, blocks):
        self.unitary = unitary
        self.blocks = tuple((int(r), int(m)) for r, m in blocks)
        self.offsets = np.cumsum([0] + [r * m for r, m in self.blocks])
        self.unitary.setflags(write=False)

    @property
    def ambient_dim(self) -> int:
        return self.unitary.shape[0]

    @property
    def algebra_dim(self) -> int:
        return sum(r * r for r, _ in self.blocks)

    def block_columns(self, i: int) -> np.ndarray:
        r, m = self.blocks[i]
        o = self.offsets[i]
        return self.unitary[:, o:o + r * m].reshape(-1, r, m)

    def basis(self) -> np.ndarray:
        d = self.ambient_dim
        parts = []
        for i, (r, m) in enumerate(self.blocks):
            w = self.block_columns(i)
            units = np.einsum("daj,ebj->abde", w, w.conj(), optimize=True)
            parts.append(units.reshape(r * r, d, d) * np.sqrt(d / m))
        return np.concatenate(parts, axis=0)

    def commutant(self) -> "BlockStructure":
        cols, blocks = [], []
        for i, (r, m) in enumerate(self.blocks):
            w = self.block_columns(i)
            cols.append(w.transpose(0, 2, 1).reshape(self.ambient_dim, r * m))
            blocks.append((m, r))
        return BlockStructure(np.hstack(cols), blocks)

    def conjugated(self, u: np.ndarray) -> "BlockStructure":
        return BlockStructure(u.conj().T @ self.unitary, self.blocks)

    def _project_adapted(self, y: np.ndarray) -> np.ndarray:
        """Conditional expectation in adapted coordinates; y has shape (D, S, D, S)."""
        out = np.zeros_like(y)
        for i, (r, m) in enumerate(self.blocks):
            o = self.offsets[i]
            n = r * m
            s = y.shape[1]
            seg = y[o:o + n, :, o:o + n, :].reshape(r, m, s, r, m, s)
            x = np.einsum("ajsbjt->asbt", seg) / m
            e = np.einsum("asbt,jk->ajsbkt", x, np.eye(m))
            out[o:o + n, :, o:o + n, :] = e.reshape(n, s, n, s)
        return out

    def expectation(self, x: np.ndarray) -> np.ndarray:
        w = self.unitary
        y = (w.conj().T @ x @ w)[:, None, :, None]
        e = self._project_adapted(y)[:, 0, :, 0]
        return w @ e @ w.conj().T

    def residual(self, x: np.ndarray) -> float:
        """Distance of ``x`` from the algebra, relative to ``max(1, ||x||)`` in tau-norm."""
        return self.spectator_residual(np.asarray(x)[:, None, :, None])

    def spectator_residual(self, g: np.ndarray) -> float:
        """Distance of g (indexed kept,spectator,kept,spectator) from A (x) (everything)."""
        w = self.unitary
        y = np.tensordot(w.conj(), g, axes=(0, 0))
        y = np.tensordot(y, w, axes=(2, 0)).transpose(0, 1, 3, 2)
        dev = y - self._project_adapted(y)
        total = g.shape[0] * g.shape[1]
        scale = max(1.0, np.linalg.norm(g) / np.sqrt(total))
        return float(np.linalg.norm(dev) / np.sqrt(total) / scale)


class MatrixAlgebra:
    """A unital *-subalgebra of ``M_D`` given by a tau-orthonormal basis."""

    def __init__(self, basis, *, check: bool = True, structure: BlockStructure | None = None):
        b = np.asarray(basis, dtype=complex)
        if b.ndim != 3 or b.shape[1] != b.shape[2]:
            raise ValidationError(f"basis must have shape (k, D, D), got {b.shape}")
        b.setflags(write=False)
        self.basis = b
        if structure is not None:
            self.__dict__["structure"] = structure
        if check:
            res = self.gram_residual()
            if res > GRAM_TOL:
                raise ValidationError(f"basis is not orthonormal (Gram residual {res:.3e})")

    @classmethod
    def from_structure(cls, structure: BlockStructure) -> "MatrixAlgebra":
        return cls(structure.basis(), check=False, structure=structure)

    @classmethod
    def full(cls, d: int) -> "MatrixAlgebra":
        return cls.from_structure(BlockStructure(np.eye(d, dtype=complex), [(d, 1)]))

    @classmethod
    def trivial(cls, d: int) -> "MatrixAlgebra":
        return cls.from_structure(BlockStructure(np.eye(d, dtype=complex), [(1, d)]))

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[1]

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def _flat(self) -> np.ndarray:
        return self.basis.reshape(self.dim, -1)

    def coefficients(self, x) -> np.ndarray:
        return self._flat().conj() @ np.asarray(x).reshape(-1) / self.ambient_dim

    def project(self, x) -> np.ndarray:
        return np.tensordot(self.coefficients(x), self.basis, axes=1)

    def residual(self, x) -> float:
        x = np.asarray(x, dtype=complex)
        d = self.ambient_dim
        scale = max(1.0, np.linalg.norm(x) / np.sqrt(d))
        return float(np.linalg.norm(x - self.project(x)) / np.sqrt(d) / scale)

    @property
    def contains_identity(self) -> bool:
        return self.residual(np.eye(self.ambient_dim)) <= MEMBERSHIP_TOL

    def gram_residual(self) -> float:
        f = self._flat()
        g = f.conj() @ f.T / self.ambient_dim
        return float(np.abs(g - np.eye(self.dim)).max()) if self.dim else 0.0

    def closure_residual(self, max_pairs: int | None = None, rng=None) -> float:
        """Largest distance from the span of a product or adjoint of basis elements."""
        k = self.dim
        pairs = [(i, j) for i in range(k) for j in range(k)]
        if max_pairs is not None and len(pairs) > max_pairs:
            rng = rng or np.random.default_rng(_SEED)
            pick = rng.choice(len(pairs), size=max_pairs, replace=False)
            pairs = [pairs[p] for p in pick]
        worst = 0.0
        for i, j in pairs:
            worst = max(worst, self.residual(self.basis[i] @ self.basis[j]))
        for i in range(k):
            worst = max(worst, self.residual(self.basis[i].conj().T))
        return worst

    @cached_property
    def structure(self) -> BlockStructure:
        return _decompose(self.basis)

    def commutant(self) -> "MatrixAlgebra":
        return MatrixAlgebra.from_structure(self.structure.commutant())

    def center(self) -> "MatrixAlgebra":
        s = self.structure
        d = s.ambient_dim
        elems = []
        for i, (r, m) in enumerate(s.blocks):
            w = s.block_columns(i).reshape(d, r * m)
            elems.append(w @ w.conj().T * np.sqrt(d / (r * m)))
        return MatrixAlgebra(np.array(elems), check=False)


# ---------------------------------------------------------------------------
# commutants and block decomposition


def _random_combination(elements: np.ndarray, rng) -> np.ndarray:
    c = rng.normal(size=len(elements)) + 1j * rng.normal(size=len(elements))
    return np.tensordot(c, elements, axes=1)


def _hermitian(x: np.ndarray) -> np.ndarray:
    return x + x.conj().T


def _restrict_commutant(cands: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Keep the part of span(cands) that commutes with ``h``."""
    d = h.shape[0]
    comm = np.matmul(h, cands) - np.matmul(cands, h)
    a = comm.reshape(len(cands), -1).T
    floor = 1e-11 * (np.linalg.norm(h) + 1e-300) * np.sqrt(d)
    if np.linalg.norm(a) <= floor:
        return cands
    ker = null_space(a, rel_tol=1e-9, abs_floor=floor)
    return np.einsum("kj,kab->jab", ker, cands, optimize=True)


def _commutant_basis(hermitian: np.ndarray, others, cluster_tol: float = 1e-7) -> np.ndarray:
    """Orthonormal basis of the commutant of ``{hermitian} + others``."""
    d = hermitian.shape[0]
    w, v = np.linalg.eigh(hermitian)
    scale = max(1.0, float(np.abs(w).max()))
    elems = []
    for g in cluster_sorted(w, cluster_tol * scale):
        vg = v[:, g]
        units = np.einsum("da,eb->abde", vg, vg.conj())
        elems.append(units.reshape(len(g) ** 2, d, d))
    cands = np.concatenate(elems, axis=0) * np.sqrt(d)
    for h in others:
        cands = _restrict_commutant(cands, h)
    return cands


def _intersect_spans(a: np.ndarray, b: np.ndarray, d: int) -> np.ndarray:
    """Orthonormal basis of span(a) cap span(b) for orthonormal families."""
    g = a.reshape(len(a), -1).conj() @ b.reshape(len(b), -1).T / d
    _, s, vh = np.linalg.svd(g)
    keep = s > 1 - 1e-8
    coeffs = vh[: len(s)][keep].conj()
    return np.einsum("jk,kab->jab", coeffs, b)


def _decompose(basis: np.ndarray, attempts: int = 4) -> BlockStructure:
    k, d = basis.shape[0], basis.shape[1]
    if k == 1:
        return BlockStructure(np.eye(d, dtype=complex), [(1, d)])
    for attempt in range(attempts):
        rng = np.random.default_rng(_SEED + 17 * attempt)
        h1 = _hermitian(_random_combination(basis, rng))
        h2 = _random_combination(basis, rng)
        cands = _commutant_basis(h1, [h2, h2.conj().T])
        center = _intersect_spans(basis, cands, d)
        hz = _hermitian(_random_combination(center, rng))
        s = _try_structure(hz, h1, h2)
        if s is None:
            continue
        if all(s.residual(b) <= MEMBERSHIP_TOL for b in basis):
            return s
    raise VerificationError("could not find a block decomposition; input is not a *-algebra basis")


def _try_structure(hz, h1, h2, cluster_tol=1e-7):
    d = hz.shape[0]
    wz, vz = np.linalg.eigh(hz)
    cols, blocks = [], []
    for g in cluster_sorted(wz, cluster_tol * max(1.0, float(np.abs(wz).max()))):
        q = vz[:, g]
        wb, vb = np.linalg.eigh(q.conj().T @ h1 @ q)
        sub = cluster_sorted(wb, cluster_tol * max(1.0, float(np.abs(wb).max())))
        m = len(sub[0])
        if any(len(s) != m for s in sub):
            return None
        e = [q @ vb[:, s] for s in sub]
        vecs = [e[0]]
        for ek in e[1:]:
            x = ek.conj().T @ h2 @ e[0]
            nx = np.linalg.norm(x)
            if nx < 1e-9 or np.linalg.norm(x.conj().T @ x - (nx**2 / m) * np.eye(m)) > 1e-7 * nx**2:
                return None
            vecs.append(ek @ polar_unitary(x))
        cols.append(np.stack(vecs, axis=1).reshape(d, -1))
        blocks.append((len(sub), m))
    w = np.hstack(cols)
    if w.shape != (d, d) or unitarity_residual(w) > 1e-8:
        return None
    return BlockStructure(w, blocks)


def _generated_structure(probes, d, failing, refine, attempts: int = 6) -> BlockStructure:
    probes = [p for p in probes if np.linalg.norm(p) > 1e-13]
    if not probes:
        return BlockStructure(np.eye(d, dtype=complex), [(1, d)])
    stack = np.array(probes)
    extra = []
    for attempt in range(attempts):
        rng = np.random.default_rng(_SEED + attempt)
        pool = np.concatenate([stack, np.array(extra)]) if extra else stack
        h1 = _hermitian(_random_combination(pool, rng))
        h2 = _random_combination(pool, rng)
        others = [h2, h2.conj().T]
        for e in extra:
            others += [e, e.conj().T]
        comm = _commutant_basis(h1, others)
        struct = _decompose(comm).commutant()
        bad = failing(struct)
        if not bad:
            return struct
        for x in bad:
            extra.extend(refine(x, attempt))
    raise VerificationError("algebra generation did not converge")


def generate_algebra(generators, d: int) -> MatrixAlgebra:
    """Smallest unital *-algebra in ``M_d`` containing the generators."""
    gens = [as_complex_matrix(g, "generator") for g in generators]
    for g in gens:
        if g.shape != (d, d):
            raise ValidationError(f"generator of shape {g.shape} does not live in M_{d}")

    def failing(s):
        return [g for g in gens if s.residual(g) > MEMBERSHIP_TOL]

    def refine(g, _attempt):
        return [g]

    probes = gens + [g.conj().T for g in gens]
    return MatrixAlgebra.from_structure(_generated_structure(probes, d, failing, refine))


def support_algebra(elements, split: TensorSplit, keep) -> MatrixAlgebra:
    """Smallest algebra on the kept factors whose tensor product with the rest contains every element."""
    if not isinstance(split, TensorSplit):
        split = TensorSplit(tuple(split))
    keep = [int(k) for k in keep]
    n = len(split.factor_dims)
    if len(set(keep)) != len(keep) or any(k < 0 or k >= n for k in keep) or not keep:
        raise ValidationError(f"invalid kept factors {keep} for a split with {n} factors")
    blocks = []
    for x in elements:
        x = np.asarray(x, dtype=complex)
        if x.shape != (split.total, split.total):
            raise ValidationError("element does not live in the ambient algebra of the split")
        blocks.append(split_blocks(x, split.factor_dims, keep))
    dk = prod(split.factor_dims[k] for k in keep)
    if not blocks:
        return MatrixAlgebra.trivial(dk)
    ds = blocks[0].shape[1]
    rng = np.random.default_rng(_SEED)

    def contractions(g, count):
        out = [np.einsum("aibi->ab", g)]
        for _ in range(count):
            f = rng.normal(size=(ds, ds)) + 1j * rng.normal(size=(ds, ds))
            out.append(np.einsum("aibj,ji->ab", g, f))
        return out

    def failing(s):
        return [g for g in blocks if s.spectator_residual(g) > MEMBERSHIP_TOL]

    def refine(g, attempt):
        if attempt < 2:
            return contractions(g, 4)
        return [g[:, i, :, j] for i in range(ds) for j in range(ds)]

    probes = [c for g in blocks for c in contractions(g, 2)]
    return MatrixAlgebra.from_structure(_generated_structure(probes, dk, failing, refine))


def full_matrix_check(a: MatrixAlgebra) -> int | None:
    """Return ``r`` if ``a`` is isomorphic to ``M_r``, otherwise ``None``."""
    s = a.structure
    if len(s.blocks) != 1:
        return None
    r = s.blocks[0][0]
    return r if a.dim == r * r else None


def overlap_eta(a: MatrixAlgebra, b: MatrixAlgebra) -> float:
    if a.ambient_dim != b.ambient_dim:
        raise ValidationError("overlap needs algebras in the same ambient dimension")
    g = a._flat().conj() @ b._flat().T / a.ambient_dim
    return float(np.sqrt(np.sum(np.abs(g) ** 2)))


def conjugate_algebra(u, a: MatrixAlgebra, tol: float = 1e-10) -> MatrixAlgebra:
    """Image of ``a`` under ``x -> u* x u``."""
    u = require_unitary(u, tol, "conjugating unitary")
    if u.shape[0] != a.ambient_dim:
        raise ValidationError("unitary and algebra dimensions differ")
    basis = np.matmul(np.matmul(u.conj().T, a.basis), u)
    structure = a.__dict__.get("structure")
    return MatrixAlgebra(
        basis, check=False, structure=structure.conjugated(u) if structure is not None else None
    )


def intertwining_unitary(a: MatrixAlgebra, b: MatrixAlgebra) -> np.ndarray:
    """Unitary ``V`` with ``V* a V = b`` for two equally positioned full matrix algebras."""
    if a.ambient_dim != b.ambient_dim:
        raise ValidationError("algebras live in different ambient dimensions")
    sa, sb = a.structure, b.structure
    if len(sa.blocks) != 1 or len(sb.blocks) != 1 or sa.blocks != sb.blocks:
        raise ValidationError(
            f"algebras are not isomorphic as positioned subalgebras ({sa.blocks} vs {sb.blocks})"
        )
    v = sa.unitary @ sb.unitary.conj().T
    col = v[:, 0]
    lead = np.flatnonzero(np.abs(col) > 1e-12)[0]
    return v * (abs(col[lead]) / col[lead])


def max_commutator(a: MatrixAlgebra, b: MatrixAlgebra) -> float:
    """Largest tau-norm of ``[x, y]`` over the two orthonormal bases."""
    d = a.ambient_dim
    worst = 0.0
    for x in a.basis:
        c = np.matmul(x, b.basis) - np.matmul(b.basis, x)
        worst = max(worst, float(np.linalg.norm(c.reshape(len(c), -1), axis=1).max()) / np.sqrt(d))
    return worst


def sets_equal(a: MatrixAlgebra, b: MatrixAlgebra) -> float:
    """Largest distance of a basis element of either algebra from the other algebra."""
    worst = max((b.residual(x) for x in a.basis), default=0.0)
    return max(worst, max((a.residual(y) for y in b.basis), default=0.0))


def factor_algebra(dims, keep) -> MatrixAlgebra:
    """Full matrix algebra of the kept tensor factors, tensored with identities."""
    dims = tuple(int(d) for d in dims)
    keep = list(keep)
    rest = [i for i in range(len(dims)) if i not in keep]
    total = prod(dims)
    order = np.arange(total).reshape(dims).transpose(keep + rest).reshape(-1)
    w = np.eye(total, dtype=complex)[:, order]
    r = prod(dims[i] for i in keep)
    return MatrixAlgebra.from_structure(BlockStructure(w, [(r, total // r)]))
