"""Causal automorphisms of rings of matrix-algebra cells.

Conventions
-----------
* Heisenberg picture: an automorphism acts as ``alpha(A) = U* A U``.
* Circuit layers are listed in the order they are applied to states, so the
  Heisenberg action processes them from the last layer to the first.
* A shift layer ``by=k`` moves cell contents ``k`` cells to the right; in the
  Heisenberg picture an operator at ``x`` is carried to ``x - k``.  The basic
  shift (``by=1``) has index ``d``.
* Cell positions of localized operators are integers on the line; the ring
  cell of position ``x`` is ``x mod N``.  Circuits are evaluated on the
  periodic extension of their gates, so supports may exceed the ring.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import gcd, prod

import numpy as np
import scipy.sparse

from .errors import IndexConditionError, ValidationError, VerificationError
from .linalg import cell_generators, matrix_unit, require_unitary
from .operator_algebra import (
    MatrixAlgebra,
    TensorSplit,
    factor_algebra,
    full_matrix_check,
    intertwining_unitary,
    max_commutator,
    overlap_eta,
    support_algebra,
)
from .tensor import conjugate_by_gate, embed, pad_identity, permute_factors, reduce_to, strip_identity

CAUSALITY_TOL = 1e-9
RECONSTRUCTION_TOL = 1e-9
COMMUTATION_TOL = 1e-9
SNAP_TOL = 1e-6
DENSE_CELL_LIMIT = 8
DENSE_DIM_LIMIT = 3
MONOMIAL_DIM_LIMIT = 2**20


@dataclass(frozen=True)
class LocalizedOperator:
    start: int
    dims: tuple
    matrix: np.ndarray = field(repr=False)

    @property
    def stop(self) -> int:
        return self.start + len(self.dims)

    def in_window(self, lo: int, window_dims) -> np.ndarray:
        """Matrix on the window of cells ``lo .. lo + len(window_dims) - 1``."""
        hi = lo + len(window_dims)
        if self.start < lo or self.stop > hi:
            raise ValidationError(f"operator on [{self.start}, {self.stop}) does not fit window [{lo}, {hi})")
        left = prod(window_dims[: self.start - lo])
        right = prod(window_dims[self.stop - lo:])
        return pad_identity(self.matrix, left, right)

    def stripped(self, rel_tol: float = 1e-11) -> "LocalizedOperator":
        n_left, dims, mat = strip_identity(self.matrix, self.dims, rel_tol)
        return LocalizedOperator(self.start + n_left, dims, mat)


def cell_operator(x: int, mat) -> LocalizedOperator:
    mat = np.asarray(mat, dtype=complex)
    return LocalizedOperator(x, (mat.shape[0],), mat)


def cell_matrix_units(d: int):
    return [matrix_unit(d, i, j) for i in range(d) for j in range(d)]


# ---------------------------------------------------------------------------
# systems


class QcaSystem:
    """Base class; subclasses implement :meth:`heisenberg`."""

    N: int
    dims: tuple
    lifted: bool = False

    def cell_dim(self, x: int) -> int:
        return self.dims[x % self.N]

    def window_dims(self, lo: int, hi: int) -> tuple:
        return tuple(self.cell_dim(x) for x in range(lo, hi))

    def heisenberg(self, op: LocalizedOperator) -> LocalizedOperator:  # pragma: no cover
        raise NotImplementedError

    def inverse(self) -> "QcaSystem":  # pragma: no cover
        raise NotImplementedError

    def theta_conjugate(self) -> "QcaSystem":  # pragma: no cover
        raise NotImplementedError

    def _check_op(self, op: LocalizedOperator):
        if tuple(op.dims) != self.window_dims(op.start, op.stop):
            raise ValidationError("operator cell dims do not match the system")

    @cached_property
    def reach(self) -> tuple[int, int]:
        """Measured ``(left, right)`` spread of single-cell images."""
        left = right = 0
        for x in range(self.N):
            for g in cell_generators(self.cell_dim(x)):
                img = self.heisenberg(cell_operator(x, g))
                left = max(left, x - img.start)
                right = max(right, img.stop - 1 - x)
        return left, right

    def group_size(self) -> int:
        return max(1, *self.reach)


def _check_uniform_shift(dims, k):
    n = len(dims)
    if any(dims[(x + k) % n] != dims[x] for x in range(n)):
        raise ValidationError("shift layer needs cell dims invariant under the rotation")


@dataclass(frozen=True)
class ShiftLayer:
    by: int


class GateLayer:
    """Unitaries on disjoint blocks of cyclically consecutive cells."""

    def __init__(self, dims, blocks, tol: float = 1e-10):
        n = len(dims)
        seen = set()
        clean = []
        for cells, mat in blocks:
            cells = tuple(int(c) % n for c in cells)
            for a, b in zip(cells, cells[1:]):
                if (b - a) % n != 1:
                    raise ValidationError(f"gate cells {cells} are not consecutive")
            if len(cells) > n or seen.intersection(cells):
                raise ValidationError(f"gate on cells {cells} overlaps another gate")
            seen.update(cells)
            mat = require_unitary(mat, tol, f"gate on cells {cells}")
            if mat.shape[0] != prod(dims[c] for c in cells):
                raise ValidationError(f"gate on cells {cells} has wrong dimension")
            clean.append((cells, mat))
        self.blocks = tuple(sorted(clean, key=lambda b: b[0][0]))

    def map_gates(self, fn) -> "GateLayer":
        obj = object.__new__(GateLayer)
        obj.blocks = tuple((c, fn(m)) for c, m in self.blocks)
        return obj


class CircuitQca(QcaSystem):
    lifted = True

    def __init__(self, dims, layers):
        self.dims = tuple(int(d) for d in dims)
        self.N = len(self.dims)
        if self.N < 1 or any(d < 1 for d in self.dims):
            raise ValidationError("cell dims must be positive")
        clean = []
        for layer in layers:
            if isinstance(layer, ShiftLayer):
                _check_uniform_shift(self.dims, layer.by)
                clean.append(layer)
            elif isinstance(layer, GateLayer):
                clean.append(layer)
            else:
                clean.append(GateLayer(self.dims, layer))
        self.layers = tuple(clean)

    def heisenberg(self, op: LocalizedOperator) -> LocalizedOperator:
        self._check_op(op)
        lo, mat, dims = op.start, op.matrix, tuple(op.dims)
        n = self.N
        for layer in reversed(self.layers):
            if isinstance(layer, ShiftLayer):
                lo -= layer.by
                continue
            hi = lo + len(dims)
            touching = []
            for cells, gate in layer.blocks:
                w = len(cells)
                c0 = cells[0]
                j_lo = -((c0 + w - 1 - lo) // n)  # smallest j with c0 + jN + w > lo
                j = j_lo
                while c0 + j * n < hi:
                    start = c0 + j * n
                    if start + w > lo:
                        touching.append((start, w, gate))
                    j += 1
            if not touching:
                continue
            nlo = min([lo] + [s for s, _, _ in touching])
            nhi = max([hi] + [s + w for s, w, _ in touching])
            mat = pad_identity(mat, prod(self.window_dims(nlo, lo)), prod(self.window_dims(hi, nhi)))
            lo, dims = nlo, self.window_dims(nlo, nhi)
            for s, w, gate in touching:
                mat = conjugate_by_gate(mat, dims, gate, s - lo, w)
            n_left, dims, mat = strip_identity(mat, dims)
            lo += n_left
        return LocalizedOperator(lo, tuple(dims), mat)

    def inverse(self) -> "CircuitQca":
        layers = []
        for layer in reversed(self.layers):
            if isinstance(layer, ShiftLayer):
                layers.append(ShiftLayer(-layer.by))
            else:
                layers.append(layer.map_gates(lambda m: m.conj().T))
        return CircuitQca(self.dims, layers)

    def theta_conjugate(self) -> "CircuitQca":
        layers = [l if isinstance(l, ShiftLayer) else l.map_gates(np.conj) for l in self.layers]
        return CircuitQca(self.dims, layers)

    def then(self, other: "CircuitQca") -> "CircuitQca":
        """Circuit applying ``self`` first and ``other`` second (Schrodinger order)."""
        if other.dims != self.dims:
            raise ValidationError("cell structures differ")
        return CircuitQca(self.dims, self.layers + other.layers)

    def shift_content(self) -> Fraction:
        """Index predicted by the shift layers alone (gate layers have index 1)."""
        d = self.dims[0]
        total = sum(l.by for l in self.layers if isinstance(l, ShiftLayer))
        if len(set(self.dims)) != 1:
            if total:
                raise ValidationError("shift content needs uniform cells")
            return Fraction(1)
        return Fraction(d) ** total


class GlobalQca(QcaSystem):
    """Automorphism given by a unitary on the whole ring.

    The unitary is either dense or monomial (a permutation of product-basis
    states with phases, ``U|c> = phase[c] |perm[c]>``).
    """

    def __init__(self, dims, band: int, matrix=None, *, permutation=None, phases=None, check: bool = True, tol: float = 1e-10):
        self.dims = tuple(int(d) for d in dims)
        self.N = len(self.dims)
        self.band = int(band)
        total = prod(self.dims)
        if self.band < 0 or 2 * self.band + 1 > self.N:
            raise ValidationError(f"band {self.band} is not admissible on a ring of {self.N} cells")
        if matrix is not None:
            if self.N > DENSE_CELL_LIMIT or max(self.dims) > DENSE_DIM_LIMIT:
                raise ValidationError(
                    f"dense ring unitaries are limited to {DENSE_CELL_LIMIT} cells of dim <= {DENSE_DIM_LIMIT}"
                )
            self.matrix = require_unitary(matrix, tol, "ring unitary")
            if self.matrix.shape[0] != total:
                raise ValidationError("ring unitary has the wrong dimension")
            self.permutation = None
            self.phases = None
        else:
            if permutation is None:
                raise ValidationError("need a dense matrix or a permutation")
            if total > MONOMIAL_DIM_LIMIT:
                raise ValidationError(f"ring dimension {total} exceeds the cap {MONOMIAL_DIM_LIMIT}")
            perm = np.asarray(permutation, dtype=np.int64)
            if perm.shape != (total,) or not np.array_equal(np.sort(perm), np.arange(total)):
                raise ValidationError("permutation is not a bijection of basis states")
            ph = np.ones(total, dtype=complex) if phases is None else np.asarray(phases, dtype=complex)
            if ph.shape != (total,) or np.abs(np.abs(ph) - 1).max() > tol:
                raise ValidationError("phases must be unimodular, one per basis state")
            self.matrix = None
            self.permutation = perm
            self.phases = ph
            self._inverse_perm = np.argsort(perm)
        self.strides = np.array([prod(self.dims[x + 1:]) for x in range(self.N)], dtype=np.int64)
        if check:
            self._check_causality()

    @property
    def is_monomial(self) -> bool:
        return self.matrix is None

    def _check_causality(self):
        for x in range(self.N):
            for g in cell_generators(self.dims[x]):
                self.heisenberg(cell_operator(x, g))

    def _digit(self, states, x):
        return (states // self.strides[x]) % self.dims[x]

    def heisenberg(self, op: LocalizedOperator) -> LocalizedOperator:
        self._check_op(op)
        n = self.N
        length = len(op.dims) + 2 * self.band
        if length > n:
            raise ValidationError(
                f"support of {len(op.dims)} cells with band {self.band} exceeds the ring of {n} cells"
            )
        positions = [(op.start + i) % n for i in range(len(op.dims))]
        lo = op.start - self.band
        window = [(lo + i) % n for i in range(length)]
        if self.is_monomial:
            x, res = self._conjugate_monomial(op.matrix, positions, window)
        else:
            full = embed(op.matrix, positions, self.dims)
            full = self.matrix.conj().T @ full @ self.matrix
            x, res = reduce_to(full, self.dims, window)
        if res > CAUSALITY_TOL:
            raise VerificationError(f"image leaves the declared band (residual {res:.3e}); unitary is not causal")
        return LocalizedOperator(lo, tuple(self.dims[w] for w in window), x).stripped()

    def _conjugate_monomial(self, mat, positions, window):
        dims = self.dims
        total = prod(dims)
        rest = [x for x in range(self.N) if x not in positions]

        def offsets(cells):
            sizes = [dims[c] for c in cells]
            if not cells:
                return np.zeros(1, dtype=np.int64)
            grid = np.indices(sizes).reshape(len(cells), -1)
            return (grid * self.strides[cells][:, None]).sum(axis=0)

        off_p = offsets(positions)
        off_r = offsets(rest)
        ii, jj = np.nonzero(np.abs(mat) > 0)
        vals = mat[ii, jj]
        rows = (off_p[ii][:, None] + off_r[None, :]).ravel()
        cols = (off_p[jj][:, None] + off_r[None, :]).ravel()
        vals = np.repeat(vals, len(off_r))
        # (U* F U)[a, b] = conj(ph[a]) F[perm a, perm b] ph[b]
        a = self._inverse_perm[rows]
        b = self._inverse_perm[cols]
        vals = vals * self.phases[a].conj() * self.phases[b]
        wsizes = [dims[w] for w in window]
        wstr = np.array([prod(wsizes[i + 1:]) for i in range(len(window))], dtype=np.int64)
        outside = [x for x in range(self.N) if x not in window]
        wa = sum(self._digit(a, w) * wstr[i] for i, w in enumerate(window))
        wb = sum(self._digit(b, w) * wstr[i] for i, w in enumerate(window))
        ra = sum((self._digit(a, c) * self.strides[c] for c in outside), np.zeros_like(a))
        rb = sum((self._digit(b, c) * self.strides[c] for c in outside), np.zeros_like(b))
        dw = prod(wsizes)
        d_out = total // dw
        same = ra == rb
        key = wa[same] * dw + wb[same]
        acc = np.bincount(key, weights=vals[same].real, minlength=dw * dw) + 1j * np.bincount(
            key, weights=vals[same].imag, minlength=dw * dw
        )
        x = (acc / d_out).reshape(dw, dw)
        dev = np.sum(np.abs(vals[same] - x.reshape(-1)[key]) ** 2) + np.sum(np.abs(vals[~same]) ** 2)
        # entries of x (x) 1 that the image lacks
        present = np.bincount(key, minlength=dw * dw)
        nonzero = np.abs(x.reshape(-1)) > 1e-14
        missing = np.sum((d_out - present[nonzero]) * np.abs(x.reshape(-1)[nonzero]) ** 2)
        norm = np.sqrt(np.sum(np.abs(vals) ** 2))
        res = float(np.sqrt(max(dev + missing, 0.0)) / max(norm, 1e-300))
        return x, res

    def inverse(self) -> "GlobalQca":
        if self.is_monomial:
            # U^{-1} |perm c> = conj(ph c) |c>
            ph = np.empty_like(self.phases)
            ph[self.permutation] = self.phases.conj()
            return GlobalQca(self.dims, self.band, permutation=self._inverse_perm, phases=ph, check=False)
        return GlobalQca(self.dims, self.band, self.matrix.conj().T, check=False)

    def theta_conjugate(self) -> "GlobalQca":
        if self.is_monomial:
            return GlobalQca(self.dims, self.band, permutation=self.permutation, phases=self.phases.conj(), check=False)
        return GlobalQca(self.dims, self.band, self.matrix.conj(), check=False)

    def dense(self) -> np.ndarray:
        if not self.is_monomial:
            return self.matrix
        total = prod(self.dims)
        return scipy.sparse.csr_matrix(
            (self.phases, (self.permutation, np.arange(total))), shape=(total, total)
        ).toarray()


class ComposedQca(QcaSystem):
    """``outer o inner``: Heisenberg images are computed by ``inner`` first."""

    def __init__(self, outer: QcaSystem, inner: QcaSystem):
        if outer.dims != inner.dims:
            raise ValidationError("cell structures differ")
        self.outer, self.inner = outer, inner
        self.dims, self.N = outer.dims, outer.N
        self.lifted = outer.lifted and inner.lifted

    def heisenberg(self, op):
        return self.outer.heisenberg(self.inner.heisenberg(op))

    def inverse(self):
        return ComposedQca(self.inner.inverse(), self.outer.inverse())

    def theta_conjugate(self):
        return ComposedQca(self.outer.theta_conjugate(), self.inner.theta_conjugate())


class ParallelQca(QcaSystem):
    """Two chains run side by side; cell ``x`` is ``first[x] (x) second[x]``."""

    def __init__(self, first: QcaSystem, second: QcaSystem):
        if first.N != second.N:
            raise ValidationError("parallel chains need equal ring sizes")
        self.first, self.second = first, second
        self.N = first.N
        self.dims = tuple(a * b for a, b in zip(first.dims, second.dims))
        self.lifted = first.lifted and second.lifted

    def _interleave(self, mat, da, db, to_split: bool):
        n = len(da)
        inter = [x for pair in zip(da, db) for x in pair]
        split_order = [2 * i for i in range(n)] + [2 * i + 1 for i in range(n)]
        if to_split:
            return permute_factors(mat, inter, split_order)
        back = list(np.argsort(split_order))
        return permute_factors(mat, list(da) + list(db), back)

    def heisenberg(self, op):
        self._check_op(op)
        n = len(op.dims)
        da = self.first.window_dims(op.start, op.stop)
        db = self.second.window_dims(op.start, op.stop)
        pa, pb = prod(da), prod(db)
        m = self._interleave(op.matrix, da, db, True)
        # operator Schmidt decomposition A = sum_k a_k (x) b_k
        r = m.reshape(pa, pb, pa, pb).transpose(0, 2, 1, 3).reshape(pa * pa, pb * pb)
        u, s, vh = np.linalg.svd(r, full_matrices=False)
        keep = s > 1e-13 * max(s[0], 1e-300)
        terms = []
        for k in np.flatnonzero(keep):
            a = (u[:, k] * s[k]).reshape(pa, pa)
            b = vh[k].reshape(pb, pb)
            ia = self.first.heisenberg(LocalizedOperator(op.start, da, a))
            ib = self.second.heisenberg(LocalizedOperator(op.start, db, b))
            terms.append((ia, ib))
        lo = min(min(t[0].start, t[1].start) for t in terms)
        hi = max(max(t[0].stop, t[1].stop) for t in terms)
        wa = self.first.window_dims(lo, hi)
        wb = self.second.window_dims(lo, hi)
        total = None
        for ia, ib in terms:
            piece = np.kron(ia.in_window(lo, wa), ib.in_window(lo, wb))
            total = piece if total is None else total + piece
        mat = self._interleave(total, wa, wb, False)
        return LocalizedOperator(lo, self.window_dims(lo, hi), mat).stripped()

    def inverse(self):
        return ParallelQca(self.first.inverse(), self.second.inverse())

    def theta_conjugate(self):
        return ParallelQca(self.first.theta_conjugate(), self.second.theta_conjugate())


# ---------------------------------------------------------------------------
# helpers shared by the index routes


def _images_in_window(system: QcaSystem, ops, lo: int, hi: int) -> list[np.ndarray]:
    wd = system.window_dims(lo, hi)
    out = []
    for op in ops:
        img = system.heisenberg(op)
        if img.start < lo or img.stop > hi:
            raise VerificationError(
                f"image on [{img.start}, {img.stop}) leaves the window [{lo}, {hi}); grouping too small"
            )
        out.append(img.in_window(lo, wd))
    return out


def region_generators(system: QcaSystem, lo: int, hi: int) -> list[LocalizedOperator]:
    return [cell_operator(x, g) for x in range(lo, hi) for g in cell_generators(system.cell_dim(x))]


def region_matrix_units(system: QcaSystem, lo: int, hi: int) -> list[LocalizedOperator]:
    dims = system.window_dims(lo, hi)
    d = prod(dims)
    return [LocalizedOperator(lo, dims, matrix_unit(d, i, j)) for i in range(d) for j in range(d)]


def _require_full(alg: MatrixAlgebra, what: str) -> int:
    r = full_matrix_check(alg)
    if r is None:
        raise VerificationError(f"{what} is not a full matrix algebra (blocks {alg.structure.blocks})")
    return r


def _check_ring(system: QcaSystem, cells: int):
    if not system.lifted and cells > system.N:
        raise ValidationError(f"computation needs {cells} cells but the ring has only {system.N}")


@dataclass
class PositionRecord:
    x: int
    r_left: int
    r_right: int
    d_left: int
    d_right: int
    value: Fraction


@dataclass
class SupportAlgebraReport:
    group: int
    positions: list
    max_commutator: float
    relations_ok: bool
    index: Fraction

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "index": f"{self.index.numerator}/{self.index.denominator}",
            "max_commutator": self.max_commutator,
            "relations_ok": self.relations_ok,
            "positions": [
                {"x": p.x, "r_left": p.r_left, "r_right": p.r_right, "d_left": p.d_left, "d_right": p.d_right}
                for p in self.positions
            ],
        }


@dataclass
class PositionAlgebras:
    """Support algebras of the image of cells ``[x, x+2k)``.

    ``left`` lives on cells ``[lo, x+k)`` and ``right`` on ``[x+k, hi)``, where
    ``[lo, hi)`` is the smallest window inside ``[x-k, x+3k)`` holding every image.
    """

    left: MatrixAlgebra
    right: MatrixAlgebra
    lo: int
    hi: int
    d_left: int
    d_right: int


def position_algebras(system: QcaSystem, k: int, x: int) -> PositionAlgebras:
    imgs = [system.heisenberg(g) for g in region_generators(system, x, x + 2 * k)]
    lo = min([x] + [i.start for i in imgs])
    hi = max([x + 2 * k] + [i.stop for i in imgs])
    if lo < x - k or hi > x + 3 * k:
        raise VerificationError(f"images of [{x}, {x + 2 * k}) leave the window [{x - k}, {x + 3 * k}); grouping too small")
    wd = system.window_dims(lo, hi)
    mats = [i.in_window(lo, wd) for i in imgs]
    d_left = prod(system.window_dims(x, x + k))
    d_right = prod(system.window_dims(x + k, x + 2 * k))
    split = TensorSplit(
        (prod(system.window_dims(lo, x)), d_left, d_right, prod(system.window_dims(x + 2 * k, hi)))
    )
    return PositionAlgebras(
        support_algebra(mats, split, [0, 1]), support_algebra(mats, split, [2, 3]), lo, hi, d_left, d_right
    )


def _pad_algebra(alg: MatrixAlgebra, left: int, right: int) -> MatrixAlgebra:
    return MatrixAlgebra(np.array([pad_identity(b, left, right) for b in alg.basis]), check=False)


def index_support(system: QcaSystem, group: int | None = None):
    """Index from the dimensions of support algebras at every position."""
    k = group or system.group_size()
    _check_ring(system, 4 * k)
    n = system.N
    records, found = [], {}
    for x in range(n):
        pa = position_algebras(system, k, x)
        rl = _require_full(pa.left, f"left support algebra at {x}")
        rr = _require_full(pa.right, f"right support algebra at {x}")
        d0, d1 = pa.d_left, pa.d_right
        if rl * rr != d0 * d1:
            raise VerificationError(f"support dimensions at {x} violate r_L r_R = d d'")
        value = Fraction(rl, d0)
        if value != Fraction(d1, rr):
            raise VerificationError(f"inconsistent index estimates at {x}")
        records.append(PositionRecord(x, rl, rr, d0, d1, value))
        found[x] = pa
    worst = 0.0
    ok = True
    for x in range(n):
        y = (x + 2 * k) % n
        if records[x].r_right * records[y].r_left != prod(system.window_dims(x + k, x + 3 * k)):
            ok = False
        # both algebras embedded in cells [x+k, x+3k)
        a, b = found[x], found[y]
        b_lo = b.lo + (x + 2 * k - y)
        right = _pad_algebra(a.right, 1, prod(system.window_dims(a.hi, x + 3 * k)))
        left = _pad_algebra(b.left, prod(system.window_dims(x + k, b_lo)), 1)
        worst = max(worst, max_commutator(right, left))
    if not ok:
        raise VerificationError("neighbouring support algebras do not fill their common region")
    if worst > COMMUTATION_TOL:
        raise VerificationError(f"neighbouring support algebras fail to commute ({worst:.3e})")
    values = {r.value for r in records}
    if len(values) != 1:
        raise VerificationError(f"index depends on position: {sorted(values)}")
    ind = values.pop()
    _check_divisibility(system, k, ind)
    return ind, SupportAlgebraReport(k, records, worst, ok, ind)


def _check_divisibility(system: QcaSystem, k: int, ind: Fraction):
    for x in range(system.N):
        d = prod(system.window_dims(x, x + k))
        if d % ind.numerator or d % ind.denominator:
            raise VerificationError(f"index {ind} does not divide the grouped cell dimension {d}")


def _interval(v):
    return (int(v[0]), int(v[1]))


def index_three_cell(system: QcaSystem, left=None, middle=None, right=None) -> Fraction:
    """Index as ``d_M / r`` from the support of the image of ``L M`` on ``M R``.

    Regions are ``(start, length)`` pairs of consecutive cells.
    """
    k = system.group_size()
    left = _interval(left) if left is not None else (-k, k)
    middle = _interval(middle) if middle is not None else (0, k)
    right = _interval(right) if right is not None else (k, k)
    if left[0] + left[1] != middle[0] or middle[0] + middle[1] != right[0]:
        raise ValidationError("regions must be consecutive")
    lo, hi = left[0], right[0] + right[1]
    for img in (system.heisenberg(g) for g in region_generators(system, middle[0], right[0])):
        if img.start < lo or img.stop > hi:
            raise ValidationError("middle region too small for the band")
    imgs = [system.heisenberg(g) for g in region_generators(system, left[0], right[0])]
    if any(i.stop > hi for i in imgs):
        raise ValidationError("right region too small for the band")
    wlo = min([middle[0]] + [i.start for i in imgs])
    _check_ring(system, hi - wlo)
    wd = system.window_dims(wlo, hi)
    mats = [i.in_window(wlo, wd) for i in imgs]
    split = TensorSplit(
        (
            prod(system.window_dims(wlo, middle[0])),
            prod(system.window_dims(middle[0], right[0])),
            prod(system.window_dims(right[0], hi)),
        )
    )
    r = _require_full(support_algebra(mats, split, [1, 2]), "three-cell support algebra")
    return Fraction(split.factor_dims[1], r)


def _image_algebra(system: QcaSystem, lo: int, hi: int, wlo: int, whi: int) -> MatrixAlgebra:
    d = prod(system.window_dims(lo, hi))
    mats = _images_in_window(system, region_matrix_units(system, lo, hi), wlo, whi)
    return MatrixAlgebra(np.array(mats) * np.sqrt(d), check=False)


def _region_algebra(system: QcaSystem, lo: int, hi: int, wlo: int, whi: int) -> MatrixAlgebra:
    dims = system.window_dims(wlo, whi)
    grouped = (prod(dims[: lo - wlo]), prod(dims[lo - wlo:hi - wlo]), prod(dims[hi - wlo:]))
    return factor_algebra(grouped, [1])


def overlap_values(system: QcaSystem, cut: int = 0, group: int | None = None) -> tuple[float, float]:
    """``(eta(alpha(A_R), A_L), eta(alpha(A_L), A_R))`` for the grouped cells around ``cut``."""
    k = group or system.group_size()
    _check_ring(system, 3 * k)
    num = overlap_eta(_image_algebra(system, cut, cut + k, cut - k, cut + 2 * k),
                      _region_algebra(system, cut - k, cut, cut - k, cut + 2 * k))
    den = overlap_eta(_image_algebra(system, cut - k, cut, cut - 2 * k, cut + k),
                      _region_algebra(system, cut, cut + k, cut - 2 * k, cut + k))
    return num, den


def snap_fraction(value: float, dl: int, dr: int, tol: float = SNAP_TOL) -> Fraction:
    g = gcd(dl, dr)
    divisors = [q for q in range(1, g + 1) if g % q == 0]
    cands = {Fraction(p, q) for p in divisors for q in divisors}
    best = min(cands, key=lambda f: abs(float(f) - value))
    if abs(float(best) - value) > tol:
        raise VerificationError(f"overlap quotient {value:.9f} is {abs(float(best) - value):.2e} from any admissible fraction")
    return best


def index_overlap(system: QcaSystem, cut: int = 0, group: int | None = None) -> Fraction:
    k = group or system.group_size()
    num, den = overlap_values(system, cut, k)
    dl = prod(system.window_dims(cut - k, cut))
    dr = prod(system.window_dims(cut, cut + k))
    return snap_fraction(num / den, dl, dr)


def eta_partial_transpose(u, dl: int, dr: int, tol: float = 1e-10) -> float:
    u = require_unitary(u, tol, "gate")
    if u.shape[0] != dl * dr:
        raise ValidationError("gate dimension does not match dl*dr")
    t = u.reshape(dl, dr, dl, dr).transpose(2, 1, 0, 3).reshape(dl * dr, dl * dr)
    m = t @ t.conj().T
    return float(np.sqrt(np.trace(m @ m).real / (dl * dr)))


# ---------------------------------------------------------------------------
# constructions


def _pair_group_size(system: QcaSystem) -> int:
    k = system.group_size()
    n = system.N
    for g in range(k, n + 1):
        if n % g == 0 and (n // g) % 2 == 0:
            return g
    raise ValidationError(f"cannot group {n} cells into an even number of groups of size >= {k}")


def two_layer_implementation_qca(system: QcaSystem):
    """Two layers of pair gates reproducing an index-1 automorphism.

    Returns ``(circuit, residual)`` where ``circuit`` is a CircuitQca whose
    first layer acts on grouped pairs ``(2x-1, 2x)`` and second on ``(2x, 2x+1)``.
    """
    k = _pair_group_size(system)
    ind, _ = index_support(system, k)
    if ind != 1:
        raise IndexConditionError(f"index {ind} ≠ 1", found=ind, required=Fraction(1))
    n = system.N
    half = n // (2 * k)
    # V on cells [lo, 2xk + k) maps the left support algebra at 2xk onto cells [2xk, 2xk + k)
    odd = []
    for x in range(half):
        p = 2 * x * k
        pa = position_algebras(system, k, p)
        target = factor_algebra((prod(system.window_dims(pa.lo, p)), pa.d_left), [1])
        odd.append(LocalizedOperator(pa.lo, system.window_dims(pa.lo, p + k), intertwining_unitary(pa.left, target)))
    even = []
    for x in range(half):
        p = 2 * x * k
        dims_pair = system.window_dims(p, p + 2 * k)
        dpair = prod(dims_pair)
        v_left = odd[x]
        v_right = odd[(x + 1) % half]
        v_right = LocalizedOperator(v_right.start + (p + 2 * k - (2 * ((x + 1) % half) * k)), v_right.dims, v_right.matrix)
        imgs = [system.heisenberg(LocalizedOperator(p, dims_pair, matrix_unit(dpair, i, 0))) for i in range(dpair)]
        wlo = min([v_left.start] + [im.start for im in imgs])
        whi = max([v_right.stop] + [im.stop for im in imgs])
        _check_ring(system, whi - wlo)
        wd = system.window_dims(wlo, whi)
        outer = (prod(system.window_dims(wlo, p)), dpair, prod(system.window_dims(p + 2 * k, whi)))
        cols = []
        for im in imgs:
            m = im.in_window(wlo, wd)
            for v in (v_left, v_right):
                m = conjugate_by_gate(m, wd, v.matrix, v.start - wlo, len(v.dims))
            y, res = reduce_to(m, outer, [1])
            if res > RECONSTRUCTION_TOL:
                raise VerificationError(f"conjugated image is not local to its pair (residual {res:.3e})")
            cols.append(y)
        _, w_vec = np.linalg.eigh(0.5 * (cols[0] + cols[0].conj().T))
        w1 = w_vec[:, -1]
        even.append((p, np.column_stack([c @ w1 for c in cols]).conj().T))
    # gates are stored on their nontrivial cells only, which keeps later evaluation cheap
    first = [LocalizedOperator(v.start, v.dims, v.matrix.conj().T).stripped() for v in odd]
    second = [LocalizedOperator(p, system.window_dims(p, p + 2 * k), g).stripped() for p, g in even]

    def layer(ops):
        return GateLayer(system.dims, [(tuple(c % n for c in range(o.start, o.stop)), o.matrix) for o in ops])

    layer1, layer2 = layer(first), layer(second)
    circuit = CircuitQca(system.dims, [layer1, layer2])
    return circuit, reconstruction_residual(system, circuit)


def reconstruction_residual(a: QcaSystem, b: QcaSystem) -> float:
    """Largest difference of the two actions on single-cell matrix units."""
    worst = 0.0
    for x in range(a.N):
        for e in cell_matrix_units(a.cell_dim(x)):
            ia, ib = a.heisenberg(cell_operator(x, e)), b.heisenberg(cell_operator(x, e))
            lo, hi = min(ia.start, ib.start), max(ia.stop, ib.stop)
            wd = a.window_dims(lo, hi)
            worst = max(worst, float(np.abs(ia.in_window(lo, wd) - ib.in_window(lo, wd)).max()))
    return worst


def half_neighborhood_index(system: QcaSystem) -> Fraction:
    """Index of an automorphism mapping each cell into itself and its left neighbour."""
    n = system.N
    ns, ts = [], []
    for x in range(n):
        mats = _images_in_window(system, region_generators(system, x, x + 1), x - 1, x + 1)
        split = TensorSplit((system.cell_dim(x - 1), system.cell_dim(x)))
        ns.append(_require_full(support_algebra(mats, split, [0]), f"left part at {x}"))
        ts.append(_require_full(support_algebra(mats, split, [1]), f"right part at {x}"))
    for x in range(n):
        d = system.cell_dim(x)
        if d != ns[x] * ts[x] or d != ts[x] * ns[x - 1]:
            raise VerificationError(f"dimension relations fail at cell {x}")
    if len(set(ns)) != 1:
        raise VerificationError("left parts have position-dependent dimension")
    return Fraction(ns[0])


def theta_conjugate(system: QcaSystem) -> QcaSystem:
    return system.theta_conjugate()


@dataclass
class NoPropagationCertificate:
    certified: bool
    window: tuple
    supports: list


def no_propagation_certificate(system: QcaSystem, x: int = 0, steps: int | None = None, margin: int | None = None):
    """Check that iterates of a two-cell observable stay in a fixed window."""
    steps = steps if steps is not None else system.N // 2
    b = margin if margin is not None else system.group_size()
    window = (x - b, x + 2 + b)
    ops = region_generators(system, x, x + 2)
    supports = []
    ok = True
    for _ in range(steps):
        ops = [system.heisenberg(o) for o in ops]
        lo = min(o.start for o in ops)
        hi = max(o.stop for o in ops)
        supports.append((lo, hi))
        if lo < window[0] or hi > window[1]:
            ok = False
            break
    return NoPropagationCertificate(ok, window, supports)


# ---------------------------------------------------------------------------
# doubled chain


def _interleave_copies(mat, dims1, dims2):
    n = len(dims1)
    order = [i // 2 + (n if i % 2 else 0) for i in range(2 * n)]
    return permute_factors(mat, list(dims1) + list(dims2), order)


def lift_copy(op: LocalizedOperator, copy: int) -> LocalizedOperator:
    """Embed an operator of one chain copy into the doubled chain."""
    eye = np.eye(prod(op.dims), dtype=complex)
    mat = np.kron(op.matrix, eye) if copy == 0 else np.kron(eye, op.matrix)
    return LocalizedOperator(op.start, tuple(d * d for d in op.dims), _interleave_copies(mat, op.dims, op.dims))


def _common_frame(ops, n: int, cell_dims):
    """Matrices of ring-localized operators on a shared window (or the whole ring)."""
    covered = set()
    for o in ops:
        covered.update((o.start + i) % n for i in range(len(o.dims)))
    if len(covered) < n:
        gap = next(g for g in range(n) if g not in covered)
        lo = gap + 1
        shifted = [LocalizedOperator(lo + (o.start - lo) % n, o.dims, o.matrix) for o in ops]
        hi = max(o.stop for o in shifted)
        wd = tuple(cell_dims[x % n] for x in range(lo, hi))
        return [o.in_window(lo, wd) for o in shifted]
    ring = tuple(cell_dims)
    return [embed(o.matrix, [(o.start + i) % n for i in range(len(o.dims))], ring) for o in ops]


@dataclass
class DoubledImplementation:
    unitaries: list  # T_x on the doubled chain
    swaps: list  # S_x
    commutator: float
    forward_residual: float
    backward_residual: float


def doubled_implementation_qca(system: QcaSystem) -> DoubledImplementation:
    n = system.N
    inv = system.inverse()
    dims2 = tuple(d * d for d in system.dims)
    ts, ss = [], []
    for x in range(n):
        d = system.cell_dim(x)
        images = {}
        for i in range(d):
            for j in range(d):
                images[(i, j)] = system.heisenberg(cell_operator(x, matrix_unit(d, j, i)))
        lo = min([x] + [im.start for im in images.values()])
        hi = max([x + 1] + [im.stop for im in images.values()])
        if hi - lo > n:
            raise ValidationError("band is not admissible on the doubled ring")
        wd = system.window_dims(lo, hi)
        total = 0
        for (i, j), im in images.items():
            e1 = cell_operator(x, matrix_unit(d, i, j)).in_window(lo, wd)
            total = total + np.kron(e1, im.in_window(lo, wd))
        ts.append(LocalizedOperator(lo, tuple(c * c for c in wd), _interleave_copies(total, wd, wd)))
        swap = sum(np.kron(matrix_unit(d, i, j), matrix_unit(d, j, i)) for i in range(d) for j in range(d))
        ss.append(LocalizedOperator(x, (d * d,), swap))
    comm = 0.0
    for x in range(n):
        cells_x = {(ts[x].start + i) % n for i in range(len(ts[x].dims))}
        for y in range(x + 1, n):
            if cells_x.isdisjoint((ts[y].start + i) % n for i in range(len(ts[y].dims))):
                continue
            a, b = _common_frame([ts[x], ts[y]], n, dims2)
            comm = max(comm, float(np.abs(a @ b - b @ a).max()))
    fwd = bwd = 0.0
    for x in range(n):
        d = system.cell_dim(x)
        for e in cell_matrix_units(d):
            op = cell_operator(x, e)
            a_img = lift_copy(system.heisenberg(op), 1)
            t, lhs, rhs = _common_frame([ts[x], lift_copy(op, 0), a_img], n, dims2)
            fwd = max(fwd, float(np.abs(t.conj().T @ lhs @ t - rhs).max()))
            rel = [t_ for t_ in ts if any((t_.start + i) % n == x for i in range(len(t_.dims)))]
            mats = _common_frame(rel + [lift_copy(op, 1), lift_copy(inv.heisenberg(op), 0)], n, dims2)
            prod_t = np.eye(mats[0].shape[0], dtype=complex)
            for m in mats[: len(rel)]:
                prod_t = prod_t @ m
            got = prod_t.conj().T @ mats[-2] @ prod_t
            bwd = max(bwd, float(np.abs(got - mats[-1]).max()))
    return DoubledImplementation(ts, ss, comm, fwd, bwd)


# ---------------------------------------------------------------------------
# standard systems


def identity_qca(n: int, d: int = 2) -> CircuitQca:
    return CircuitQca((d,) * n, [])


def shift_qca(n: int, d: int, by: int = 1) -> CircuitQca:
    return CircuitQca((d,) * n, [ShiftLayer(by)])


def controlled_z(phase: float = np.pi) -> np.ndarray:
    # keep the plain controlled-Z exact so its images are exact Pauli strings
    last = -1.0 if phase == np.pi else np.exp(1j * phase)
    return np.diag([1, 1, 1, last]).astype(complex)


def cluster_qca(n: int, t: float = 1.0) -> CircuitQca:
    """Controlled-phase gates on all neighbouring pairs."""
    if n % 2:
        raise ValidationError("cluster circuit needs an even ring")
    g = controlled_z(np.pi * t)
    even = GateLayer((2,) * n, [((2 * i, 2 * i + 1), g) for i in range(n // 2)])
    odd = GateLayer((2,) * n, [((2 * i + 1, (2 * i + 2) % n), g) for i in range(n // 2)])
    return CircuitQca((2,) * n, [even, odd])


def diagonal_phase_qca(n: int, d: int, rng: np.random.Generator) -> CircuitQca:
    """Commuting diagonal two-cell phase gates on every neighbouring pair."""
    if n % 2:
        raise ValidationError("diagonal phase circuit needs an even ring")
    layers = []
    for parity in (0, 1):
        blocks = []
        for i in range(n // 2):
            a = 2 * i + parity
            phases = np.exp(2j * np.pi * rng.random(d * d))
            blocks.append(((a % n, (a + 1) % n), np.diag(phases)))
        layers.append(GateLayer((d,) * n, blocks))
    return CircuitQca((d,) * n, layers)


def random_two_layer_circuit(n: int, d: int, rng: np.random.Generator) -> CircuitQca:
    from .linalg import random_unitary

    layers = []
    for parity in (0, 1):
        blocks = [(((2 * i + parity) % n, (2 * i + 1 + parity) % n), random_unitary(d * d, rng)) for i in range(n // 2)]
        layers.append(GateLayer((d,) * n, blocks))
    return CircuitQca((d,) * n, layers)
