"""Translation-invariant walks described by a matrix Laurent polynomial.

The symbol is ``U(p) = sum_x U_x exp(i p x)``: coefficient ``U_x`` moves
amplitude ``x`` sites to the right, so on a ring the block from site ``y`` to
site ``y + x`` is ``U_x``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import IndexConditionError, ValidationError, VerificationError
from .linalg import complete_basis, polar_unitary, unitary_power
from .walk import BandedUnitary

PARAUNITARY_TOL = 1e-10
INTEGRALITY_TOL = 1e-8


class LaurentUnitary:
    """Paraunitary matrix Laurent polynomial with coefficients for exponents ``lo .. hi``."""

    def __init__(self, coeffs, lo: int = 0, *, check: bool = True, tol: float = PARAUNITARY_TOL):
        if isinstance(coeffs, dict):
            if not coeffs:
                raise ValidationError("no coefficients given")
            lo = min(coeffs)
            hi = max(coeffs)
            first = np.asarray(next(iter(coeffs.values())))
            arr = np.zeros((hi - lo + 1,) + first.shape, dtype=complex)
            for x, c in coeffs.items():
                arr[x - lo] = c
        else:
            arr = np.array(coeffs, dtype=complex)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2] or arr.shape[0] == 0:
            raise ValidationError(f"coefficients must have shape (n, d, d), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("coefficients contain non-finite entries")
        # trim vanishing outer coefficients
        norms = np.linalg.norm(arr.reshape(len(arr), -1), axis=1)
        nz = np.flatnonzero(norms > 1e-13)
        if nz.size == 0:
            raise ValidationError("all coefficients vanish")
        arr = arr[nz[0]:nz[-1] + 1]
        self.lo = int(lo) + int(nz[0])
        arr.setflags(write=False)
        self.coeffs = arr
        if check:
            res = self.paraunitarity_residual()
            if res > tol:
                raise ValidationError(f"symbol is not paraunitary (residual {res:.3e})")

    @property
    def d(self) -> int:
        return self.coeffs.shape[1]

    @property
    def hi(self) -> int:
        return self.lo + len(self.coeffs) - 1

    @property
    def degree(self) -> int:
        return max(abs(self.lo), abs(self.hi))

    def exponents(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def coeff(self, x: int) -> np.ndarray:
        if self.lo <= x <= self.hi:
            return self.coeffs[x - self.lo]
        return np.zeros((self.d, self.d), dtype=complex)

    def symbol(self, p) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        phases = np.exp(1j * np.outer(p, self.exponents()))
        return np.einsum("gx,xab->gab", phases, self.coeffs)

    def derivative(self, p) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        ex = self.exponents()
        phases = 1j * ex[None, :] * np.exp(1j * np.outer(p, ex))
        return np.einsum("gx,xab->gab", phases, self.coeffs)

    def paraunitarity_residual(self) -> float:
        """Largest deviation of ``sum_x U_x U_{x+k}*`` from ``delta_k0``."""
        c = self.coeffs
        n = len(c)
        worst = 0.0
        for k in range(-(n - 1), n):
            acc = np.zeros((self.d, self.d), dtype=complex)
            for i in range(n):
                j = i + k
                if 0 <= j < n:
                    acc += c[i] @ c[j].conj().T
            if k == 0:
                acc -= np.eye(self.d)
            worst = max(worst, float(np.abs(acc).max()))
        return worst

    def grid_unitarity_residual(self, grid: int = 256) -> float:
        u = self.symbol(2 * np.pi * np.arange(grid) / grid)
        e = np.matmul(u, u.conj().transpose(0, 2, 1)) - np.eye(self.d)
        return float(np.abs(e).max())

    def adjoint(self) -> "LaurentUnitary":
        arr = self.coeffs[::-1].conj().transpose(0, 2, 1)
        return LaurentUnitary(arr, -self.hi, check=False)

    def compose(self, other: "LaurentUnitary") -> "LaurentUnitary":
        """Symbol product ``self(p) other(p)``."""
        if self.d != other.d:
            raise ValidationError("internal dimensions differ")
        n = len(self.coeffs) + len(other.coeffs) - 1
        out = np.zeros((n, self.d, self.d), dtype=complex)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] += a @ b
        return LaurentUnitary(out, self.lo + other.lo, check=False)

    def to_walk(self, m: int) -> BandedUnitary:
        """Instantiate on a ring of ``m`` sites."""
        L = self.degree
        if 2 * L >= m:
            raise ValidationError(f"ring of {m} sites is too small for degree {L}")
        blocks = {}
        for y in range(m):
            for x in self.exponents():
                blocks[((y + x) % m, y)] = self.coeff(x)
        return BandedUnitary.from_blocks((self.d,) * m, L, blocks)

    @classmethod
    def constant(cls, v) -> "LaurentUnitary":
        v = np.asarray(v, dtype=complex)
        return cls(v[None], 0)

    @classmethod
    def partial_shift(cls, m: int, d: int) -> "LaurentUnitary":
        """Moves the first internal component ``m`` sites, leaves the others in place."""
        if m == 0:
            return cls.constant(np.eye(d))
        e0 = np.zeros((d, d))
        e0[0, 0] = 1
        return cls({m: e0, 0: np.eye(d) - e0})

    @classmethod
    def shift(cls, d: int, k: int = 1) -> "LaurentUnitary":
        return cls({k: np.eye(d)})

    def __repr__(self):
        return f"LaurentUnitary(d={self.d}, exponents={self.lo}..{self.hi})"


def index_coefficient(u: LaurentUnitary, tol: float = INTEGRALITY_TOL) -> int:
    raw = float(sum(x * np.vdot(c, c).real for x, c in zip(u.exponents(), u.coeffs)))
    n = int(round(raw))
    if abs(raw - n) > tol:
        raise VerificationError(f"coefficient sum {raw:.12f} is not an integer")
    return n


@dataclass(frozen=True)
class LaurentScalar:
    lo: int
    coeffs: np.ndarray


def determinant(u: LaurentUnitary) -> LaurentScalar:
    """``det U(p)`` as a scalar Laurent polynomial, by evaluation and inverse DFT."""
    d = u.d
    lo, hi = d * u.lo, d * u.hi
    g = hi - lo + 1
    p = 2 * np.pi * np.arange(g) / g
    vals = np.linalg.det(u.symbol(p)) * np.exp(-1j * lo * p)
    return LaurentScalar(lo, np.fft.fft(vals) / g)


def index_determinant(u: LaurentUnitary, tol: float = INTEGRALITY_TOL) -> tuple[int, complex]:
    det = determinant(u)
    mags = np.abs(det.coeffs)
    k = int(np.argmax(mags))
    others = np.delete(mags, k)
    if others.size and others.max() > tol:
        raise VerificationError("determinant is not a monomial; symbol is not paraunitary")
    c = complex(det.coeffs[k])
    if abs(abs(c) - 1) > tol:
        raise VerificationError(f"determinant coefficient has modulus {abs(c):.12f}")
    return det.lo + k, c


def index_winding_quadrature(u: LaurentUnitary, grid: int = 1024) -> float:
    """Trapezoidal rule for ``(1/2 pi i) int Tr(U* dU/dp) dp``."""
    if grid < 8 * max(u.degree, 1):
        raise ValidationError(f"grid {grid} is too coarse for degree {u.degree}")
    p = 2 * np.pi * np.arange(grid) / grid
    integrand = np.einsum("gba,gba->g", u.symbol(p).conj(), u.derivative(p))
    return float((integrand.sum() / (1j * grid)).real)


# ---------------------------------------------------------------------------
# dispersion


@dataclass
class DispersionData:
    momenta: np.ndarray  # (G,)
    omega: np.ndarray  # (G, d), wrapped into (-pi, pi], columns are branches
    velocity: np.ndarray  # (G, d)
    windings: np.ndarray  # (d,)
    eigenvectors: np.ndarray = field(repr=False)  # (G, d, d), column k is branch k

    @property
    def winding_sum(self) -> int:
        return int(round(float(self.windings.sum())))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "branch", "omega", "velocity"])
            for g, p in enumerate(self.momenta):
                for k in range(self.omega.shape[1]):
                    w.writerow([repr(float(p)), k, repr(float(self.omega[g, k])), repr(float(self.velocity[g, k]))])


def _eig_unitary(m: np.ndarray):
    import scipy.linalg

    t, z = scipy.linalg.schur(m, output="complex")
    return np.diag(t).copy(), z


def _wrap(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


class BranchMatchingError(VerificationError):
    pass


def _dispersion_on_grid(u: LaurentUnitary, grid: int):
    d = u.d
    ps = -np.pi + 2 * np.pi * np.arange(grid) / grid
    mats = u.symbol(ps)
    lam0, vec0 = _eig_unitary(mats[0])
    omegas = np.zeros((grid, d))
    vecs = np.zeros((grid, d, d), dtype=complex)
    omegas[0], vecs[0] = np.angle(lam0), vec0
    worst_overlap = 1.0
    for g in range(1, grid + 1):
        lam, vec = _eig_unitary(mats[g % grid] if g < grid else mats[0])
        prev = vecs[g - 1]
        ov = np.abs(prev.conj().T @ vec) ** 2
        rows, cols = linear_sum_assignment(-ov)
        order = cols[np.argsort(rows)]
        lam, vec = lam[order], vec[:, order]
        worst_overlap = min(worst_overlap, float(ov[rows, cols].min()))
        if g == grid:
            closing = order
            break
        omegas[g], vecs[g] = np.angle(lam), vec
    return ps, omegas, vecs, closing, worst_overlap


def dispersion(u: LaurentUnitary, grid: int = 256, max_refine: int = 4) -> DispersionData:
    """Eigenphase branches matched by eigenvector overlap, with group velocities."""
    g = int(grid)
    for _ in range(max_refine + 1):
        ps, om, vecs, closing, worst = _dispersion_on_grid(u, g)
        steps = _wrap(np.diff(np.vstack([om, om[:1]]), axis=0))
        # closing step: branch k at the end continues as branch closing[k] at the start
        steps[-1] = _wrap(om[0, closing] - om[-1])
        if worst >= 0.5 and np.abs(steps).max() < np.pi / 4:
            break
        g *= 2
    else:
        raise BranchMatchingError(
            f"branch matching failed (worst overlap {worst:.3f}); try a finer grid than {g // 2}"
        )
    # windings: follow the branch permutation around the loop
    d = u.d
    windings = np.zeros(d)
    total = steps[:-1].sum(axis=0)
    for k in range(d):
        windings[k] = (total[k] + steps[-1, k]) / (2 * np.pi)
    der = u.derivative(ps)
    vel = np.zeros_like(om)
    for i in range(len(ps)):
        v = vecs[i]
        expect = np.einsum("ak,ab,bk->k", v.conj(), der[i], v)
        vel[i] = np.real(-1j * np.exp(-1j * om[i]) * expect)
    return DispersionData(ps, om, vel, windings, vecs)


# ---------------------------------------------------------------------------
# dynamics


def simulate_mean_position(u: LaurentUnitary, steps: int, ring: int) -> np.ndarray:
    """Mean displacement after 0..steps steps from site 0 with maximally mixed coin."""
    L = u.degree
    if ring <= 2 * L * steps + 2:
        raise ValidationError(f"ring of {ring} sites is too small for {steps} steps at degree {L}")
    walk = u.to_walk(ring).matrix
    d = u.d
    pos = np.arange(ring)
    pos = np.where(pos > ring // 2, pos - ring, pos)
    weights = np.repeat(pos, d).astype(float)
    psi = np.zeros((ring * d, d), dtype=complex)
    psi[:d, :] = np.eye(d)
    out = np.zeros(steps + 1)
    for t in range(1, steps + 1):
        psi = walk @ psi
        out[t] = float(np.sum(weights[:, None] * np.abs(psi) ** 2) / d)
    return out


# ---------------------------------------------------------------------------
# factorization


@dataclass
class ShiftFactorization:
    """``U(p) = V_0 W_{m_1}(p) V_1 ... W_{m_k}(p) V_k``."""

    d: int
    v0: np.ndarray
    factors: list  # list of (m, V)

    @property
    def index(self) -> int:
        return int(sum(m for m, _ in self.factors))

    def reconstruct(self) -> LaurentUnitary:
        out = LaurentUnitary.constant(self.v0)
        for m, v in self.factors:
            out = out.compose(LaurentUnitary.partial_shift(m, self.d)).compose(LaurentUnitary.constant(v))
        return out

    def symbol(self, p) -> np.ndarray:
        p = np.atleast_1d(p)
        out = np.broadcast_to(self.v0, (len(p), self.d, self.d)).copy()
        for m, v in self.factors:
            w = np.ones((len(p), self.d), dtype=complex)
            w[:, 0] = np.exp(1j * m * p)
            out = np.matmul(out * w[:, None, :], v)
        return out

    def max_error(self, u: LaurentUnitary, grid: int = 256) -> float:
        p = 2 * np.pi * np.arange(grid) / grid
        return float(np.abs(self.symbol(p) - u.symbol(p)).max())


def _peel_polynomial(coeffs: list, steps: int):
    """Write a polynomial paraunitary (exponents >= 0) as ``V0 D_{v_k} ... D_{v_1}``.

    Each step removes one unit of determinant degree using a kernel vector
    of the constant coefficient; ``D_v = 1 + (z - 1) v v*``.
    """
    d = coeffs[0].shape[0]
    vs = []
    for _ in range(steps):
        c0 = coeffs[0]
        _, s, vh = np.linalg.svd(c0)
        if s[-1] > 1e-6:
            raise VerificationError("degree reduction stalled; input is not paraunitary")
        v = vh[-1].conj()
        proj = np.outer(v, v.conj())
        comp = np.eye(d) - proj
        new = [coeffs[j] @ comp + (coeffs[j + 1] @ proj if j + 1 < len(coeffs) else 0) for j in range(len(coeffs))]
        while len(new) > 1 and np.linalg.norm(new[-1]) < 1e-10:
            new.pop()
        coeffs = new
        vs.append(v)
    if len(coeffs) != 1:
        raise VerificationError("degree reduction left a non-constant remainder")
    return polar_unitary(coeffs[0]), vs


def _commutes_with_partial_shift(v: np.ndarray) -> bool:
    return np.abs(v[0, 1:]).max(initial=0) < 1e-12 and np.abs(v[1:, 0]).max(initial=0) < 1e-12


def _merge(v0, factors):
    """Combine neighbouring partial shifts separated by a block-diagonal constant."""
    factors = list(factors)
    i = 0
    while i < len(factors) - 1:
        m, v = factors[i]
        if _commutes_with_partial_shift(v):
            # W_m V W_n = V W_{m+n}; V moves into the preceding constant
            if i == 0:
                v0 = v0 @ v
            else:
                pm, pv = factors[i - 1]
                factors[i - 1] = (pm, pv @ v)
            nm, nv = factors[i + 1]
            factors[i:i + 2] = [(m + nm, nv)]
            i = max(i - 1, 0)
        else:
            i += 1
    out = []
    for m, v in factors:
        if m == 0:
            if out:
                pm, pv = out[-1]
                out[-1] = (pm, pv @ v)
            else:
                v0 = v0 @ v
        else:
            out.append((m, v))
    return v0, out


def factorize(u: LaurentUnitary) -> ShiftFactorization:
    """Factor a paraunitary into constants and partial shifts."""
    res = u.paraunitarity_residual()
    if res > 1e-8:
        raise VerificationError(f"input is not paraunitary (residual {res:.3e})")
    d = u.d
    if u.hi <= 0 and u.lo < 0:
        f = factorize(u.adjoint())
        # (V0 W V1 ... W Vk)* = Vk* W* ... W* V0*
        mats = [f.v0] + [v for _, v in f.factors]
        ms = [m for m, _ in f.factors]
        new_v0 = mats[-1].conj().T
        new_factors = [(-ms[i], mats[i].conj().T) for i in range(len(ms) - 1, -1, -1)]
        return ShiftFactorization(d, new_v0, new_factors)
    shift = min(u.lo, 0)
    poly = [np.array(c) for c in u.coeffs]
    if u.lo > 0:
        poly = [np.zeros((d, d), dtype=complex)] * u.lo + poly
    n = index_coefficient(u) - shift * d
    v0, vs = _peel_polynomial(poly, n)
    factors = []
    qs = [complete_basis(v) for v in vs]
    # P = V0 D_{v_k} ... D_{v_1},  D_v = Q W_1 Q*
    lead = v0
    if qs:
        lead = v0 @ qs[-1]
        for i in range(len(qs) - 1, 0, -1):
            factors.append((1, qs[i].conj().T @ qs[i - 1]))
        factors.append((1, qs[0].conj().T))
    if shift < 0:
        # z^shift * 1 = product over components of shifts conjugated by transpositions
        perms = []
        for i in range(d):
            pmat = np.eye(d)
            pmat[[0, i]] = pmat[[i, 0]]
            perms.append(pmat)
        pre = [(shift, perms[i] @ (perms[i + 1] if i + 1 < d else np.eye(d))) for i in range(d)]
        # chain: P_0 W P_0 P_1 W P_1 ... P_{d-1} W P_{d-1} then the polynomial part
        head = perms[0]
        pre[-1] = (shift, perms[d - 1] @ lead)
        factors = pre + factors
        lead = head
    lead, factors = _merge(lead, factors)
    return ShiftFactorization(d, lead, factors)


def ti_path(u: LaurentUnitary, t: float) -> LaurentUnitary:
    """Paraunitary path from the identity (t=0) to ``u`` (t=1) of bounded degree."""
    n = index_coefficient(u)
    if n != 0:
        raise IndexConditionError(f"index {n} ≠ 0", found=n, required=0)
    f = factorize(u)
    out = LaurentUnitary.constant(unitary_power(f.v0, t))
    for m, v in f.factors:
        out = out.compose(LaurentUnitary.partial_shift(m, u.d)).compose(LaurentUnitary.constant(unitary_power(v, t)))
    return out


def ti_index(u: LaurentUnitary) -> Fraction:
    return Fraction(index_coefficient(u))
