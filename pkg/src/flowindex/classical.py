"""Reversible classical cellular automata on a finite alphabet.

Configurations are letter sequences; a rule with radius ``rho`` computes the
new letter at ``x`` from the old letters at ``x - rho .. x + rho``.  Local
tables are indexed row-major with the leftmost neighbour most significant.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ValidationError, VerificationError
from .qca import GlobalQca, cell_matrix_units, cell_operator, index_support

ENUMERATION_CAP = 2**24
CHUNK = 2**18


def _neighbourhood_codes(digits: np.ndarray, q: int, rho: int, positions) -> np.ndarray:
    """Packed neighbourhood codes for the given window columns."""
    width = 2 * rho + 1
    cols = []
    for p in positions:
        code = np.zeros(digits.shape[0], dtype=np.int64)
        for j in range(width):
            code = code * q + digits[:, p - rho + j]
        cols.append(code)
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class ClassicalRule:
    q: int
    radius: int
    table: tuple
    inv_radius: int
    inv_table: tuple

    def __post_init__(self):
        if self.q < 1 or self.radius < 0 or self.inv_radius < 0:
            raise ValidationError("alphabet size must be positive and radii nonnegative")
        for name, tab, rad in (("table", self.table, self.radius), ("inv_table", self.inv_table, self.inv_radius)):
            if len(tab) != self.q ** (2 * rad + 1):
                raise ValidationError(f"{name} needs q^(2*radius+1) = {self.q ** (2 * rad + 1)} entries")
            if any(not 0 <= int(v) < self.q for v in tab):
                raise ValidationError(f"{name} has letters outside the alphabet")

    @classmethod
    def from_functions(cls, q: int, radius: int, f, inv_radius: int, g) -> "ClassicalRule":
        def tabulate(fn, rad):
            return tuple(int(fn(*nb)) for nb in itertools.product(range(q), repeat=2 * rad + 1))

        return cls(q, radius, tabulate(f, radius), inv_radius, tabulate(g, inv_radius))

    @property
    def band(self) -> int:
        return self.radius + self.inv_radius

    def apply(self, config, inverse: bool = False) -> np.ndarray:
        """One step on periodic configurations (rows of ``config``)."""
        c = np.atleast_2d(np.asarray(config, dtype=np.int64))
        rad = self.inv_radius if inverse else self.radius
        tab = np.asarray(self.inv_table if inverse else self.table, dtype=np.int64)
        n = c.shape[1]
        code = np.zeros_like(c)
        for j in range(-rad, rad + 1):
            code = code * self.q + np.roll(c, -j, axis=1)
        return tab[code]

    def validate(self, max_size: int | None = None) -> None:
        """Check that the inverse table undoes the rule on all small periodic configurations."""
        bound = max_size if max_size is not None else 3 * self.band + 3
        for n in range(1, bound + 1):
            if self.q**n > ENUMERATION_CAP:
                break
            configs = _all_configs(self.q, n)
            back = self.apply(self.apply(configs), inverse=True)
            if not np.array_equal(back, configs):
                raise ValidationError(f"inverse rule does not undo the rule on period {n}")

    def sitewise(self, perm) -> "ClassicalRule":
        """This rule followed by a letter permutation at every site."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.argsort(perm)
        width = 2 * self.inv_radius + 1
        inv_table = []
        for nb in itertools.product(range(self.q), repeat=width):
            inv_table.append(self.inv_table[_pack([int(inv[a]) for a in nb], self.q)])
        return ClassicalRule(self.q, self.radius, tuple(int(perm[v]) for v in self.table), self.inv_radius, tuple(inv_table))


def _pack(letters, q):
    code = 0
    for a in letters:
        code = code * q + a
    return code


def _all_configs(q: int, n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    stop = q**n if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)
    digits = np.empty((len(idx), n), dtype=np.int64)
    for j in range(n - 1, -1, -1):
        digits[:, j] = idx % q
        idx //= q
    return digits


# ---------------------------------------------------------------------------
# standard rules


def shift_rule(q: int) -> ClassicalRule:
    """Content moves one cell to the right: ``new(x) = old(x-1)``."""
    return ClassicalRule.from_functions(q, 1, lambda a, b, c: a, 1, lambda a, b, c: c)


def identity_rule(q: int) -> ClassicalRule:
    return ClassicalRule.from_functions(q, 0, lambda a: a, 0, lambda a: a)


def sitewise_permutation_rule(perm) -> ClassicalRule:
    perm = [int(p) for p in perm]
    inv = list(np.argsort(perm))
    return ClassicalRule.from_functions(len(perm), 0, lambda a: perm[a], 0, lambda a: int(inv[a]))


def partitioned_rule(qa: int, qb: int, perm=None) -> ClassicalRule:
    """Letters are pairs ``(u, v)``; ``u`` moves right, ``v`` moves left, then ``perm`` acts on pairs.

    The index of this rule is ``qa / qb``.
    """
    q = qa * qb
    perm = list(range(q)) if perm is None else [int(p) for p in perm]
    if sorted(perm) != list(range(q)):
        raise ValidationError("pair map must be a permutation")
    inv = [int(i) for i in np.argsort(perm)]

    def f(left, _mid, right):
        return perm[(left // qb) * qb + right % qb]

    def g(left, _mid, right):
        return (inv[right] // qb) * qb + inv[left] % qb

    return ClassicalRule.from_functions(q, 1, f, 1, g)


# ---------------------------------------------------------------------------
# Welch index


@dataclass(frozen=True)
class WelchReport:
    window: int
    tuple_count: int
    denominator: int
    index: Fraction

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "tuple_count": self.tuple_count,
            "q_pow_3r": self.denominator,
            "index": f"{self.index.numerator}/{self.index.denominator}",
        }


def welch_index(rule: ClassicalRule, r: int) -> WelchReport:
    """Count pairs (letters on ``[0, 2r)``, image letters on ``[-r, r)``) over all windows."""
    rho = rule.radius
    if r < max(1, rule.band):
        raise ValidationError(f"window {r} is smaller than the combined radius {rule.band}")
    length = 3 * r + 2 * rho
    total = rule.q**length
    if total > ENUMERATION_CAP:
        raise ValidationError(f"enumeration of {total} windows exceeds the cap {ENUMERATION_CAP}")
    table = np.asarray(rule.table, dtype=np.int64)
    # window column i holds position i - r - rho
    own = [r + rho + i for i in range(2 * r)]
    image = [rho + i for i in range(2 * r)]
    seen = []
    for start in range(0, total, CHUNK):
        digits = _all_configs(rule.q, length, start, min(total, start + CHUNK))
        img = table[_neighbourhood_codes(digits, rule.q, rho, image)]
        key = np.zeros(digits.shape[0], dtype=np.int64)
        for col in own:
            key = key * rule.q + digits[:, col]
        for j in range(2 * r):
            key = key * rule.q + img[:, j]
        seen.append(np.unique(key))
    count = len(np.unique(np.concatenate(seen)))
    denom = rule.q ** (3 * r)
    return WelchReport(r, count, denom, Fraction(count, denom))


def welch_stability(rule: ClassicalRule, r: int) -> bool:
    return welch_index(rule, r).index == welch_index(rule, r + 1).index


# ---------------------------------------------------------------------------
# quantization


def quantize(rule: ClassicalRule, n: int, phases=None) -> GlobalQca:
    """Permutation unitary ``|c> -> phase(c) |rule(c)>`` on a ring of ``n`` cells."""
    if n < 2 * rule.band + 4:
        raise ValidationError(f"ring of {n} cells is too small for band {rule.band}")
    configs = _all_configs(rule.q, n)
    images = rule.apply(configs)
    perm = np.zeros(len(configs), dtype=np.int64)
    for j in range(n):
        perm = perm * rule.q + images[:, j]
    return GlobalQca((rule.q,) * n, rule.band, permutation=perm, phases=phases)


def diagonal_gauge(q: int, n: int, cell_phases) -> GlobalQca:
    """Sitewise diagonal unitary ``(x) diag(cell_phases[x])`` as a band-0 automorphism."""
    cell_phases = np.asarray(cell_phases, dtype=complex)
    if cell_phases.shape != (n, q):
        raise ValidationError("need one phase vector of length q per cell")
    total = np.ones(1, dtype=complex)
    for x in range(n):
        total = np.kron(total, cell_phases[x])
    return GlobalQca((q,) * n, 0, permutation=np.arange(q**n), phases=total)


@dataclass
class GaugeReport:
    index_plain: Fraction
    index_gauged: Fraction
    theta_residual: float
    passed: bool


def gauge_invariance_check(rule: ClassicalRule, n: int, cell_phases, tol: float = 1e-9) -> GaugeReport:
    """Index is unchanged by a diagonal sitewise gauge, and the gauge satisfies ``Theta b Theta = b^-1``."""
    plain = quantize(rule, n)
    gauge = diagonal_gauge(rule.q, n, cell_phases)
    gauged = GlobalQca(
        plain.dims, plain.band, permutation=plain.permutation, phases=gauge.phases[plain.permutation]
    )
    ind_plain, _ = index_support(plain)
    ind_gauged, _ = index_support(gauged)
    mirrored, inverse = gauge.theta_conjugate(), gauge.inverse()
    worst = 0.0
    for x in range(n):
        for e in cell_matrix_units(rule.q):
            a = mirrored.heisenberg(cell_operator(x, e))
            b = inverse.heisenberg(cell_operator(x, e))
            if a.start != b.start or a.dims != b.dims:
                worst = max(worst, 1.0)
            else:
                worst = max(worst, float(np.abs(a.matrix - b.matrix).max()))
    ok = ind_plain == ind_gauged and worst <= tol
    return GaugeReport(ind_plain, ind_gauged, worst, ok)


def check_agreement(rule: ClassicalRule, r: int, n: int) -> tuple[Fraction, Fraction]:
    welch = welch_index(rule, r).index
    quantum, _ = index_support(quantize(rule, n))
    if welch != quantum:
        raise VerificationError(f"Welch index {welch} differs from the quantized index {quantum}")
    return welch, quantum
