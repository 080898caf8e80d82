"""Named reference systems with known indices, usable as ``builtin:NAME`` on the command line."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import classical, qca
from .errors import ValidationError
from .linalg import random_unitary
from .walk import BandedUnitary
from .walk_ti import LaurentUnitary

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


@dataclass(frozen=True)
class Builtin:
    name: str
    kind: str  # walk, ti_walk, qca, classical
    expected: Fraction
    factory: Callable[[], object]
    description: str

    def build(self):
        return self.factory()


def _coin_rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _conditional_shift(m_up: int, m_down: int) -> LaurentUnitary:
    """Moves the first component by ``m_up`` sites and the second by ``m_down``."""
    up = np.diag([1.0, 0.0]).astype(complex)
    down = np.diag([0.0, 1.0]).astype(complex)
    coeffs = {}
    coeffs[m_up] = coeffs.get(m_up, 0) + up
    coeffs[m_down] = coeffs.get(m_down, 0) + down
    return LaurentUnitary(coeffs)


def split_step_symbol() -> LaurentUnitary:
    """Coin, right-moving step of the first component, coin, left-moving step of the second."""
    c1 = LaurentUnitary.constant(_coin_rotation(0.3))
    c2 = LaurentUnitary.constant(_coin_rotation(1.1))
    return _conditional_shift(0, -1).compose(c2).compose(_conditional_shift(1, 0)).compose(c1)


def coin_walk(m: int) -> LaurentUnitary:
    """Partial shift by ``m`` after a Hadamard coin."""
    return LaurentUnitary.partial_shift(m, 2).compose(LaurentUnitary.constant(HADAMARD))


def random_ti(seed: int = 7, d: int = 3) -> tuple[LaurentUnitary, int]:
    """Alternating random constants and partial shifts; returns the walk and its index."""
    rng = np.random.default_rng(seed)
    out = LaurentUnitary.constant(random_unitary(d, rng))
    total = 0
    for m in rng.integers(-2, 3, size=3):
        out = out.compose(LaurentUnitary.partial_shift(int(m), d)).compose(LaurentUnitary.constant(random_unitary(d, rng)))
        total += int(m)
    return out, total


def mixed_shift_qca(n: int = 6) -> qca.ParallelQca:
    """Shift of qubits to the right running alongside a shift of qutrits to the left."""
    return qca.ParallelQca(qca.shift_qca(n, 2), qca.shift_qca(n, 3, -1))


def _diagonal_phase():
    return qca.diagonal_phase_qca(6, 2, np.random.default_rng(11))


_RANDOM_TI = random_ti()

_ALL = [
    Builtin("hopping-ring-U0", "walk", Fraction(0), lambda: BandedUnitary.identity((1,) * 8), "every site maps to itself"),
    Builtin("hopping-ring-U1", "walk", Fraction(1), lambda: BandedUnitary.shift(8, 1, 1), "every site hops one step around the ring"),
    Builtin("shift-walk-d1", "walk", Fraction(1), lambda: BandedUnitary.shift(8, 1, 1), "unit shift, one state per cell"),
    Builtin("shift-walk-d2", "walk", Fraction(2), lambda: BandedUnitary.shift(8, 2, 1), "unit shift, two states per cell"),
    Builtin("shift-walk-d3", "walk", Fraction(3), lambda: BandedUnitary.shift(8, 3, 1), "unit shift, three states per cell"),
    Builtin("split-step-walk", "walk", Fraction(0), lambda: split_step_symbol().to_walk(8), "two coins and two opposite conditional steps"),
    Builtin("W1-coin", "ti_walk", Fraction(1), lambda: coin_walk(1), "Hadamard coin then partial shift by +1"),
    Builtin("W-2-coin", "ti_walk", Fraction(-2), lambda: coin_walk(-2), "Hadamard coin then partial shift by -2"),
    Builtin("random-ti", "ti_walk", Fraction(_RANDOM_TI[1]), lambda: _RANDOM_TI[0], "seeded product of constants and partial shifts"),
    Builtin("identity-qca", "qca", Fraction(1), lambda: qca.identity_qca(6, 2), "identity on six qubits"),
    Builtin("shift-qca-d2", "qca", Fraction(2), lambda: qca.shift_qca(6, 2), "qubit shift"),
    Builtin("shift-qca-d3", "qca", Fraction(3), lambda: qca.shift_qca(6, 3), "qutrit shift"),
    Builtin("mixed-shift-qca", "qca", Fraction(2, 3), mixed_shift_qca, "qubits right, qutrits left"),
    Builtin("cluster-qca", "qca", Fraction(1), lambda: qca.cluster_qca(6), "controlled-Z on all neighbours"),
    Builtin("diagonal-phase-qca", "qca", Fraction(1), _diagonal_phase, "commuting diagonal two-cell phases"),
    Builtin("classical-shift-q2", "classical", Fraction(2), lambda: classical.shift_rule(2), "binary shift rule"),
    Builtin("classical-shift-q3", "classical", Fraction(3), lambda: classical.shift_rule(3), "ternary shift rule"),
    Builtin("classical-identity-q2", "classical", Fraction(1), lambda: classical.identity_rule(2), "binary identity rule"),
    Builtin(
        "partitioned-permutation", "classical", Fraction(1),
        lambda: classical.partitioned_rule(2, 2, [1, 3, 0, 2]),
        "pair letters split into opposite movers, then permuted",
    ),
]

BUILTINS = {b.name: b for b in _ALL}


def get(name: str) -> Builtin:
    try:
        return BUILTINS[name]
    except KeyError:
        raise ValidationError(f"unknown builtin {name!r}; available: {', '.join(BUILTINS)}") from None
