"""Seeded random inputs shared by the test modules."""

from __future__ import annotations

import numpy as np

from flowindex import qca
from flowindex.linalg import random_unitary
from flowindex.walk import PartitionedLayer, circuit_walk, regroup
from flowindex.walk_ti import LaurentUnitary


def random_pair_layer(dims, offset, rng):
    m = len(dims)
    blocks = []
    for k in range(m // 2):
        a, b = (offset + 2 * k) % m, (offset + 2 * k + 1) % m
        blocks.append(((a, b), random_unitary(dims[a] + dims[b], rng)))
    return PartitionedLayer(dims, blocks)


def random_walk(rng, m, d, k, layers=2):
    """Pair layers on alternating offsets followed by a shift by ``k``; index is ``k * d``."""
    dims = (d,) * m
    seq = [random_pair_layer(dims, i % 2, rng) for i in range(layers)]
    if k:
        seq.append(k)
    return circuit_walk(dims, seq)


def random_index_zero_grouped(rng, sites=12, d=1, layers=2, group=2):
    """Index-zero walk regrouped into nearest-neighbour form."""
    return regroup(random_walk(rng, sites, d, 0, layers), group)


def random_laurent(rng, d, max_degree=4, max_factors=3):
    """Product of random constants and partial shifts; returns the walk, the shifts used."""
    while True:
        ms = [int(m) for m in rng.integers(-2, 3, size=int(rng.integers(1, max_factors + 1)))]
        u = LaurentUnitary.constant(random_unitary(d, rng))
        for m in ms:
            u = u.compose(LaurentUnitary.partial_shift(m, d)).compose(LaurentUnitary.constant(random_unitary(d, rng)))
        if u.degree <= max_degree:
            return u, ms


def random_circuit(rng, n=6, d=2, shift=0):
    """Brickwork of two random gate layers; with ``shift`` set, one random layer and a shift.

    A single layer keeps the reach at two cells once the shift is added, so the
    support-algebra windows stay at eight cells.
    """
    c = qca.random_two_layer_circuit(n, d, rng)
    if shift:
        one = qca.CircuitQca(c.dims, c.layers[:1])
        c = one.then(qca.CircuitQca((d,) * n, [qca.ShiftLayer(shift)]))
    return c
