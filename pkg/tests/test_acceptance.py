"""Acceptance criteria 1-15; each test prints one PASS/FAIL line."""

from fractions import Fraction

import numpy as np
import pytest

import oracles
from factories import random_circuit, random_index_zero_grouped, random_laurent, random_walk
from flowindex import qca
from flowindex.builtins import mixed_shift_qca
from flowindex.classical import (
    check_agreement,
    gauge_invariance_check,
    identity_rule,
    partitioned_rule,
    shift_rule,
    welch_index,
    welch_stability,
)
from flowindex.errors import IndexConditionError
from flowindex.linalg import random_unitary
from flowindex.operator_algebra import conjugate_algebra, factor_algebra, overlap_eta
from flowindex.walk import (
    BandedUnitary,
    adjoint,
    compose,
    connect_to_identity,
    crossing_norm,
    crossover,
    decouple,
    decouple_unitary,
    direct_sum,
    doubled_implementation,
    doubled_product,
    index,
    index_raw,
    regroup,
    splice_window,
    two_layer_implementation,
)
from flowindex.walk_ti import (
    LaurentUnitary,
    dispersion,
    factorize,
    index_coefficient,
    index_determinant,
    index_winding_quadrature,
    simulate_mean_position,
    ti_path,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)


@pytest.fixture
def verdict(capsys):
    def emit(number, failures, detail):
        line = f"criterion {number:2d}: {'PASS' if not failures else 'FAIL'}  {detail}"
        with capsys.disabled():
            print("\n" + line)
        assert not failures, "; ".join(failures[:5])

    return emit


def unitarity(m):
    return float(np.abs(m @ m.conj().T - np.eye(len(m))).max())


def test_c01_shift_indices(verdict):
    failures = []
    for d in (1, 2, 3, 4):
        for m in (8, 12):
            if index(BandedUnitary.shift(m, d)) != d:
                failures.append(f"walk shift d={d} M={m}")
    for d in (2, 3):
        ind, _ = qca.index_support(qca.shift_qca(6, d))
        if ind != Fraction(d, 1):
            failures.append(f"automaton shift d={d} gave {ind}")
    verdict(1, failures, "walk shifts d=1..4 on M=8,12; automaton shifts d=2,3 on N=6")


def test_c02_integrality_and_cut_invariance(verdict):
    rng = np.random.default_rng(102)
    failures = []
    worst = 0.0
    for i in range(200):
        k = int(rng.integers(-2, 3))
        d = int(rng.integers(1, 4))
        u = random_walk(rng, 12, d, k)
        raws = [index_raw(u, c) for c in range(u.M)]
        worst = max(worst, max(abs(r - round(r)) for r in raws))
        values = {round(r) for r in raws}
        if values != {k * d}:
            failures.append(f"walk {i}: cut values {sorted(values)} vs {k * d}")
        if round(oracles.flow_across_cut(u.matrix, u.dims, 0)) != k * d:
            failures.append(f"walk {i}: flow oracle disagrees")
    if worst > 1e-8:
        failures.append(f"integrality residual {worst:.2e}")
    verdict(2, failures, f"200 walks, worst |raw - round| = {worst:.1e}")


def test_c03_additivity(verdict):
    rng = np.random.default_rng(103)
    failures = []
    for i in range(50):
        d = int(rng.integers(1, 3))
        k1, k2 = (int(v) for v in rng.integers(-1, 2, size=2))
        u = random_walk(rng, 16, d, k1, layers=1)
        v = random_walk(rng, 16, d, k2, layers=1)
        a, b = index(u), index(v)
        if index(compose(u, v)) != a + b:
            failures.append(f"pair {i}: compose")
        if index(direct_sum(u, v)) != a + b:
            failures.append(f"pair {i}: direct sum")
        if index(adjoint(u)) != -a:
            failures.append(f"pair {i}: adjoint")
    verdict(3, failures, "50 pairs: compose, direct sum and adjoint")


def test_c04_decoupling_and_two_layers(verdict):
    rng = np.random.default_rng(104)
    failures = []
    worst_dec = worst_rec = 0.0
    for i in range(50):
        u = random_index_zero_grouped(rng, d=int(rng.integers(1, 3)))
        sites, _ = decouple_unitary(u, 0)
        if len(sites) > 2:
            failures.append(f"walk {i}: decoupler on {len(sites)} cells")
        w = compose(u, decouple(u, 0).to_walk())
        worst_dec = max(worst_dec, crossing_norm(w, u.dims, w.band, 0))
        first, second = two_layer_implementation(u)
        worst_rec = max(worst_rec, float(np.abs(second.matrix() @ first.matrix() - u.matrix).max()))
        for layer, parity in ((first, 1), (second, 0)):
            for cells, _ in layer.blocks:
                if len(cells) > 2 or (len(cells) == 2 and (cells[0] % 2 != parity or (cells[1] - cells[0]) % u.M != 1)):
                    failures.append(f"walk {i}: block on {cells}")
    for bad in (BandedUnitary.shift(6, 1), regroup(BandedUnitary.shift(12, 1), 2)):
        for fn in (decouple, two_layer_implementation):
            try:
                fn(bad)
                failures.append("index-1 input accepted")
            except IndexConditionError:
                pass
    if worst_dec > 1e-9:
        failures.append(f"decouple residual {worst_dec:.2e}")
    if worst_rec > 1e-9:
        failures.append(f"two-layer residual {worst_rec:.2e}")
    verdict(4, failures, f"50 walks, decouple {worst_dec:.1e}, two-layer {worst_rec:.1e}")


def test_c05_homotopy(verdict):
    rng = np.random.default_rng(105)
    failures = []
    worst = 0.0
    for i in range(20):
        u = random_index_zero_grouped(rng, d=int(rng.integers(1, 3)))
        eye = np.eye(u.total_dim)
        for t in (0.0, 0.25, 0.5, 0.75, 1.0):
            s = connect_to_identity(u, t).value
            worst = max(worst, unitarity(s.matrix))
            if s.measured_band() > 2:
                failures.append(f"walk {i} t={t}: band {s.measured_band()}")
            if t == 0.0 and np.abs(s.matrix - eye).max() > 1e-9:
                failures.append(f"walk {i}: start is not the identity")
            if t == 1.0 and np.abs(s.matrix - u.matrix).max() > 1e-9:
                failures.append(f"walk {i}: end is not the input")
    if worst > 1e-9:
        failures.append(f"unitarity {worst:.2e}")
    verdict(5, failures, f"20 walks x 5 samples, unitarity {worst:.1e}")


def test_c06_ti_routes(verdict):
    rng = np.random.default_rng(106)
    failures = []
    worst = 0.0
    for i in range(100):
        u, ms = random_laurent(rng, int(rng.integers(1, 5)))
        coef = index_coefficient(u)
        det, _ = index_determinant(u)
        quad = index_winding_quadrature(u, 2048)
        worst = max(worst, abs(quad - coef))
        if coef != det or coef != sum(ms):
            failures.append(f"symbol {i}: coefficient {coef}, determinant {det}, built {sum(ms)}")
        if dispersion(u, 256).winding_sum != coef:
            failures.append(f"symbol {i}: dispersion winding")
    if worst > 1e-6:
        failures.append(f"quadrature error {worst:.2e}")
    verdict(6, failures, f"100 symbols, quadrature error {worst:.1e}")


def test_c07_mean_speed(verdict):
    rng = np.random.default_rng(107)
    cases = [
        ("shift d=2", LaurentUnitary.shift(2, 1)),
        ("partial shift +1", LaurentUnitary.partial_shift(1, 2)),
        ("partial shift -2", LaurentUnitary.partial_shift(-2, 2)),
    ]
    for i in range(10):
        cases.append((f"random {i}", random_laurent(rng, int(rng.integers(1, 4)), max_degree=3)[0]))
    failures = []
    worst = 0.0
    t = 6
    for name, u in cases:
        ring = 2 * u.degree * t + 4
        out = simulate_mean_position(u, t, ring)
        want = np.arange(t + 1) * index_coefficient(u) / u.d
        worst = max(worst, float(np.abs(out - want).max()))
        ref = oracles.mean_position({int(x): u.coeff(x) for x in u.exponents()}, u.d, ring, t)
        if np.abs(ref - out).max() > 1e-8:
            failures.append(f"{name}: differs from direct evolution")
    if worst > 1e-8:
        failures.append(f"speed law error {worst:.2e}")
    verdict(7, failures, f"{len(cases)} walks to t={t}, error {worst:.1e}")


def test_c08_factorization(verdict):
    rng = np.random.default_rng(108)
    failures = []
    worst = 0.0
    for i in range(50):
        u, _ = random_laurent(rng, int(rng.integers(1, 5)))
        f = factorize(u)
        worst = max(worst, f.max_error(u, 256))
        if f.index != index_coefficient(u):
            failures.append(f"symbol {i}: factor shifts sum to {f.index}")
        zero = u.compose(LaurentUnitary.partial_shift(-index_coefficient(u), u.d))
        bound = sum(abs(m) for m, _ in factorize(zero).factors)
        for t in (0.3, 0.7):
            p = ti_path(zero, t)
            if p.paraunitarity_residual() > 1e-8 or p.degree > bound:
                failures.append(f"symbol {i}: path sample at t={t}")
    if worst > 1e-8:
        failures.append(f"reconstruction {worst:.2e}")
    verdict(8, failures, f"50 symbols, reconstruction {worst:.1e}")


def test_c09_qca_routes(verdict):
    rng = np.random.default_rng(109)
    systems = [
        ("identity", qca.identity_qca(6), Fraction(1)),
        ("qubit shift", qca.shift_qca(6, 2), Fraction(2)),
        ("qubit shift with inverse qutrit shift", mixed_shift_qca(6), Fraction(2, 3)),
        ("cluster", qca.cluster_qca(6), Fraction(1)),
    ]
    systems += [(f"circuit {i}", random_circuit(rng, 6, 2), Fraction(1)) for i in range(50)]
    failures = []
    worst = 0.0
    for name, s, want in systems:
        sup, rep = qca.index_support(s)
        three = qca.index_three_cell(s)
        over = qca.index_overlap(s)
        worst = max(worst, rep.max_commutator)
        if not (sup == three == over == want):
            failures.append(f"{name}: {sup}, {three}, {over} vs {want}")
        if not rep.relations_ok:
            failures.append(f"{name}: support relations")
        for p in rep.positions:
            if p.r_left * p.r_right != p.d_left * p.d_right:
                failures.append(f"{name}: dimension relation at {p.x}")
    if worst > 1e-9:
        failures.append(f"commutation {worst:.2e}")
    verdict(9, failures, f"{len(systems)} automata, three routes, commutation {worst:.1e}")


def test_c10_eta(verdict):
    rng = np.random.default_rng(110)
    failures = []
    worst = 0.0
    pairs = [(2, 2), (2, 3), (3, 2), (3, 3)]
    for i in range(50):
        dl, dr = pairs[i % 4]
        u = random_unitary(dl * dr, rng)
        image = conjugate_algebra(u, factor_algebra((dl, dr), [0]))
        right = factor_algebra((dl, dr), [1])
        lib = overlap_eta(image, right)
        direct = oracles.eta_direct(image.basis, right.basis)
        pt = qca.eta_partial_transpose(u, dl, dr)
        flipped = u.reshape(dl, dr, dl, dr).transpose(1, 0, 3, 2).reshape(dl * dr, dl * dr)
        pt_flipped = qca.eta_partial_transpose(flipped, dr, dl)
        worst = max(worst, abs(lib - pt), abs(direct - pt), abs(pt_flipped - pt))
        if min(lib, pt) < 1 - 1e-10:
            failures.append(f"gate {i}: eta below 1")
    if worst > 1e-9:
        failures.append(f"disagreement {worst:.2e}")
    verdict(10, failures, f"50 gates, largest disagreement {worst:.1e}")


def test_c11_cluster(verdict):
    c = qca.cluster_qca(6)
    failures = []
    zxz = oracles.kron_all([Z, X, Z])
    for x in range(6):
        img = c.heisenberg(qca.cell_operator(x, X))
        if img.start != x - 1 or not np.array_equal(img.matrix, zxz):
            failures.append(f"X at {x}")
        img = c.heisenberg(qca.cell_operator(x, Z))
        if img.start != x or not np.array_equal(img.matrix, Z):
            failures.append(f"Z at {x}")
    if qca.index_support(c)[0] != 1:
        failures.append("index")
    _, res = qca.two_layer_implementation_qca(c)
    if res > 1e-9:
        failures.append(f"two-layer residual {res:.2e}")
    verdict(11, failures, f"images exact, index 1, two-layer residual {res:.1e}")


def test_c12_classical(verdict):
    rng = np.random.default_rng(112)
    failures = []
    for q in (2, 3):
        if welch_index(shift_rule(q), 2).index != q:
            failures.append(f"shift q={q}")
    if welch_index(identity_rule(2), 1).index != 1:
        failures.append("identity")
    for rule, r in ((shift_rule(2), 2), (identity_rule(2), 1)):
        if not welch_stability(rule, r):
            failures.append("stability")
    perm_rule = partitioned_rule(2, 2, [1, 3, 0, 2])
    for rule, r in ((shift_rule(2), 2), (identity_rule(2), 1), (perm_rule, 2)):
        welch, quantum = check_agreement(rule, r, 8)
        if welch != quantum:
            failures.append(f"agreement {welch} vs {quantum}")
    for rule, n in ((shift_rule(2), 8), (identity_rule(2), 6)):
        rep = gauge_invariance_check(rule, n, np.exp(2j * np.pi * rng.random((n, rule.q))))
        if not rep.passed:
            failures.append("gauge")
    verdict(12, failures, "Welch, stability, quantized agreement and gauge check")


def test_c13_doubled(verdict):
    rng = np.random.default_rng(113)
    failures = []
    worst_walk = 0.0
    for u in (random_walk(rng, 6, 2, 0, layers=1), BandedUnitary.shift(6, 2)):
        ts, swaps = doubled_implementation(u)
        worst_walk = max(worst_walk, float(np.abs(doubled_product(ts, swaps) - direct_sum(u, adjoint(u)).matrix).max()))
    worst_qca = 0.0
    for s in (qca.identity_qca(4), qca.shift_qca(4, 2), qca.cluster_qca(4)):
        out = qca.doubled_implementation_qca(s)
        worst_qca = max(worst_qca, out.forward_residual, out.backward_residual, out.commutator)
    if worst_walk > 1e-9:
        failures.append(f"walk product {worst_walk:.2e}")
    if worst_qca > 1e-9:
        failures.append(f"automaton relations {worst_qca:.2e}")
    verdict(13, failures, f"walk product {worst_walk:.1e}, automaton relations {worst_qca:.1e}")


def test_c14_crossover(verdict):
    rng = np.random.default_rng(114)
    failures = []
    for i in range(20):
        k = int(rng.integers(-1, 2))
        u1 = regroup(random_walk(rng, 24, 1, k, layers=1), 2)
        u2 = regroup(random_walk(rng, 24, 1, k, layers=1), 2)
        c = crossover(u1, u2)
        m = c.M
        window = splice_window(u1, u2)
        if len(window) > 4:
            failures.append(f"pair {i}: splice window of {len(window)} cells")
        left = [(m // 2 + j) % m for j in range(m - m // 2)]
        for y in range(m):
            ref = u1 if y in left else u2
            if y in window:
                continue
            if np.abs(c.matrix[:, c.sites(y)] - ref.matrix[:, ref.sites(y)]).max() > 1e-9:
                failures.append(f"pair {i}: column block {y}")
        if unitarity(c.matrix) > 1e-9:
            failures.append(f"pair {i}: not unitary")
    u1 = regroup(random_walk(rng, 24, 1, 1, layers=1), 2)
    u2 = regroup(random_walk(rng, 24, 1, 0, layers=1), 2)
    try:
        crossover(u1, u2)
        failures.append("unequal indices accepted")
    except IndexConditionError:
        pass
    verdict(14, failures, "20 pairs spliced at both interfaces, mismatch rejected")


def test_c15_theta_and_no_propagation(verdict):
    rng = np.random.default_rng(115)
    failures = []
    for i in range(20):
        c = random_circuit(rng, 6, 2, shift=int(rng.integers(-1, 2)))
        a = qca.index_support(c)[0]
        b = qca.index_support(qca.theta_conjugate(c))[0]
        if a != b:
            failures.append(f"circuit {i}: {a} vs {b}")
    system = qca.diagonal_phase_qca(8, 2, np.random.default_rng(11))
    cert = qca.no_propagation_certificate(system)
    if not cert.certified:
        failures.append("diagonal phases not certified")
    if qca.index_support(system)[0] != 1:
        failures.append("diagonal phase index")
    if qca.no_propagation_certificate(qca.shift_qca(8, 2)).certified:
        failures.append("shift certified")
    verdict(15, failures, "20 mirrored circuits, diagonal phases certified with index 1")
