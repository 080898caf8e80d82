import csv

import numpy as np
import pytest

import oracles
from factories import random_laurent
from flowindex.errors import IndexConditionError, ValidationError, VerificationError
from flowindex.linalg import random_unitary
from flowindex.walk import index
from flowindex.walk_ti import (
    LaurentUnitary,
    determinant,
    dispersion,
    factorize,
    index_coefficient,
    index_determinant,
    index_winding_quadrature,
    simulate_mean_position,
    ti_path,
)


def block_diag(a: LaurentUnitary, b: LaurentUnitary) -> LaurentUnitary:
    lo, hi = min(a.lo, b.lo), max(a.hi, b.hi)
    d = a.d + b.d
    coeffs = {}
    for x in range(lo, hi + 1):
        c = np.zeros((d, d), dtype=complex)
        c[: a.d, : a.d] = a.coeff(x)
        c[a.d :, a.d :] = b.coeff(x)
        coeffs[x] = c
    return LaurentUnitary(coeffs)


class TestLaurentUnitary:
    def test_rejects_non_paraunitary(self):
        with pytest.raises(ValidationError):
            LaurentUnitary({0: np.eye(2), 1: np.eye(2)})
        with pytest.raises(ValidationError):
            LaurentUnitary(np.zeros((1, 2, 3)))

    def test_symbol_convention(self):
        u = LaurentUnitary.shift(1)
        assert np.allclose(u.symbol(0.3)[0], np.exp(0.3j))
        walk = u.to_walk(6)
        # amplitude at site 0 moves to site 1
        assert walk.matrix[1, 0] == pytest.approx(1)

    def test_compose_and_adjoint(self):
        rng = np.random.default_rng(0)
        u, _ = random_laurent(rng, 3)
        v = u.compose(u.adjoint())
        assert v.degree == 0
        assert np.allclose(v.coeffs[0], np.eye(3))

    def test_ring_too_small(self):
        with pytest.raises(ValidationError):
            LaurentUnitary.partial_shift(3, 2).to_walk(6)


class TestIndexRoutes:
    def test_scalar_shift(self):
        u = LaurentUnitary.shift(1)
        assert index_coefficient(u) == 1
        n, c = index_determinant(u)
        assert n == 1 and c == pytest.approx(1)
        assert index_winding_quadrature(u) == pytest.approx(1.0, abs=1e-12)

    def test_constant_coin(self):
        u = LaurentUnitary.constant(random_unitary(3, np.random.default_rng(1)))
        assert index_coefficient(u) == 0
        assert index_winding_quadrature(u) == pytest.approx(0.0, abs=1e-12)
        assert index_determinant(LaurentUnitary.constant(np.eye(2))) == (0, pytest.approx(1))

    @pytest.mark.parametrize("m", [-2, 1, 3])
    def test_partial_shift(self, m):
        u = LaurentUnitary.partial_shift(m, 2)
        assert index_coefficient(u) == m
        assert index_determinant(u)[0] == m
        assert index_winding_quadrature(u, 1024) == pytest.approx(m, abs=1e-6)

    def test_block_sum_determinant(self):
        coin = random_unitary(2, np.random.default_rng(2))
        u = block_diag(LaurentUnitary.partial_shift(2, 2), LaurentUnitary.constant(coin))
        n, c = index_determinant(u)
        assert n == 2
        assert c == pytest.approx(np.linalg.det(coin))

    def test_random_products(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            d = int(rng.integers(1, 5))
            u, ms = random_laurent(rng, d)
            k = sum(ms)
            assert index_coefficient(u) == k
            assert index_determinant(u)[0] == k
            assert index_winding_quadrature(u, 2048) == pytest.approx(k, abs=1e-6)
            assert oracles.winding_by_unwrapping(lambda p: u.symbol(p)[0], 4096) == pytest.approx(k, abs=1e-6)
            if u.degree * 2 < 10:
                assert index(u.to_walk(10)) == k

    def test_determinant_is_monomial(self):
        rng = np.random.default_rng(4)
        u, ms = random_laurent(rng, 3)
        det = determinant(u)
        mags = np.sort(np.abs(det.coeffs))
        assert mags[-1] == pytest.approx(1)
        assert mags[:-1].max(initial=0) < 1e-10

    def test_quadrature_grid_too_coarse(self):
        with pytest.raises(ValidationError):
            index_winding_quadrature(LaurentUnitary.partial_shift(4, 2), 16)

    def test_broken_input_detected(self):
        bad = LaurentUnitary({0: np.eye(2), 1: 0.1 * np.eye(2)}, check=False)
        with pytest.raises(VerificationError):
            index_determinant(bad)


class TestDispersion:
    def test_constant_coin_is_flat(self):
        data = dispersion(LaurentUnitary.constant(random_unitary(3, np.random.default_rng(5))), 64)
        assert data.winding_sum == 0
        assert np.abs(data.velocity).max() < 1e-10
        assert np.allclose(data.omega, data.omega[0])

    def test_partial_shift_branches(self):
        data = dispersion(LaurentUnitary.partial_shift(1, 2), 128)
        assert sorted(np.round(data.windings).astype(int).tolist()) == [0, 1]
        moving = int(np.argmax(np.abs(data.windings)))
        assert np.allclose(data.velocity[:, moving], 1)
        assert np.allclose(data.velocity[:, 1 - moving], 0)

    def test_random_winding_sum(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            u, ms = random_laurent(rng, int(rng.integers(2, 4)))
            data = dispersion(u, 256)
            assert data.winding_sum == sum(ms)
            assert np.abs(np.abs(np.exp(1j * data.omega)) - 1).max() < 1e-10

    def test_csv_header(self, tmp_path):
        path = tmp_path / "disp.csv"
        dispersion(LaurentUnitary.partial_shift(1, 2), 16).write_csv(path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["p", "branch", "omega", "velocity"]
        assert len(rows) == 1 + 16 * 2


class TestMeanPosition:
    def test_identity(self):
        out = simulate_mean_position(LaurentUnitary.constant(np.eye(2)), 4, 12)
        assert np.abs(out).max() < 1e-12

    def test_shift_two_on_two_dims(self):
        # shift by one site on two internal states: index 2, speed 2 / 2
        out = simulate_mean_position(LaurentUnitary.shift(2, 1), 4, 24)
        assert np.allclose(out, np.arange(5), atol=1e-12)

    def test_partial_shift_matches_oracle(self):
        u = LaurentUnitary.partial_shift(1, 2)
        out = simulate_mean_position(u, 6, 20)
        assert out[-1] == pytest.approx(3.0, abs=1e-8)
        ref = oracles.mean_position({x: u.coeff(x) for x in u.exponents()}, 2, 20, 6)
        assert np.abs(out - ref).max() < 1e-10

    def test_random_speed_law(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            u, ms = random_laurent(rng, 2, max_degree=2)
            t = 5
            out = simulate_mean_position(u, t, 2 * u.degree * t + 4)
            assert out == pytest.approx(np.arange(t + 1) * sum(ms) / 2, abs=1e-8)

    def test_ring_too_small(self):
        with pytest.raises(ValidationError):
            simulate_mean_position(LaurentUnitary.shift(1), 5, 10)


class TestFactorization:
    def test_reconstruction(self):
        rng = np.random.default_rng(8)
        for _ in range(15):
            u, ms = random_laurent(rng, int(rng.integers(1, 5)))
            f = factorize(u)
            assert f.index == sum(ms)
            assert f.max_error(u) < 1e-8
            assert f.reconstruct().paraunitarity_residual() < 1e-8

    def test_negative_only(self):
        u = LaurentUnitary.partial_shift(-2, 3)
        f = factorize(u)
        assert f.index == -2
        assert f.max_error(u) < 1e-10

    def test_rejects_broken_input(self):
        bad = LaurentUnitary({0: np.eye(2), 1: 0.1 * np.eye(2)}, check=False)
        with pytest.raises(VerificationError):
            factorize(bad)


class TestPath:
    def test_endpoints_and_degree(self):
        rng = np.random.default_rng(9)
        found = 0
        while found < 5:
            u, ms = random_laurent(rng, 2)
            if sum(ms) != 0:
                continue
            found += 1
            bound = sum(abs(m) for m, _ in factorize(u).factors)
            start, end = ti_path(u, 0.0), ti_path(u, 1.0)
            assert np.abs(start.symbol(np.linspace(0, 6, 13)) - np.eye(2)).max() < 1e-9
            assert np.abs(end.symbol(np.linspace(0, 6, 13)) - u.symbol(np.linspace(0, 6, 13))).max() < 1e-9
            for t in (0.25, 0.5, 0.75):
                v = ti_path(u, t)
                assert v.paraunitarity_residual() < 1e-9
                assert v.degree <= bound

    def test_rejects_nonzero_index(self):
        with pytest.raises(IndexConditionError):
            ti_path(LaurentUnitary.partial_shift(1, 2), 0.5)
