import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dndegen.circle import (
    BoundaryFunction,
    BoundaryOperator,
    derivative,
    dn_disk,
    format_complex,
    hilbert_from_dn,
    lambda_inner,
    mean_zero_pinv,
    mode_numbers,
    operator_distance,
    parse_complex,
)
from dndegen.errors import NotMeanZero, SingularDN, TruncationMismatch
from dndegen.spectral import make_synthetic_dn

from conftest import random_mean_zero


def mode(N, k):
    return BoundaryFunction.from_modes(N, {k: 1.0})


class TestBoundaryFunction:
    def test_length_is_enforced(self):
        with pytest.raises(ValueError):
            BoundaryFunction(np.zeros(5), 3)

    def test_mean_zero(self):
        assert mode(4, 1).is_mean_zero()
        assert not mode(4, 0).is_mean_zero()

    def test_conj_of_mode_is_opposite_mode(self):
        f = BoundaryFunction.from_modes(3, {2: 1 + 2j})
        assert f.conj().mode(-2) == 1 - 2j

    def test_from_samples_recovers_modes(self):
        phi = 2 * np.pi * np.arange(64) / 64
        f = BoundaryFunction.from_samples(phi, np.cos(3 * phi) + 2j * np.sin(phi), 8)
        assert f.mode(3) == pytest.approx(0.5)
        assert f.mode(1) == pytest.approx(1.0)
        assert f.mode(-1) == pytest.approx(-1.0)

    def test_evaluate_matches_series(self):
        f = BoundaryFunction.from_modes(2, {1: 1.0, -2: 0.5j})
        phi = np.array([0.0, 0.7])
        np.testing.assert_allclose(f.evaluate(phi), np.exp(1j * phi) + 0.5j * np.exp(-2j * phi))

    def test_save_load_roundtrip(self, tmp_path, rng):
        f = random_mean_zero(rng, 5)
        f.save(tmp_path / "f.txt")
        g = BoundaryFunction.load(tmp_path / "f.txt")
        assert g.N == 5
        np.testing.assert_array_equal(g.coefficients, f.coefficients)


class TestDiskDN:
    # operation examples: |k| symbol
    def test_mode_three(self):
        out = dn_disk(4).apply(mode(4, 3))
        assert out.mode(3) == 3
        assert np.count_nonzero(out.coefficients) == 1

    def test_constant_in_kernel(self):
        assert np.all(dn_disk(4).apply(mode(4, 0)).coefficients == 0)

    def test_negative_mode(self):
        assert dn_disk(4).apply(mode(4, -2)).mode(-2) == 2

    def test_rejects_nonpositive_truncation(self):
        with pytest.raises(ValueError):
            dn_disk(0)


class TestOperatorValidation:
    def test_nonhermitian_dn_rejected(self):
        m = np.diag(np.abs(mode_numbers(3)).astype(complex))
        m[4, 5] = 1.0
        with pytest.raises(ValueError, match="Hermitian"):
            BoundaryOperator(m, 3, "dn")

    def test_constant_not_in_kernel_rejected(self):
        m = np.diag(np.abs(mode_numbers(3)).astype(complex))
        m[3, 3] = 1.0
        with pytest.raises(ValueError, match="constants"):
            BoundaryOperator(m, 3, "dn")

    def test_indefinite_rejected(self):
        m = np.diag(np.abs(mode_numbers(3)).astype(complex))
        m[4, 4] = -1.0
        with pytest.raises(ValueError, match="PSD"):
            BoundaryOperator(m, 3, "dn")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            BoundaryOperator(np.eye(3), 1, "weird")

    def test_save_load_roundtrip(self, tmp_path):
        op = make_synthetic_dn(0.6, 6)
        op.save(tmp_path / "dn.txt", {"note": "fixture"})
        back = BoundaryOperator.load(tmp_path / "dn.txt")
        assert back.kind == "dn" and back.N == 6
        assert back.metadata["note"] == "fixture"
        np.testing.assert_array_equal(back.matrix, op.matrix)
        assert (tmp_path / "dn.txt").read_text().startswith("N=6\n")

    @pytest.mark.parametrize("z", [0j, 1.5 - 2.25j, -3e-17 + 4e10j, complex(-0.0, -0.0)])
    def test_complex_text_roundtrip(self, z):
        back = parse_complex(format_complex(z))
        assert back == z and math.copysign(1, back.imag) == math.copysign(1, z.imag)


class TestHilbert:
    def test_disk_symbol(self):
        N = 6
        H = hilbert_from_dn(dn_disk(N)).matrix
        k = mode_numbers(N)
        np.testing.assert_allclose(np.diag(H), -1j * np.sign(k), atol=1e-15)

    def test_kernel_is_constants(self):
        H = hilbert_from_dn(dn_disk(5))
        assert np.all(H.apply(mode(5, 0)).coefficients == 0)

    def test_disk_square_is_minus_identity(self):
        N = 32
        H = hilbert_from_dn(dn_disk(N)).matrix
        mz = mode_numbers(N) != 0
        sq = (H @ H)[np.ix_(mz, mz)]
        assert np.abs(sq + np.eye(2 * N)).max() <= 1e-10

    def test_synthetic_eigenvalues(self):
        N = 8
        H = hilbert_from_dn(make_synthetic_dn(0.6, N)).matrix
        idx = [N - 1, N + 1]
        ev = np.sort(np.linalg.eigvals(1j * H[np.ix_(idx, idx)]).real)
        np.testing.assert_allclose(ev, [-0.6, 0.6], atol=1e-12)

    def test_singular_dn(self):
        m = np.diag(np.abs(mode_numbers(3)).astype(complex))
        m[4, 4] = 0.0
        with pytest.raises(SingularDN):
            hilbert_from_dn(BoundaryOperator(m, 3, "dn"))
        with pytest.raises(SingularDN):
            mean_zero_pinv(BoundaryOperator(m, 3, "dn"))

    def test_requires_dn_kind(self):
        with pytest.raises(ValueError):
            hilbert_from_dn(derivative(3))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), mu=st.floats(0.05, 0.95))
    def test_ih_selfadjoint_in_lambda_pairing(self, seed, mu):
        rng = np.random.default_rng(seed)
        N = 6
        dn = make_synthetic_dn(mu, N)
        iH = 1j * hilbert_from_dn(dn).matrix
        f, g = random_mean_zero(rng, N), random_mean_zero(rng, N)
        lhs = lambda_inner(dn, BoundaryFunction(iH @ f.coefficients, N), g)
        rhs = lambda_inner(dn, f, BoundaryFunction(iH @ g.coefficients, N))
        scale = abs(lambda_inner(dn, f, f)) + abs(lambda_inner(dn, g, g))
        assert abs(lhs - rhs) <= 1e-8 * scale


class TestLambdaInner:
    def test_unit_mode(self):
        assert lambda_inner(dn_disk(4), mode(4, 1), mode(4, 1)) == pytest.approx(2 * np.pi)

    def test_orthogonal_modes(self):
        assert lambda_inner(dn_disk(4), mode(4, 1), mode(4, 2)) == 0

    def test_conjugate_symmetric(self, rng):
        dn = make_synthetic_dn(0.3, 5)
        f, g = random_mean_zero(rng, 5), random_mean_zero(rng, 5)
        assert abs(lambda_inner(dn, f, g) - np.conj(lambda_inner(dn, g, f))) <= 1e-10

    def test_rejects_mean(self):
        with pytest.raises(NotMeanZero):
            lambda_inner(dn_disk(4), mode(4, 0), mode(4, 1))

    def test_truncation_mismatch(self):
        with pytest.raises(TruncationMismatch):
            lambda_inner(dn_disk(4), mode(3, 1), mode(4, 1))


class TestOperatorDistance:
    def test_zero_for_equal(self):
        assert operator_distance(dn_disk(8), dn_disk(8)) == 0

    def test_rank_one_perturbation(self):
        m = dn_disk(8).matrix.copy()
        m[9, 9] += 0.1
        d = operator_distance(BoundaryOperator(m, 8, "dn"), dn_disk(8))
        assert d == pytest.approx(0.1 / math.sqrt(2), rel=1e-14)

    def test_mismatch(self):
        with pytest.raises(TruncationMismatch):
            operator_distance(dn_disk(8), dn_disk(7))
