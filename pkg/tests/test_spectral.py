import math

import numpy as np
import pytest

from dndegen import fem
from dndegen.circle import BoundaryOperator, dn_disk, hilbert_from_dn, lambda_inner, mode_numbers
from dndegen.errors import MultipleCandidates, SingularDN
from dndegen.mesh import build_mesh
from dndegen.spectral import (
    SpectralData,
    coefficient_decay,
    extract_mu,
    ih_eigenvalues,
    make_synthetic_dn,
    smoothing_defect,
    synthetic_block,
)

from conftest import torus_case


def couple(m, N, k, mu):
    """Couple modes +-k of a DN matrix so that iH has eigenvalues +-mu there."""
    a = 2.0 * k / mu
    b = math.sqrt(a * a - (k / mu) ** 2)
    i, j = N + k, N - k
    m[i, i] = m[j, j] = a
    m[i, j] = m[j, i] = b


class TestSynthetic:
    def test_disk_has_no_discrete_eigenvalue(self):
        s = extract_mu(dn_disk(16))
        assert not s.found and s.eta is None

    @pytest.mark.parametrize("mu", [0.3, 0.6, 0.9])
    def test_recovers_mu(self, mu):
        s = extract_mu(make_synthetic_dn(mu, 16))
        assert abs(s.mu - mu) <= 1e-10
        assert abs(s.mu_minus + mu) <= 1e-10

    def test_block_oracle(self):
        # a = 2, b = sqrt(4 - 1/0.36) evaluated independently
        a, b = synthetic_block(0.6)
        assert a == 2.0
        assert b == pytest.approx(1.10554159678513328, abs=1e-14)

    def test_block_small_mu(self):
        a, b = synthetic_block(0.3)
        assert a * a - b * b == pytest.approx(1 / 0.09, rel=1e-13)

    @pytest.mark.parametrize("mu", [0.0, 1.0, -0.2])
    def test_block_rejects(self, mu):
        with pytest.raises(ValueError):
            synthetic_block(mu)

    def test_eta_lives_on_the_coupled_modes(self):
        N = 8
        eta = extract_mu(make_synthetic_dn(0.6, N)).eta
        c = eta.coefficients.copy()
        c[[N - 1, N + 1]] = 0
        assert np.abs(c).max() <= 1e-12

    def test_two_candidates(self):
        N = 8
        m = dn_disk(N).matrix.copy()
        couple(m, N, 1, 0.5)
        couple(m, N, 2, 0.3)
        with pytest.raises(MultipleCandidates):
            extract_mu(BoundaryOperator(m, N, "dn"))

    @pytest.mark.parametrize("h", [0.04, 0.02])
    def test_fem_disk_cluster_is_not_split(self, h):
        # discretization spreads the cluster at 1 with growing gaps; none is discrete
        from dndegen.mesh import build_disk_mesh

        assert not extract_mu(fem.assemble_dn(build_disk_mesh(h), 8)).found

    def test_band_excludes(self):
        assert not extract_mu(make_synthetic_dn(0.6, 8), band=(0.7, 0.999)).found

    def test_singular(self):
        m = dn_disk(4).matrix.copy()
        m[5, 5] = 0.0
        with pytest.raises(SingularDN):
            extract_mu(BoundaryOperator(m, 4, "dn"))

    def test_ih_eigenvalues_symmetric(self):
        ev = ih_eigenvalues(make_synthetic_dn(0.4, 6))
        np.testing.assert_allclose(np.sort(ev), np.sort(-ev), atol=1e-12)


@pytest.fixture(scope="module")
def case():
    return torus_case(0.1)


class TestTorusSpectrum:
    def test_mu_in_band(self, case):
        assert 0.9 < case["spectral"].mu < 0.97

    def test_eta_normalized(self, case):
        dn, eta = case["dn"], case["spectral"].eta
        assert abs(lambda_inner(dn, eta, eta) - 1) <= 1e-8

    def test_eta_orthogonal_to_conjugate(self, case):
        dn, eta = case["dn"], case["spectral"].eta
        assert abs(lambda_inner(dn, eta, eta.conj())) <= 1e-6

    def test_plus_minus_pair(self, case):
        s = case["spectral"]
        assert abs(s.mu + s.mu_minus) <= 1e-6

    def test_eigen_residual(self, case):
        dn, s = case["dn"], case["spectral"]
        iH = 1j * hilbert_from_dn(dn).matrix
        x = s.eta.coefficients
        assert np.linalg.norm(iH @ x - s.mu * x) <= 1e-8 * np.linalg.norm(x)

    def test_conjugate_is_minus_mu_eigenvector(self, case):
        dn, s = case["dn"], case["spectral"]
        iH = 1j * hilbert_from_dn(dn).matrix
        y = s.eta.conj().coefficients
        assert np.linalg.norm(iH @ y + s.mu * y) <= 1e-8 * np.linalg.norm(y)

    def test_phase_convention(self, case):
        c = case["spectral"].eta.coefficients
        top = c[np.argmax(np.abs(c))]
        assert top.real > 0 and abs(top.imag) <= 1e-14 * abs(top)

    def test_separated_from_cluster(self, case):
        gp, gm = case["spectral"].cluster_gaps
        assert gp > 0.01 and gm > 0.01

    def test_smoothing(self, case):
        assert smoothing_defect(case["dn"]) <= 0.05

    def test_eta_decays(self, case):
        assert coefficient_decay(case["spectral"].eta) <= 1e-6

    def test_mesh_refinement(self):
        # halving h and doubling the boundary vertex count refines the O-grid
        mus, defects = [], []
        for h, nb in ((0.05, 128), (0.025, 256)):
            dn = fem.assemble_dn(build_mesh(1j, 0.2, h, n_boundary=nb), 16, calibrate=True)
            mus.append(extract_mu(dn).mu)
            defects.append(smoothing_defect(dn))
        assert abs(mus[0] - mus[1]) <= 0.02 * mus[1]
        assert defects[1] < defects[0]

    def test_mu_grows_as_hole_shrinks(self):
        mus = [torus_case(e)["spectral"].mu for e in (0.3, 0.2, 0.1, 0.05)]
        assert all(b > a for a, b in zip(mus, mus[1:]))


class TestSmoothingDefect:
    def test_disk(self):
        assert smoothing_defect(dn_disk(8)) == 0.0

    def test_synthetic_rank_two(self):
        assert smoothing_defect(make_synthetic_dn(0.5, 8)) <= 1e-12


def test_coefficient_decay_of_single_mode():
    eta = extract_mu(make_synthetic_dn(0.5, 8)).eta
    assert coefficient_decay(eta) == 0.0


def test_save_load(tmp_path):
    s = extract_mu(make_synthetic_dn(0.6, 8))
    s.save(tmp_path / "spec.txt")
    back = SpectralData.load(tmp_path / "spec.txt")
    assert back.mu == s.mu and back.mu_minus == s.mu_minus
    np.testing.assert_array_equal(back.eta.coefficients, s.eta.coefficients)
    assert (tmp_path / "spec_eta.txt").exists()


def test_save_load_absent(tmp_path):
    s = extract_mu(dn_disk(4))
    s.save(tmp_path / "spec.txt")
    back = SpectralData.load(tmp_path / "spec.txt")
    assert not back.found and back.eta is None
    assert "mu=absent" in (tmp_path / "spec.txt").read_text()


def test_mode_numbers_layout():
    np.testing.assert_array_equal(mode_numbers(2), [-2, -1, 0, 1, 2])
