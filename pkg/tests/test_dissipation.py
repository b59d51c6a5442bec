import numpy as np
import pytest

from iqcgd import dissipation as ds
from iqcgd import freqcert, iqc, rates
from iqcgd.rates import ProblemSpec

SPEC = ProblemSpec(1, 10, 0.15, 0.1)


def scalar_lmi_feasible(spec, rho, grid):
    """Noiseless scalar GD: is some p on ``grid`` a valid storage? numpy eigenvalues only."""
    a, m, L = spec.alpha, spec.m, spec.L
    Mq = np.array([[-2 * m * L, m + L], [m + L, -2.0]])
    for p in grid:
        lmi = np.array([[p * (1 - rho**2), -a * p], [-a * p, a * a * p]]) + Mq
        if np.linalg.eigvalsh(lmi)[-1] <= 0:
            return True
    return False


class TestSector:
    def test_finds_storage_above_rate(self):
        c = ds.dissipation_search_scalar(SPEC, 0.88, "sector")
        assert c is not None
        res = ds.dissipation_verify(c.system, c.M, 0.88, c.P, tol=0.0)
        assert res.holds and res.min_p_eigenvalue > 0

    def test_none_below_rate(self):
        assert ds.dissipation_search_scalar(SPEC, 0.87, "sector") is None

    @pytest.mark.parametrize("rho", [0.80, 0.83, 0.85, 0.86, 0.9, 0.95])
    def test_noiseless_matches_grid_oracle(self, rho):
        spec = ProblemSpec(1, 10, 0.15, 0.0)
        c = ds.dissipation_search_scalar(spec, rho, "sector")
        grid = np.geomspace(1e-3, 1e4, 20001)
        if abs(rho - rates.rho_gd(1, 10, 0.15)) > 1e-3:
            assert (c is not None) == scalar_lmi_feasible(spec, rho, grid)
        if c is not None:
            assert scalar_lmi_feasible(spec, rho, [float(c.P[0, 0])])

    def test_sector_at_certified_rate(self, rng):
        for _ in range(10):
            kappa = float(rng.choice([2.0, 10.0, 100.0]))
            spec = ProblemSpec(1, kappa, rng.uniform(0.3, 1.9) / kappa, rng.uniform(0.01, 0.3))
            cert = freqcert.certify(spec, "sector")
            if cert.rho >= 1:
                continue
            assert ds.dissipation_search_scalar(spec, cert.rho + 1e-3, "sector") is not None


class TestOffByOne:
    def test_finds_storage(self):
        c = ds.dissipation_search_scalar(SPEC, 0.87, "offbyone")
        assert c is not None and c.P.shape == (2, 2)
        assert np.linalg.eigvalsh(c.P)[0] > 0
        assert np.linalg.eigvalsh(ds.lmi_matrix(c.system, c.M, 0.87, c.P))[-1] <= 0

    def test_none_below_lower_bound(self):
        assert ds.dissipation_search_scalar(SPEC, 0.86, "offbyone") is None

    def test_requires_noise(self):
        with pytest.raises(ValueError):
            ds.dissipation_search_scalar(ProblemSpec(1, 10, 0.15, 0.0), 0.9, "offbyone")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ds.dissipation_search_scalar(SPEC, 0.9, "circle")


class TestVerify:
    def _sys_M(self):
        return freqcert.noisy_sector_system(SPEC), iqc.noise_augment(iqc.sector_matrix(np.eye(1), 1, 10), 0.1, 35)

    def test_zero_storage_fails(self):
        sys, M = self._sys_M()
        assert not ds.dissipation_verify(sys, M, 0.9, [[0.0]])

    def test_negative_storage_fails(self):
        c = ds.dissipation_search_scalar(SPEC, 0.88, "sector")
        assert not ds.dissipation_verify(c.system, c.M, 0.88, -c.P)

    def test_indefinite_fails(self):
        c = ds.dissipation_search_scalar(SPEC, 0.9, "offbyone")
        bad = np.diag([1.0, -1.0]) * np.abs(c.P).max()
        assert not ds.dissipation_verify(c.system, c.M, 0.9, bad)

    def test_asymmetric_fails(self):
        sys = freqcert.noisy_offbyone_system(SPEC)
        M = iqc.noise_augment(iqc.off_by_one_matrix(np.eye(1), 1, 10, 0.5), 0.1, 35)
        assert not ds.dissipation_verify(sys, M, 0.9, [[1.0, 0.5], [0.0, 1.0]])


def test_lmi_matrix_symmetric():
    sys = freqcert.noisy_offbyone_system(SPEC)
    M = iqc.noise_augment(iqc.off_by_one_matrix(np.eye(1), 1, 10, 0.5), 0.1, 35)
    X = ds.lmi_matrix(sys, M, 0.9, np.array([[2.0, 0.3], [0.3, 1.0]]))
    np.testing.assert_array_equal(X, X.T)


def test_riccati_none_for_indefinite_input_block():
    M = iqc.BlockIqc(np.zeros((1, 1)), np.zeros((1, 1)), np.eye(1))
    assert ds.riccati_storage(iqc.gd_plant(0.1), M, 0.9) is None


def test_expand_storage():
    P = np.array([[2.0, 1.0], [1.0, 3.0]])
    big = ds.expand_storage(P, 3)
    assert big.shape == (6, 6)
    np.testing.assert_array_equal(big[:3, :3], 2 * np.eye(3))
