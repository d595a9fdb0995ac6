import numpy as np
import pytest

from pedmr.assoc import SeparationError, assoc_scan, lmm_fit, logistic_fit, _profile
from pedmr.dataset import standardize
from pedmr.pedigree import kinship_matrix
from pedmr.simulate import TrueParams, drop_genotypes, simulate_pedigree, simulate_traits

from oracles import logistic_newton, ols_fit


def family_forest(n_families=9, generations=4, children=2, seed=101):
    return simulate_pedigree(n_families, generations, children, seed=seed)


@pytest.fixture(scope="module")
def ped200():
    ped = family_forest()
    phi2 = 2.0 * kinship_matrix(ped).phi
    return ped, phi2


class TestLmmFit:
    def test_identity_kinship_equals_ols(self):
        rng = np.random.default_rng(1)
        n = 80
        x = rng.normal(size=n)
        y = 0.4 * x + rng.normal(size=n)
        res = lmm_fit(y, x, np.eye(n))
        slope, _ = ols_fit(y, x)
        assert res.beta == pytest.approx(slope, abs=1e-8)

    def test_fixed_lambda_gls_oracle(self, ped200):
        ped, phi2 = ped200
        rng = np.random.default_rng(2)
        n = len(ped)
        chol = np.linalg.cholesky(phi2 + 1e-10 * np.eye(n))
        x = rng.normal(size=n)
        y = 0.3 * x + chol @ rng.normal(size=n) + rng.normal(size=n)  # lambda = 1
        res = lmm_fit(y, x, phi2)
        # dense GLS with the variance ratio fixed at the true value
        v = phi2 + np.eye(n)
        vinv = np.linalg.inv(v)
        d = np.column_stack([np.ones(n), x])
        coef = np.linalg.solve(d.T @ vinv @ d, d.T @ vinv @ y)
        cov = np.linalg.inv(d.T @ vinv @ d)
        assert abs(res.beta - coef[1]) <= 2.0 * np.sqrt(cov[1, 1])

    def test_type_one_error_rate(self, ped200):
        ped, phi2 = ped200
        rng = np.random.default_rng(3)
        n = len(ped)
        chol = np.linalg.cholesky(phi2 + 1e-10 * np.eye(n))
        y = chol @ rng.normal(size=n) + rng.normal(size=n)
        hits = 0
        reps = 200
        for _ in range(reps):
            x = rng.normal(size=n)
            hits += lmm_fit(y, x, phi2).p_value < 0.05
        assert 0.02 <= hits / reps <= 0.09

    def test_profile_beats_grid(self, ped200):
        ped, phi2 = ped200
        rng = np.random.default_rng(4)
        n = len(ped)
        chol = np.linalg.cholesky(phi2 + 1e-10 * np.eye(n))
        x = rng.normal(size=n)
        y = 0.2 * x + 0.8 * (chol @ rng.normal(size=n)) + rng.normal(size=n)
        res = lmm_fit(y, x, phi2)
        s, u = np.linalg.eigh(phi2)
        s = np.clip(s, 0, None)
        td = np.column_stack([u.T @ np.ones(n), u.T @ x])
        ty = u.T @ y
        grid = np.linspace(-10, 10, 101)
        grid_best = max(_profile(g, s, ty, td)[0] for g in grid)
        assert res.loglik >= grid_best - 1e-8

    def test_rotation_noop_for_identity(self):
        rng = np.random.default_rng(5)
        n = 60
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        res = lmm_fit(y, x, np.eye(n))
        slope, _ = ols_fit(y, x)
        assert res.beta == pytest.approx(slope, abs=1e-10)

    def test_constant_covariate_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            lmm_fit(np.arange(4.0), np.ones(4), np.eye(4))

    def test_non_psd_rejected(self):
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(ValueError, match="positive semidefinite"):
            lmm_fit(np.array([1.0, 2.0]), np.array([0.0, 1.0]), bad)

    def test_variance_components_recovered_roughly(self, ped200):
        ped, phi2 = ped200
        rng = np.random.default_rng(6)
        n = len(ped)
        chol = np.linalg.cholesky(phi2 + 1e-10 * np.eye(n))
        x = rng.normal(size=n)
        reps = [lmm_fit(2.0 * (chol @ rng.normal(size=n)) + rng.normal(size=n), x, phi2)
                for _ in range(20)]
        lam = np.median([r.sigma_g2 / r.sigma_e2 for r in reps])
        assert 1.5 < lam < 12.0  # true ratio is 4


class TestLogistic:
    def test_matches_newton_oracle(self):
        rng = np.random.default_rng(7)
        n = 300
        x = rng.normal(size=n)
        y = (rng.random(n) < 1 / (1 + np.exp(-(0.7 * x - 0.3)))).astype(float)
        beta, se, p = logistic_fit(y, x)
        beta_o, se_o = logistic_newton(y, x)
        assert beta == pytest.approx(beta_o, abs=1e-8)
        assert se == pytest.approx(se_o, abs=1e-8)

    def test_separation_flagged(self):
        x = np.array([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
        y = (x > 0).astype(float)
        with pytest.raises(SeparationError):
            logistic_fit(y, x)


class TestAssocScan:
    def make_dataset(self, seed=8, n_fam=6, theta=-0.4):
        ped = simulate_pedigree(n_fam, 3, 2, seed=seed)
        doses = drop_genotypes(ped, 4, maf=0.4, seed=seed + 1)
        z = (doses - doses.mean(0)) / doses.std(0)
        tp = TrueParams(theta=theta, alpha=np.array([0.8, 0.3, 0.0, 0.0]),
                        beta=np.zeros(4), delta_x=0.3, sigma_x=1.0,
                        gamma_x=np.zeros(n_fam), gamma_y=np.zeros(n_fam),
                        kinship_scale=1.0)
        d = simulate_traits(ped, z, tp, missing_frac=0.1, seed=seed + 2)
        d = standardize(d)
        phi2 = 2.0 * kinship_matrix(ped).phi
        return d, phi2

    def test_identity_kinship_matches_ols_scan(self):
        d, _ = self.make_dataset()
        eye = np.eye(d.n)
        via_lmm = assoc_scan(d, eye, use_lmm=True)
        via_ols = assoc_scan(d, None, use_lmm=False)
        np.testing.assert_allclose(via_lmm.beta_x, via_ols.beta_x, atol=1e-8)
        np.testing.assert_allclose(via_lmm.beta_y, via_ols.beta_y, atol=1e-12)

    def test_strongest_instrument_ranks_first(self):
        d, phi2 = self.make_dataset(seed=12)
        s = assoc_scan(d, phi2, use_lmm=True)
        assert int(np.argmin(s.p_x)) == 0

    def test_single_column_matches_lmm_fit(self):
        d, phi2 = self.make_dataset(seed=14)
        s = assoc_scan(d, phi2, use_lmm=True)
        obs = d.obs_mask
        res = lmm_fit(d.X[obs], d.Z[obs, 0], phi2[np.ix_(obs, obs)])
        assert s.beta_x[0] == pytest.approx(res.beta, abs=1e-10)
        assert s.se_x[0] == pytest.approx(res.se, abs=1e-10)

    def test_linear_outcome_leg(self):
        d, phi2 = self.make_dataset(seed=16)
        s = assoc_scan(d, phi2, use_lmm=True, outcome_leg="linear")
        assert s.n_snps == 4
        assert (s.se_y > 0).all()

    def test_requires_standardized(self):
        ped = simulate_pedigree(2, 2, 2, seed=17)
        doses = drop_genotypes(ped, 2, maf=0.5, seed=18).astype(float)
        tp = TrueParams(theta=0.0, alpha=np.zeros(2), beta=np.zeros(2),
                        gamma_x=np.zeros(2), gamma_y=np.zeros(2), kinship_scale=0.0)
        d = simulate_traits(ped, doses, tp, seed=19)
        with pytest.raises(ValueError, match="standardized"):
            assoc_scan(d, None)
