import numpy as np
import pytest

from pedmr.pedigree import (
    KinshipMatrix,
    PedigreeError,
    kinship_matrix,
    parse_pedigree,
    relationship_cholesky,
)

from conftest import ped_text
from oracles import gene_drop_kinship


class TestParse:
    def test_trio(self, trio):
        assert trio.ids == ["F1", "M1", "C1"]
        assert len(trio.founders) == 2
        assert not trio["C1"].is_founder
        assert trio["C1"].father_id == "F1"
        assert trio["C1"].affected == 1

    def test_founder_convention(self):
        ped = parse_pedigree(ped_text([("F", "X", 0, 0, 0, "NA")]))
        assert ped["X"].is_founder
        assert ped["X"].sex == "unknown"
        assert ped["X"].affected is None

    def test_cycle_detected(self):
        text = ped_text(
            [
                ("F", "A", "B", "Z", 1, 0),
                ("F", "B", "A", "Z", 2, 0),
                ("F", "Z", 0, 0, 2, 0),
            ]
        )
        with pytest.raises(PedigreeError, match="cycle"):
            parse_pedigree(text)

    def test_one_parent_missing(self):
        with pytest.raises(PedigreeError, match="both"):
            parse_pedigree(ped_text([("F", "A", "P", 0, 1, 0), ("F", "P", 0, 0, 1, 0)]))

    def test_duplicate_id(self):
        with pytest.raises(PedigreeError, match="duplicate"):
            parse_pedigree(ped_text([("F", "A", 0, 0, 1, 0), ("F", "A", 0, 0, 2, 0)]))

    def test_dangling_parent(self):
        with pytest.raises(PedigreeError, match="unknown parent"):
            parse_pedigree(ped_text([("F", "A", "NOPE", "NOPE2", 1, 0)]))

    def test_cross_family_parent(self):
        text = ped_text([("F1", "A", 0, 0, 1, 0), ("F2", "B", 0, 0, 2, 0), ("F1", "C", "A", "B", 1, 0)])
        with pytest.raises(PedigreeError, match="family"):
            parse_pedigree(text)

    def test_file_order_unconstrained(self):
        # child listed before its parents
        ped = parse_pedigree(
            ped_text(
                [
                    ("F", "C1", "F1", "M1", 1, 0),
                    ("F", "F1", 0, 0, 1, 0),
                    ("F", "M1", 0, 0, 2, 0),
                ]
            )
        )
        k = kinship_matrix(ped)
        assert k.value("C1", "F1") == pytest.approx(0.25)


class TestKinship:
    def test_founder_self(self, trio):
        k = kinship_matrix(trio)
        assert k.value("F1", "F1") == 0.5
        assert k.value("F1", "M1") == 0.0

    def test_parent_child_and_siblings(self):
        ped = parse_pedigree(
            ped_text(
                [
                    ("F", "F1", 0, 0, 1, 0),
                    ("F", "M1", 0, 0, 2, 0),
                    ("F", "C1", "F1", "M1", 1, 0),
                    ("F", "C2", "F1", "M1", 2, 0),
                ]
            )
        )
        k = kinship_matrix(ped)
        assert k.value("F1", "C1") == pytest.approx(0.25)
        assert k.value("C1", "C2") == pytest.approx(0.25)
        assert k.value("C1", "C1") == pytest.approx(0.5)

    def test_first_cousins_and_inbred_self(self, pedigree25):
        k = kinship_matrix(pedigree25)
        # C2 (child of B1) and C3 (child of B2) are first cousins
        assert k.value("C2", "C3") == pytest.approx(0.0625)
        # D4 is a child of that cousin mating: phi(D4,D4) = (1 + 1/16) / 2
        assert k.value("D4", "D4") == pytest.approx(0.53125)

    def test_half_sib_mating_self_kinship(self):
        ped = parse_pedigree(
            ped_text(
                [
                    ("F", "DAD", 0, 0, 1, 0),
                    ("F", "M1", 0, 0, 2, 0),
                    ("F", "M2", 0, 0, 2, 0),
                    ("F", "H1", "DAD", "M1", 1, 0),
                    ("F", "H2", "DAD", "M2", 2, 0),
                    ("F", "K", "H1", "H2", 1, 0),
                ]
            )
        )
        k = kinship_matrix(ped)
        assert k.value("H1", "H2") == pytest.approx(0.125)
        assert k.value("K", "K") == pytest.approx(0.5625)

    def test_symmetry_and_family_blocks(self, pedigree25):
        two_fams = parse_pedigree(
            ped_text(
                [
                    ("F1", "A", 0, 0, 1, 0),
                    ("F1", "B", 0, 0, 2, 0),
                    ("F1", "C", "A", "B", 1, 0),
                    ("F2", "X", 0, 0, 1, 0),
                    ("F2", "Y", 0, 0, 2, 0),
                    ("F2", "Z", "X", "Y", 2, 0),
                ]
            )
        )
        for ped in (pedigree25, two_fams):
            k = kinship_matrix(ped)
            np.testing.assert_allclose(k.phi, k.phi.T, atol=0)
        k = kinship_matrix(two_fams)
        for a in ("A", "B", "C"):
            for b in ("X", "Y", "Z"):
                assert k.value(a, b) == 0.0

    def test_gene_drop_oracle_three_se(self, pedigree25):
        k = kinship_matrix(pedigree25)
        phi_hat, phi_se = gene_drop_kinship(pedigree25, n_rep=20_000, seed=7)
        # 3 SE per entry plus slack for the 325 simultaneous comparisons
        bound = 3.0 * phi_se + 0.003
        assert np.all(np.abs(phi_hat - k.phi) <= bound)


class TestRelationshipCholesky:
    def test_identity_input(self):
        # two unrelated founders: 2*phi = I
        k = KinshipMatrix(("a", "b"), np.eye(2) * 0.5)
        L = relationship_cholesky(k, scale=2.0)
        np.testing.assert_allclose(L, np.eye(2), atol=0)

    def test_closed_form_2x2(self):
        k = KinshipMatrix(("a", "b"), np.array([[0.5, 0.25], [0.25, 0.5]]))
        L = relationship_cholesky(k, scale=2.0)
        expected = np.array([[1.0, 0.0], [0.5, np.sqrt(0.75)]])
        np.testing.assert_allclose(L, expected, atol=1e-12)
        assert L[0, 1] == 0.0
        assert np.all(np.diag(L) >= 0)

    def test_reconstruction(self, pedigree25):
        k = kinship_matrix(pedigree25)
        L = relationship_cholesky(k, scale=2.0)
        assert np.max(np.abs(L @ L.T - 2.0 * k.phi)) <= 1e-10

    def test_bad_scale(self, pedigree25):
        k = kinship_matrix(pedigree25)
        with pytest.raises(ValueError):
            relationship_cholesky(k, scale=0.0)

    def test_not_positive_definite(self):
        k = KinshipMatrix(("a", "b"), np.array([[0.5, 0.9], [0.9, 0.5]]))
        with pytest.raises(np.linalg.LinAlgError):
            relationship_cholesky(k, scale=2.0)
