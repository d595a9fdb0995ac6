import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pedmr.pedigree import parse_pedigree

HEADER = "family id father mother sex affected"


def ped_text(rows):
    """Assemble pedigree file content from (family, id, father, mother, sex, affected) rows."""
    lines = [HEADER]
    lines += [" ".join(str(tok) for tok in row) for row in rows]
    return "\n".join(lines) + "\n"


@pytest.fixture
def trio():
    return parse_pedigree(
        ped_text(
            [
                ("FAM1", "F1", 0, 0, 1, 0),
                ("FAM1", "M1", 0, 0, 2, 0),
                ("FAM1", "C1", "F1", "M1", 1, 1),
            ]
        )
    )


def pedigree25_text():
    """Scripted 4-generation, 25-member pedigree with one cousin mating."""
    rows = [
        # generation 0
        ("P1", "A1", 0, 0, 1, 0),
        ("P1", "A2", 0, 0, 2, 0),
        # generation 1: three children of A1 x A2, three married-in spouses
        ("P1", "B1", "A1", "A2", 1, 0),
        ("P1", "B2", "A1", "A2", 2, 0),
        ("P1", "B3", "A1", "A2", 1, 1),
        ("P1", "S1", 0, 0, 2, 0),
        ("P1", "S2", 0, 0, 1, 0),
        ("P1", "S3", 0, 0, 2, 0),
        # generation 2: six grandchildren, two married-in spouses
        ("P1", "C1", "B1", "S1", 1, 0),
        ("P1", "C2", "B1", "S1", 2, 0),
        ("P1", "C3", "S2", "B2", 1, 0),
        ("P1", "C4", "S2", "B2", 2, 1),
        ("P1", "C5", "B3", "S3", 2, 0),
        ("P1", "C6", "B3", "S3", 1, 0),
        ("P1", "T1", 0, 0, 2, 0),
        ("P1", "T2", 0, 0, 1, 0),
        # generation 3: C3 x C2 is a first-cousin mating
        ("P1", "D1", "C1", "T1", 1, 0),
        ("P1", "D2", "C1", "T1", 2, 0),
        ("P1", "D3", "C1", "T1", 1, 1),
        ("P1", "D4", "C3", "C2", 2, 0),
        ("P1", "D5", "C3", "C2", 1, 0),
        ("P1", "D6", "C3", "C2", 2, 0),
        ("P1", "D7", "T2", "C5", 1, 0),
        ("P1", "D8", "T2", "C5", 2, 0),
        ("P1", "D9", "T2", "C5", 1, 0),
    ]
    return ped_text(rows)


@pytest.fixture(scope="session")
def pedigree25():
    ped = parse_pedigree(pedigree25_text())
    assert len(ped) == 25
    return ped
