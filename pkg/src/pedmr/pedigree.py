"""Pedigree parsing, validation, and kinship computation.

A pedigree file is UTF-8 text with a header line declaring the columns
``family id father mother sex affected`` (tab- or whitespace-separated).
A parent token of ``"0"`` means the parent is unknown, in which case both
parents must be unknown (founder convention).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SEX_CODES = {
    "1": "male",
    "m": "male",
    "male": "male",
    "2": "female",
    "f": "female",
    "female": "female",
    "0": "unknown",
    "u": "unknown",
    "unknown": "unknown",
}

REQUIRED_COLUMNS = ("family", "id", "father", "mother", "sex", "affected")


class PedigreeError(ValueError):
    """Raised for structurally invalid pedigrees or unparsable files."""


@dataclass(frozen=True)
class Individual:
    """One pedigree member.

    ``father_id``/``mother_id`` are either both set or both None (founder).
    ``affected`` is 0/1 or None when the status is unknown.
    """

    id: str
    father_id: str | None
    mother_id: str | None
    sex: str
    family_id: str
    affected: int | None = None

    @property
    def is_founder(self) -> bool:
        return self.father_id is None

    def __post_init__(self):
        if (self.father_id is None) != (self.mother_id is None):
            raise PedigreeError(
                f"individual {self.id!r}: exactly one parent is missing; "
                "parents must be both present or both absent"
            )
        if self.sex not in ("male", "female", "unknown"):
            raise PedigreeError(f"individual {self.id!r}: bad sex {self.sex!r}")
        if not self.family_id:
            raise PedigreeError(f"individual {self.id!r}: empty family id")


@dataclass(frozen=True)
class Pedigree:
    """A validated collection of individuals with parent links.

    Individuals keep the order in which they were supplied (file order).
    Parent links are validated to form a DAG at construction time.
    """

    individuals: tuple[Individual, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)
    _topo: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __init__(self, individuals):
        object.__setattr__(self, "individuals", tuple(individuals))
        index: dict[str, int] = {}
        for pos, ind in enumerate(self.individuals):
            if ind.id in index:
                raise PedigreeError(f"duplicate individual id {ind.id!r}")
            index[ind.id] = pos
        object.__setattr__(self, "_index", index)
        for ind in self.individuals:
            for parent in (ind.father_id, ind.mother_id):
                if parent is not None and parent not in index:
                    raise PedigreeError(
                        f"individual {ind.id!r} references unknown parent {parent!r}"
                    )
            if not ind.is_founder:
                for parent in (ind.father_id, ind.mother_id):
                    pfam = self.individuals[index[parent]].family_id
                    if pfam != ind.family_id:
                        raise PedigreeError(
                            f"individual {ind.id!r} (family {ind.family_id!r}) has "
                            f"parent {parent!r} in family {pfam!r}"
                        )
        object.__setattr__(self, "_topo", tuple(self._topological_order()))

    def _topological_order(self) -> list[int]:
        """Kahn's algorithm over parent->child edges; raises on cycles."""
        n = len(self.individuals)
        children: list[list[int]] = [[] for _ in range(n)]
        n_parents = [0] * n
        for pos, ind in enumerate(self.individuals):
            if not ind.is_founder:
                n_parents[pos] = 2
                children[self._index[ind.father_id]].append(pos)
                children[self._index[ind.mother_id]].append(pos)
        ready = [pos for pos in range(n) if n_parents[pos] == 0]
        order: list[int] = []
        while ready:
            pos = ready.pop()
            order.append(pos)
            for child in children[pos]:
                n_parents[child] -= 1
                if n_parents[child] == 0:
                    ready.append(child)
        if len(order) != n:
            stuck = [self.individuals[p].id for p in range(n) if n_parents[p] > 0]
            raise PedigreeError(f"ancestry cycle involving individuals {stuck}")
        return order

    def __len__(self) -> int:
        return len(self.individuals)

    def __getitem__(self, id_: str) -> Individual:
        return self.individuals[self._index[id_]]

    def __contains__(self, id_: str) -> bool:
        return id_ in self._index

    @property
    def ids(self) -> list[str]:
        return [ind.id for ind in self.individuals]

    @property
    def founders(self) -> list[Individual]:
        return [ind for ind in self.individuals if ind.is_founder]

    @property
    def families(self) -> dict[str, list[Individual]]:
        """Family partition in order of first appearance."""
        out: dict[str, list[Individual]] = {}
        for ind in self.individuals:
            out.setdefault(ind.family_id, []).append(ind)
        return out

    def index_of(self, id_: str) -> int:
        return self._index[id_]

    def topological_positions(self) -> tuple[int, ...]:
        """Positions (into ``individuals``) with parents before children."""
        return self._topo


@dataclass(frozen=True)
class KinshipMatrix:
    """Kinship coefficients phi over a fixed ordering of individuals."""

    order: tuple[str, ...]
    phi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(self.order))
        n = len(self.order)
        if self.phi.shape != (n, n):
            raise ValueError(f"phi shape {self.phi.shape} does not match {n} ids")

    def value(self, id_a: str, id_b: str) -> float:
        i = self.order.index(id_a)
        j = self.order.index(id_b)
        return float(self.phi[i, j])

    def subset(self, ids) -> "KinshipMatrix":
        pos = [self.order.index(i) for i in ids]
        return KinshipMatrix(tuple(ids), self.phi[np.ix_(pos, pos)])


def parse_pedigree(text: str) -> Pedigree:
    """Parse pedigree file content into a validated :class:`Pedigree`.

    The first non-empty, non-comment line must name the six required columns
    (any order); remaining lines supply one individual each.  Lines starting
    with ``#`` are ignored.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise PedigreeError("empty pedigree file")
    header = [tok.lower() for tok in lines[0].split()]
    missing = [col for col in REQUIRED_COLUMNS if col not in header]
    if missing:
        raise PedigreeError(f"pedigree header is missing columns {missing}")
    col = {name: header.index(name) for name in REQUIRED_COLUMNS}

    individuals = []
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if len(tokens) < len(header):
            raise PedigreeError(f"line {lineno}: expected {len(header)} fields, got {len(tokens)}")
        father = tokens[col["father"]]
        mother = tokens[col["mother"]]
        sex_token = tokens[col["sex"]].lower()
        if sex_token not in SEX_CODES:
            raise PedigreeError(f"line {lineno}: bad sex code {sex_token!r}")
        affected_token = tokens[col["affected"]].upper()
        if affected_token in ("NA", "-9", "."):
            affected = None
        elif affected_token in ("0", "1"):
            affected = int(affected_token)
        else:
            raise PedigreeError(f"line {lineno}: bad affected code {affected_token!r}")
        individuals.append(
            Individual(
                id=tokens[col["id"]],
                father_id=None if father == "0" else father,
                mother_id=None if mother == "0" else mother,
                sex=SEX_CODES[sex_token],
                family_id=tokens[col["family"]],
                affected=affected,
            )
        )
    return Pedigree(individuals)


def kinship_matrix(ped: Pedigree) -> KinshipMatrix:
    """Kinship coefficients by the standard pedigree recursion.

    Founders are assumed non-inbred and mutually unrelated: phi(i,i) = 1/2
    and phi(i,j) = 0.  For a non-founder c with parents f and m,
    phi(c,c) = (1 + phi(f,m)) / 2 and phi(c,j) = (phi(f,j) + phi(m,j)) / 2
    for any j that is not a descendant of c.  Individuals are processed in
    topological order so the recursion's ancestry condition always holds.
    The returned matrix follows the pedigree's file order.
    """
    n = len(ped)
    topo = ped.topological_positions()
    # topo_rank[file_pos] = processing step of that individual
    topo_rank = np.empty(n, dtype=np.intp)
    for step, pos in enumerate(topo):
        topo_rank[pos] = step

    phi = np.zeros((n, n))
    for step, pos in enumerate(topo):
        ind = ped.individuals[pos]
        if ind.is_founder:
            phi[step, step] = 0.5
            continue
        fr = topo_rank[ped.index_of(ind.father_id)]
        mr = topo_rank[ped.index_of(ind.mother_id)]
        row = 0.5 * (phi[fr, :step] + phi[mr, :step])
        phi[step, :step] = row
        phi[:step, step] = row
        phi[step, step] = 0.5 * (1.0 + phi[fr, mr])

    # phi is indexed by processing step; map file position i to step topo_rank[i]
    phi_file = phi[np.ix_(topo_rank, topo_rank)]
    return KinshipMatrix(tuple(ped.ids), phi_file)


def relationship_cholesky(k: KinshipMatrix, scale: float = 2.0) -> np.ndarray:
    """Lower Cholesky factor of ``scale * phi`` with escalating jitter.

    ``scale=2`` gives the additive relationship matrix.  On factorization
    failure a ridge of 1e-10, then 1e-8, then 1e-6 is added to the diagonal;
    anything beyond that indicates a structurally invalid matrix and raises
    ``numpy.linalg.LinAlgError`` rather than silently distorting the
    covariance.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    a = scale * k.phi
    for jitter in (0.0, 1e-10, 1e-8, 1e-6):
        try:
            return np.linalg.cholesky(a + jitter * np.eye(a.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError(
        "relationship matrix is not positive definite (jitter up to 1e-6 failed)"
    )
