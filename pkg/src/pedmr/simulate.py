"""Synthetic pedigrees, Mendelian genotypes, and traits with known truth.

The trait generator follows the analysis model's data-generating equations
(confounder, exposure, binary outcome with a pedigree-correlated random
effect), so every estimator in the package can be validated against known
parameter values.  The whole pipeline is a pure function of its inputs and
seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from pedmr.dataset import MRDataset
from pedmr.pedigree import Individual, KinshipMatrix, Pedigree, kinship_matrix, relationship_cholesky


@dataclass(frozen=True)
class TrueParams:
    """Generating parameter values for one simulation scenario.

    ``theta`` is the causal log-odds effect per unit of exposure;
    ``alpha``/``beta`` are per-instrument exposure and pleiotropic effects;
    ``gamma_x``/``gamma_y`` are family effects on exposure and outcome;
    ``alpha_m``/``alpha_f`` weight the parental exposure levels; and
    ``kinship_scale`` multiplies the 2*phi covariance of the outcome
    random effect (1 reproduces the analysis default).
    """

    theta: float
    alpha: np.ndarray
    beta: np.ndarray
    delta_x: float = 0.0
    sigma_x: float = 1.0
    omega_y: float = 0.0
    gamma_x: np.ndarray = field(default_factory=lambda: np.zeros(1))
    gamma_y: np.ndarray = field(default_factory=lambda: np.zeros(1))
    alpha_m: float = 0.0
    alpha_f: float = 0.0
    kinship_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "gamma_x", np.asarray(self.gamma_x, dtype=float))
        object.__setattr__(self, "gamma_y", np.asarray(self.gamma_y, dtype=float))
        if self.sigma_x <= 0:
            raise ValueError("sigma_x must be positive")
        if self.alpha.shape != self.beta.shape:
            raise ValueError("alpha and beta must have equal length")
        if self.gamma_x.shape != self.gamma_y.shape:
            raise ValueError("gamma_x and gamma_y must have equal length")

    @property
    def n_snps(self) -> int:
        return len(self.alpha)

    @property
    def n_fam(self) -> int:
        return len(self.gamma_x)


def simulate_pedigree(n_families: int, generations: int, children_per_couple: int,
                      seed: int = 0) -> Pedigree:
    """Forest of extended families with spouses marrying in from outside.

    ``generations`` counts total generations including the founding couple:
    1 gives founder-only families, 2 adds their children, and so on.  A
    child receives a married-in spouse only when its generation reproduces.
    Child sexes are drawn from the seeded RNG; everything else is
    structural and deterministic.
    """
    if min(n_families, generations, children_per_couple) < 1:
        raise ValueError("all counts must be >= 1")
    rng = np.random.default_rng(seed)
    individuals: list[Individual] = []
    for f in range(1, n_families + 1):
        fam = f"FAM{f}"
        counter = 0

        def new_id():
            nonlocal counter
            counter += 1
            return f"{fam}I{counter}"

        father, mother = new_id(), new_id()
        individuals.append(Individual(father, None, None, "male", fam))
        individuals.append(Individual(mother, None, None, "female", fam))
        couples = [(father, mother)]
        for gen in range(2, generations + 1):
            next_couples = []
            for dad, mom in couples:
                for _ in range(children_per_couple):
                    child = new_id()
                    sex = "male" if rng.random() < 0.5 else "female"
                    individuals.append(Individual(child, dad, mom, sex, fam))
                    if gen < generations:
                        spouse = new_id()
                        spouse_sex = "female" if sex == "male" else "male"
                        individuals.append(Individual(spouse, None, None, spouse_sex, fam))
                        pair = (child, spouse) if sex == "male" else (spouse, child)
                        next_couples.append(pair)
            couples = next_couples
    return Pedigree(individuals)


def drop_genotypes(ped: Pedigree, n_snps: int, maf, seed: int = 0) -> np.ndarray:
    """Mendelian gene dropping: returns an N x J allele-dosage matrix.

    Founders draw two alleles i.i.d. Bernoulli(maf_j); non-founders inherit
    one uniformly chosen allele from each parent.  ``maf`` may be a scalar
    or a length-J array; the degenerate frequencies 0 and 1 are allowed and
    give constant columns.
    """
    maf = np.broadcast_to(np.asarray(maf, dtype=float), (n_snps,))
    if ((maf < 0) | (maf > 1)).any():
        raise ValueError("allele frequencies must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n = len(ped)
    alleles = np.zeros((n, 2, n_snps), dtype=np.int8)
    for pos in ped.topological_positions():
        ind = ped.individuals[pos]
        if ind.is_founder:
            alleles[pos] = rng.random((2, n_snps)) < maf
        else:
            for slot, parent in enumerate((ind.father_id, ind.mother_id)):
                ppos = ped.index_of(parent)
                pick = rng.integers(0, 2, size=n_snps)
                alleles[pos, slot] = alleles[ppos, pick, np.arange(n_snps)]
    return alleles.sum(axis=1).astype(np.int8)


def simulate_traits(ped: Pedigree, Z: np.ndarray, tp: TrueParams,
                    missing_frac: float = 0.0, seed: int = 0,
                    z_is_standardized: bool = True,
                    kinship: KinshipMatrix | None = None) -> MRDataset:
    """Generate exposure and outcome data from the full generative model.

    Exposures are produced in pedigree topological order so each
    individual's parental exposure levels exist before their own; unknown
    parents contribute 0 to the parental term.  The outcome adds a latent
    correction drawn from MVN(0, kinship_scale * 2 * phi).  A uniformly
    random ``missing_frac`` of exposures is masked afterwards; the pre-mask
    values are kept in the dataset's ``x_true`` channel.
    """
    n = len(ped)
    if Z.shape[0] != n or Z.shape[1] != tp.n_snps:
        raise ValueError(f"Z shape {Z.shape} does not match N={n}, J={tp.n_snps}")
    if not 0.0 <= missing_frac < 1.0:
        raise ValueError("missing_frac must be in [0, 1)")
    fam_levels = tuple(ped.families.keys())
    if len(fam_levels) != tp.n_fam:
        raise ValueError(f"pedigree has {len(fam_levels)} families, params have {tp.n_fam}")

    z_work = np.asarray(Z, dtype=float)
    if not z_is_standardized:
        mu = z_work.mean(axis=0)
        sd = z_work.std(axis=0)
        if (sd <= 0).any():
            raise ValueError("cannot standardize constant genotype column")
        z_work = (z_work - mu) / sd

    rng = np.random.default_rng(seed)
    fam_index = {f: k for k, f in enumerate(fam_levels)}
    fam = np.array([fam_index[ind.family_id] for ind in ped.individuals], dtype=np.intp)

    u = rng.standard_normal(n)
    x = np.empty(n)
    p_m = np.full(n, np.nan)
    p_f = np.full(n, np.nan)
    z_alpha = z_work @ tp.alpha
    for pos in ped.topological_positions():
        ind = ped.individuals[pos]
        parental = 0.0
        if not ind.is_founder:
            p_f[pos] = x[ped.index_of(ind.father_id)]
            p_m[pos] = x[ped.index_of(ind.mother_id)]
            parental = tp.alpha_m * p_m[pos] + tp.alpha_f * p_f[pos]
        nu = (z_alpha[pos] + tp.delta_x * u[pos]
              + tp.gamma_x[fam[pos]] + parental)
        x[pos] = rng.normal(nu, tp.sigma_x)

    if tp.kinship_scale > 0.0:
        kin = kinship_matrix(ped) if kinship is None else kinship
        chol = relationship_cholesky(kin, scale=2.0)
        correction = np.sqrt(tp.kinship_scale) * (chol @ rng.standard_normal(n))
    else:
        correction = np.zeros(n)

    eta = (tp.omega_y + z_work @ tp.beta + tp.theta * x + u
           + tp.gamma_y[fam] + correction)
    y = (rng.random(n) < expit(eta)).astype(np.int8)

    x_obs = x.copy()
    n_mask = int(round(missing_frac * n))
    if n_mask:
        masked = rng.choice(n, size=n_mask, replace=False)
        x_obs[masked] = np.nan

    return MRDataset(ids=tuple(ped.ids), Z=np.asarray(Z, dtype=float), X=x_obs,
                     Y=y, fam=fam, fam_levels=fam_levels, p_m=p_m, p_f=p_f,
                     snp_ids=tuple(f"snp{j + 1}" for j in range(tp.n_snps)),
                     x_true=x)


def write_pedigree_file(ped: Pedigree, path, affected=None) -> None:
    """Write a pedigree file; ``affected`` optionally overrides the status column."""
    sex_code = {"male": "1", "female": "2", "unknown": "0"}
    lines = ["family id father mother sex affected"]
    for pos, ind in enumerate(ped.individuals):
        if affected is not None:
            status = str(int(affected[pos]))
        else:
            status = "NA" if ind.affected is None else str(ind.affected)
        lines.append(" ".join([
            ind.family_id, ind.id, ind.father_id or "0", ind.mother_id or "0",
            sex_code[ind.sex], status,
        ]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_genotype_file(ids, snp_ids, dosages: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id," + ",".join(snp_ids) + "\n")
        for i, id_ in enumerate(ids):
            fh.write(id_ + "," + ",".join(str(int(v)) for v in dosages[i]) + "\n")


def write_phenotype_file(ids, x: np.ndarray, y: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id,X,Y\n")
        for i, id_ in enumerate(ids):
            x_tok = "NA" if np.isnan(x[i]) else repr(float(x[i]))
            fh.write(f"{id_},{x_tok},{int(y[i])}\n")


def write_positions_file(snp_ids, chroms, positions, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("snp,chrom,pos\n")
        for snp, ch, pos in zip(snp_ids, chroms, positions):
            fh.write(f"{snp},{ch},{int(pos)}\n")
