"""Analysis dataset: loading, validation, standardization, instrument selection.

The central container is :class:`MRDataset`, whose rows are aligned with a
pedigree (and hence with a kinship matrix).  Missing exposure values are
held as NaN; ``partition_missing`` reorders rows so observed-exposure rows
come first, which is the layout the Bayesian model expects.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from pedmr.pedigree import Pedigree


class DatasetError(ValueError):
    """Raised for malformed or inconsistent data files."""


class DegenerateColumnError(DatasetError):
    """A column that should be standardized has zero variance."""


class EmptySelectionError(DatasetError):
    """No variant passed the marginal-association threshold."""


@dataclass(frozen=True)
class MRDataset:
    """Per-individual data for one MR analysis, aligned to a kinship order.

    ``X`` uses NaN for missing exposure values.  ``p_m``/``p_f`` hold the
    parents' exposure levels and use NaN when unknown before
    standardization; after standardization unknown entries are 0 (the
    post-standardization mean).  ``fam_design`` holds the one-hot family
    indicator columns (standardized in a standardized dataset).

    ``x_true`` is an optional hidden truth channel filled by the simulator:
    the exposure values before missingness masking, for imputation scoring.
    """

    ids: tuple[str, ...]
    Z: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    fam: np.ndarray
    fam_levels: tuple[str, ...]
    p_m: np.ndarray
    p_f: np.ndarray
    snp_ids: tuple[str, ...]
    fam_design: np.ndarray = field(default=None)
    pm_known: np.ndarray = field(default=None)
    pf_known: np.ndarray = field(default=None)
    standardized: bool = False
    transforms: dict = field(default_factory=dict)
    x_true: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.ids)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "snp_ids", tuple(self.snp_ids))
        object.__setattr__(self, "fam_levels", tuple(self.fam_levels))
        if self.Z.ndim != 2 or self.Z.shape[0] != n:
            raise DatasetError(f"Z shape {self.Z.shape} does not match {n} individuals")
        if self.Z.shape[1] != len(self.snp_ids) or self.Z.shape[1] < 1:
            raise DatasetError("need at least one instrument column with matching snp ids")
        for name, arr in (("X", self.X), ("Y", self.Y), ("fam", self.fam),
                          ("p_m", self.p_m), ("p_f", self.p_f)):
            if arr.shape != (n,):
                raise DatasetError(f"{name} has shape {arr.shape}, expected ({n},)")
        if not np.isin(self.Y, (0, 1)).all():
            raise DatasetError("Y must be binary 0/1")
        counts = np.bincount(self.fam, minlength=len(self.fam_levels))
        if (counts == 0).any():
            empty = [self.fam_levels[i] for i in np.flatnonzero(counts == 0)]
            raise DatasetError(f"family labels never used: {empty}")
        if self.fam_design is None:
            design = np.zeros((n, len(self.fam_levels)))
            design[np.arange(n), self.fam] = 1.0
            object.__setattr__(self, "fam_design", design)
        if self.pm_known is None:
            object.__setattr__(self, "pm_known", ~np.isnan(self.p_m))
        if self.pf_known is None:
            object.__setattr__(self, "pf_known", ~np.isnan(self.p_f))

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def n_snps(self) -> int:
        return self.Z.shape[1]

    @property
    def n_fam(self) -> int:
        return len(self.fam_levels)

    @property
    def obs_mask(self) -> np.ndarray:
        return ~np.isnan(self.X)

    @property
    def n_obs(self) -> int:
        return int(self.obs_mask.sum())

    @property
    def n_mis(self) -> int:
        return self.n - self.n_obs

    def take(self, rows: np.ndarray) -> "MRDataset":
        """Row subset/permutation preserving all aligned fields."""
        return replace(
            self,
            ids=tuple(self.ids[i] for i in rows),
            Z=self.Z[rows],
            X=self.X[rows],
            Y=self.Y[rows],
            fam=self.fam[rows],
            p_m=self.p_m[rows],
            p_f=self.p_f[rows],
            fam_design=self.fam_design[rows],
            pm_known=self.pm_known[rows],
            pf_known=self.pf_known[rows],
            x_true=None if self.x_true is None else self.x_true[rows],
        )


@dataclass(frozen=True)
class SummaryStats:
    """Per-instrument association summaries for the two MR legs.

    ``beta_x``/``se_x`` describe the instrument-exposure leg and
    ``beta_y``/``se_y`` the instrument-outcome leg on the log-odds scale.
    ``dropped`` lists instruments removed for non-convergence (separation).
    """

    snp_ids: tuple[str, ...]
    beta_x: np.ndarray
    se_x: np.ndarray
    beta_y: np.ndarray
    se_y: np.ndarray
    p_x: np.ndarray | None = None
    p_y: np.ndarray | None = None
    dropped: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "snp_ids", tuple(self.snp_ids))
        object.__setattr__(self, "dropped", tuple(self.dropped))
        j = len(self.snp_ids)
        for name in ("beta_x", "se_x", "beta_y", "se_y"):
            if getattr(self, name).shape != (j,):
                raise DatasetError(f"{name} must have length {j}")
        if (self.se_x <= 0).any() or (self.se_y <= 0).any():
            raise DatasetError("standard errors must be positive")

    @property
    def n_snps(self) -> int:
        return len(self.snp_ids)


def _read_csv_rows(path) -> list[list[str]]:
    text = Path(path).read_text(encoding="utf-8")
    return [row for row in csv.reader(io.StringIO(text)) if row]


def load_dataset(pedigree: Pedigree, genotype_file, phenotype_file) -> MRDataset:
    """Load genotype and phenotype CSVs and align them to pedigree order.

    Genotype file: header ``id,<snp>,...`` then one row per individual with
    allele dosages in {0,1,2}.  Phenotype file: header ``id,X,Y`` with "NA"
    for a missing exposure.  Every pedigree member must appear in both
    files; ids absent from the pedigree are an error.

    Parental exposure columns are filled from each parent's X value when
    the parent is in the pedigree and has an observed X, and are flagged
    unknown (NaN) otherwise.
    """
    geno_rows = _read_csv_rows(genotype_file)
    if not geno_rows:
        raise DatasetError("empty genotype file")
    snp_ids = tuple(geno_rows[0][1:])
    if not snp_ids:
        raise DatasetError("genotype file has no SNP columns")
    dose_by_id: dict[str, np.ndarray] = {}
    for row in geno_rows[1:]:
        id_ = row[0]
        if id_ not in pedigree:
            raise DatasetError(f"genotype row for id {id_!r} not in pedigree")
        doses = np.array([float(tok) for tok in row[1:]])
        if len(doses) != len(snp_ids):
            raise DatasetError(f"genotype row for {id_!r} has {len(doses)} dosages")
        if not np.isin(doses, (0.0, 1.0, 2.0)).all():
            raise DatasetError(f"dosage outside {{0,1,2}} for id {id_!r}")
        dose_by_id[id_] = doses

    pheno_rows = _read_csv_rows(phenotype_file)
    if not pheno_rows or [c.lower() for c in pheno_rows[0][:3]] != ["id", "x", "y"]:
        raise DatasetError("phenotype file must have header id,X,Y")
    x_by_id: dict[str, float] = {}
    y_by_id: dict[str, int] = {}
    for row in pheno_rows[1:]:
        id_, x_tok, y_tok = row[0], row[1], row[2]
        if id_ not in pedigree:
            raise DatasetError(f"phenotype row for id {id_!r} not in pedigree")
        x_by_id[id_] = np.nan if x_tok.upper() == "NA" else float(x_tok)
        if y_tok not in ("0", "1"):
            raise DatasetError(f"Y outside {{0,1}} for id {id_!r}")
        y_by_id[id_] = int(y_tok)

    for id_ in pedigree.ids:
        if id_ not in dose_by_id:
            raise DatasetError(f"no genotype row for pedigree member {id_!r}")
        if id_ not in x_by_id:
            raise DatasetError(f"no phenotype row for pedigree member {id_!r}")

    ids = tuple(pedigree.ids)
    n = len(ids)
    Z = np.vstack([dose_by_id[i] for i in ids])
    X = np.array([x_by_id[i] for i in ids])
    Y = np.array([y_by_id[i] for i in ids], dtype=np.int8)
    fam_levels = tuple(pedigree.families.keys())
    fam_index = {f: k for k, f in enumerate(fam_levels)}
    fam = np.array([fam_index[ind.family_id] for ind in pedigree.individuals], dtype=np.intp)

    p_m = np.full(n, np.nan)
    p_f = np.full(n, np.nan)
    for pos, ind in enumerate(pedigree.individuals):
        if ind.is_founder:
            continue
        for arr, parent in ((p_f, ind.father_id), (p_m, ind.mother_id)):
            val = x_by_id.get(parent, np.nan)
            if not np.isnan(val):
                arr[pos] = val

    return MRDataset(ids=ids, Z=Z, X=X, Y=Y, fam=fam, fam_levels=fam_levels,
                     p_m=p_m, p_f=p_f, snp_ids=snp_ids)


def _standardize_column(values: np.ndarray, name: str, known=None, fill=np.nan):
    """Center and scale over known entries; returns (column, (mean, sd)).

    Unknown entries are set to ``fill``.  ``known`` defaults to the non-NaN
    entries; an explicit mask keeps standardization idempotent for columns
    whose unknowns have already been mean-filled.
    """
    known = ~np.isnan(values) if known is None else np.asarray(known, dtype=bool)
    if not known.any():
        return np.zeros_like(values), None
    mean = float(values[known].mean())
    sd = float(values[known].std())
    if sd <= 0.0:
        raise DegenerateColumnError(f"column {name!r} has zero variance")
    out = np.full_like(values, fill, dtype=float)
    out[known] = (values[known] - mean) / sd
    return out, (mean, sd)


def standardize(d: MRDataset) -> MRDataset:
    """Center and scale X, each instrument, parental levels, and the family design.

    X is standardized over its observed entries only (NaNs preserved).
    Unknown parental entries become 0, the post-standardization mean, so
    founders stay in the exposure likelihood.  Transformation parameters
    are kept in ``transforms`` for reporting on natural scales.
    """
    transforms: dict = {}
    x_std, transforms["X"] = _standardize_column(d.X, "X")

    z_std = np.empty_like(d.Z, dtype=float)
    z_mu = np.empty(d.n_snps)
    z_sd = np.empty(d.n_snps)
    for j, snp in enumerate(d.snp_ids):
        z_std[:, j], tr = _standardize_column(d.Z[:, j].astype(float), f"Z:{snp}")
        z_mu[j], z_sd[j] = tr
    transforms["Z"] = (z_mu, z_sd)

    pm_std, transforms["P_M"] = _standardize_column(d.p_m, "P_M", known=d.pm_known, fill=0.0)
    pf_std, transforms["P_F"] = _standardize_column(d.p_f, "P_F", known=d.pf_known, fill=0.0)

    if d.n_fam == 1:
        # a lone family's indicator is constant; it carries no information
        fam_std = np.zeros((d.n, 1))
        transforms["FAM"] = None
    else:
        onehot = np.zeros((d.n, d.n_fam))
        onehot[np.arange(d.n), d.fam] = 1.0
        fam_std = np.empty_like(onehot)
        f_mu = np.empty(d.n_fam)
        f_sd = np.empty(d.n_fam)
        for k, level in enumerate(d.fam_levels):
            fam_std[:, k], tr = _standardize_column(onehot[:, k], f"FAM:{level}")
            f_mu[k], f_sd[k] = tr
        transforms["FAM"] = (f_mu, f_sd)

    return replace(d, X=x_std, Z=z_std, p_m=pm_std, p_f=pf_std,
                   fam_design=fam_std, standardized=True, transforms=transforms)


def partition_missing(d: MRDataset):
    """Stable permutation placing observed-exposure rows first.

    Returns ``(dataset, perm)`` where ``dataset.ids[i] == d.ids[perm[i]]``;
    apply the same permutation to any kinship matrix aligned with ``d``
    (``phi[perm][:, perm]``).
    """
    obs = d.obs_mask
    perm = np.concatenate([np.flatnonzero(obs), np.flatnonzero(~obs)])
    return d.take(perm), perm


def _marginal_p_values(Z_full: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Two-sided t-test p-value of the slope in simple regression of X on each column."""
    obs = ~np.isnan(X)
    x = X[obs]
    n = len(x)
    if n < 3:
        raise DatasetError("need at least 3 observed exposure values for selection")
    pvals = np.ones(Z_full.shape[1])
    xc = x - x.mean()
    ssx = float(xc @ xc)
    for j in range(Z_full.shape[1]):
        z = Z_full[obs, j].astype(float)
        zc = z - z.mean()
        ssz = float(zc @ zc)
        if ssz <= 0.0:
            continue
        slope = float(zc @ xc) / ssz
        rss = ssx - slope * slope * ssz
        rss = max(rss, 0.0)
        if rss == 0.0:
            pvals[j] = 0.0
            continue
        se = np.sqrt(rss / (n - 2) / ssz)
        t = slope / se
        pvals[j] = 2.0 * stats.t.sf(abs(t), df=n - 2)
    return pvals


def select_instruments(Z_full: np.ndarray, positions: np.ndarray, X: np.ndarray,
                       p_thresh: float = 5e-3, r2_thresh: float = 0.20,
                       window_bp: int = 100_000) -> list[int]:
    """Marginal-association filter followed by greedy LD pruning.

    Variants whose simple-regression p-value against the exposure is below
    ``p_thresh`` are scanned in ascending p-value order (ties broken by
    lower column index); a variant is kept only if its squared correlation
    with every already-kept variant within ``window_bp`` is below
    ``r2_thresh``.  Returns kept column indices in ascending order.
    """
    if not (0.0 < p_thresh < 1.0 and 0.0 < r2_thresh < 1.0):
        raise ValueError("p_thresh and r2_thresh must be in (0, 1)")
    positions = np.asarray(positions)
    if positions.shape != (Z_full.shape[1],):
        raise DatasetError("positions must align with genotype columns")

    pvals = _marginal_p_values(Z_full, X)
    candidates = np.flatnonzero(pvals < p_thresh)
    if candidates.size == 0:
        raise EmptySelectionError(f"no variant passed p < {p_thresh}")
    candidates = candidates[np.lexsort((candidates, pvals[candidates]))]

    kept: list[int] = []
    for j in candidates:
        ok = True
        for k in kept:
            if abs(int(positions[j]) - int(positions[k])) > window_bp:
                continue
            r = np.corrcoef(Z_full[:, j].astype(float), Z_full[:, k].astype(float))[0, 1]
            if r * r >= r2_thresh:
                ok = False
                break
        if ok:
            kept.append(int(j))
    return sorted(kept)


def summary_stats(d: MRDataset, kinship=None, outcome_leg: str = "logistic") -> SummaryStats:
    """Per-instrument association summaries (see :func:`pedmr.assoc.assoc_scan`).

    With a kinship matrix the exposure leg uses the variance-component
    mixed model; otherwise plain least squares.  The outcome leg defaults
    to per-instrument logistic regression.
    """
    from pedmr.assoc import assoc_scan

    phi2 = None if kinship is None else 2.0 * kinship.phi
    return assoc_scan(d, phi2, use_lmm=kinship is not None, outcome_leg=outcome_leg)


__all__ = [
    "MRDataset",
    "SummaryStats",
    "DatasetError",
    "DegenerateColumnError",
    "EmptySelectionError",
    "load_dataset",
    "standardize",
    "partition_missing",
    "select_instruments",
    "summary_stats",
]
