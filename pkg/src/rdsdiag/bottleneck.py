"""Per-tree dispersion diagnostic.

The statistic is the sample-size-weighted squared deviation of per-tree
estimates around the overall estimate.  Its reference distribution is built
by shuffling trait labels across included respondents while tree membership
and degrees stay attached to sample positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .dataset import Respondent, StudyDataset
from .errors import TooFewTrees
from .estimators import included_members, vh_estimate
from .forest import RecruitmentForest


@dataclass(frozen=True)
class PermutationResult:
    observed: float
    replicates: int
    quantile_rank: float
    flagged: bool
    rng_seed: int
    threshold: float


def wsd(per_tree: Mapping[str, tuple[float, int]], overall: float) -> float:
    """Weighted squared deviation: sum of n_s * (p_s - p)^2 over trees."""
    return float(sum(n_s * (p_s - overall) ** 2 for p_s, n_s in per_tree.values()))


def _included_arrays(
    ds: StudyDataset,
    forest: RecruitmentForest,
    trait: str,
    degree_question: str,
) -> tuple[list[Respondent], np.ndarray, np.ndarray, np.ndarray]:
    members = included_members(ds, forest, trait, degree_question)
    y = np.array([bool(ds.indicator(r, trait)) for r in members], dtype=float)
    w = np.array([1.0 / r.degree.get(degree_question) for r in members])
    roots = sorted({forest.tree_of[r.id] for r in members})
    root_index = {root: i for i, root in enumerate(roots)}
    t = np.array([root_index[forest.tree_of[r.id]] for r in members], dtype=int)
    return members, y, w, t


def _wsd_from_matrix(
    y_matrix: np.ndarray, w: np.ndarray, t: np.ndarray, n_trees: int
) -> np.ndarray:
    """Vectorized WSD for one permuted label row per replicate."""
    n_s = np.bincount(t, minlength=n_trees).astype(float)
    denom_s = np.bincount(t, weights=w, minlength=n_trees)
    denom = w.sum()
    wy = y_matrix * w[None, :]
    one_hot = np.zeros((len(t), n_trees))
    one_hot[np.arange(len(t)), t] = 1.0
    num_s = wy @ one_hot
    p_s = num_s / denom_s[None, :]
    p_all = wy.sum(axis=1) / denom
    return ((p_s - p_all[:, None]) ** 2 * n_s[None, :]).sum(axis=1)


def wsd_permutation_test(
    ds: StudyDataset,
    forest: RecruitmentForest,
    trait: str,
    replicates: int = 10_000,
    threshold: float = 0.90,
    rng_seed: int = 0,
    degree_question: str = "q_seen_week",
) -> PermutationResult:
    """Permutation reference for the weighted squared deviation.

    Flagging uses strict exceedance of the threshold quantile: ties between
    the observed statistic and replicate values never flag.  Deterministic
    given ``rng_seed``; replicate permutations derive from per-replicate
    seed streams."""
    members, y, w, t = _included_arrays(ds, forest, trait, degree_question)
    n_trees = int(t.max()) + 1 if len(t) else 0
    if n_trees < 2:
        raise TooFewTrees(
            f"trait {trait!r}: need at least 2 trees with included members"
        )
    observed = _wsd_from_matrix(y[None, :], w, t, n_trees)[0]

    children = np.random.SeedSequence(rng_seed).spawn(replicates)
    y_perm = np.empty((replicates, len(y)))
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        y_perm[i] = y[rng.permutation(len(y))]
    stats = _wsd_from_matrix(y_perm, w, t, n_trees)
    quantile_rank = float((stats < observed).sum() / replicates)
    return PermutationResult(
        observed=float(observed),
        replicates=replicates,
        quantile_rank=quantile_rank,
        flagged=quantile_rank > threshold,
        rng_seed=rng_seed,
        threshold=threshold,
    )


@dataclass(frozen=True)
class AllPointsRow:
    tree: str
    included_index: int
    respondent_id: str
    interview_order: int
    has_trait: bool


def all_points_data(
    ds: StudyDataset,
    forest: RecruitmentForest,
    trait: str,
    degree_question: str = "q_seen_week",
) -> list[AllPointsRow]:
    """Per-respondent (tree, included index, trait value) records, global
    interview order preserved; respondents missing the trait are omitted."""
    members = included_members(ds, forest, trait, degree_question)
    return [
        AllPointsRow(
            tree=forest.tree_of[r.id],
            included_index=i + 1,
            respondent_id=r.id,
            interview_order=r.interview_order,
            has_trait=bool(ds.indicator(r, trait)),
        )
        for i, r in enumerate(members)
    ]


def overall_estimate(
    ds: StudyDataset,
    forest: RecruitmentForest,
    trait: str,
    degree_question: str = "q_seen_week",
) -> float:
    members = included_members(ds, forest, trait, degree_question)
    return vh_estimate(
        (bool(ds.indicator(r, trait)), float(r.degree.get(degree_question)))
        for r in members
    )
