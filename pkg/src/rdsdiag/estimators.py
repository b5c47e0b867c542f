"""Design-based prevalence estimators.

``vh_estimate`` is the inverse-degree-weighted ratio estimator used
throughout the toolkit.  ``ss_estimate`` is a Monte-Carlo successive-sampling
approximation used for finite-population sensitivity analysis: it iterates
between (a) scaling the sample degree distribution into a working population
of the assumed size, (b) simulating without-replacement draws with
probability proportional to degree, and (c) re-estimating per-degree-class
inclusion probabilities, until the implied weights stabilize.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .dataset import Respondent, StudyDataset
from .errors import EmptySample, PopulationTooSmall, ZeroDegree
from .forest import RecruitmentForest, included_in_tree

DEFAULT_DEGREE_QUESTION = "q_seen_week"


@dataclass(frozen=True)
class EstimateSeries:
    """Cumulative prevalence estimates over included respondents."""

    trait: str
    orders: tuple[int, ...]
    values: tuple[float, ...]

    @property
    def final(self) -> float:
        if not self.values:
            raise EmptySample(f"no included respondents for trait {self.trait!r}")
        return self.values[-1]

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SSConfig:
    population_size: int
    replications: int = 2000
    max_iterations: int = 10
    tolerance: float = 1e-4
    rng_seed: int = 0

    def validate(self, n: int) -> None:
        if self.population_size < n:
            raise PopulationTooSmall(
                f"population size {self.population_size} < sample size {n}"
            )
        if self.replications < 1:
            raise PopulationTooSmall("replications must be >= 1")


def vh_estimate(members: Iterable[tuple[bool, float]]) -> float:
    """Inverse-degree-weighted proportion over (has_trait, degree) pairs."""
    num = 0.0
    den = 0.0
    n = 0
    for has_trait, degree in members:
        if degree is None or degree <= 0:
            raise ZeroDegree(f"degree {degree!r}: exclude such members before calling")
        w = 1.0 / degree
        den += w
        if has_trait:
            num += w
        n += 1
    if n == 0:
        raise EmptySample("no members")
    return num / den


def included_members(
    ds: StudyDataset,
    forest: RecruitmentForest,
    trait: str,
    degree_question: str = DEFAULT_DEGREE_QUESTION,
) -> list[Respondent]:
    """All included respondents (non-seed, trait and degree reported) in
    interview order."""
    by_tree = included_in_tree(forest, ds, trait, degree_question)
    members = [r for tree in by_tree.values() for r in tree]
    members.sort(key=lambda r: r.interview_order)
    return members


def cumulative_estimates(
    ds: StudyDataset,
    forest: RecruitmentForest,
    trait: str,
    degree_question: str = DEFAULT_DEGREE_QUESTION,
) -> EstimateSeries:
    """Prefix estimates over included respondents in interview order.

    Seeds and respondents with missing trait or degree are excluded from
    both numerator and denominator."""
    members = included_members(ds, forest, trait, degree_question)
    num = 0.0
    den = 0.0
    orders = []
    values = []
    for r in members:
        w = 1.0 / r.degree.get(degree_question)
        den += w
        if ds.indicator(r, trait):
            num += w
        orders.append(r.interview_order)
        values.append(num / den)
    return EstimateSeries(trait=trait, orders=tuple(orders), values=tuple(values))


def per_tree_estimates(
    ds: StudyDataset,
    forest: RecruitmentForest,
    trait: str,
    degree_question: str = DEFAULT_DEGREE_QUESTION,
) -> dict[str, tuple[float, int]]:
    """Mapping root -> (tree estimate, n_s); trees with n_s == 0 omitted."""
    by_tree = included_in_tree(forest, ds, trait, degree_question)
    out = {}
    for root, members in by_tree.items():
        if not members:
            continue
        est = vh_estimate(
            (bool(ds.indicator(r, trait)), float(r.degree.get(degree_question)))
            for r in members
        )
        out[root] = (est, len(members))
    return out


def per_tree_series(
    ds: StudyDataset,
    forest: RecruitmentForest,
    trait: str,
    degree_question: str = DEFAULT_DEGREE_QUESTION,
) -> dict[str, EstimateSeries]:
    """Per-tree cumulative estimate series (for bottleneck plots)."""
    by_tree = included_in_tree(forest, ds, trait, degree_question)
    out = {}
    for root, members in by_tree.items():
        if not members:
            continue
        num = den = 0.0
        orders, values = [], []
        for r in members:
            w = 1.0 / r.degree.get(degree_question)
            den += w
            if ds.indicator(r, trait):
                num += w
            orders.append(r.interview_order)
            values.append(num / den)
        out[root] = EstimateSeries(trait=trait, orders=tuple(orders), values=tuple(values))
    return out


# ---------------------------------------------------------------------------
# successive sampling


def _simulate_class_draws(
    masses: np.ndarray,
    class_weights: np.ndarray,
    n_draws: int,
    replications: int,
    seed_children: Sequence[np.random.SeedSequence],
) -> np.ndarray:
    """Mean per-class counts among the first ``n_draws`` units of a
    probability-proportional-to-weight without-replacement draw.

    Classes carry continuous masses; each draw removes one unit of mass from
    the selected class.  Replicate RNG streams derive from per-replicate seed
    sequences so results do not depend on execution order.
    """
    k = len(masses)
    uniforms = np.empty((replications, n_draws))
    for idx, child in enumerate(seed_children):
        uniforms[idx] = np.random.default_rng(child).random(n_draws)

    remaining = np.tile(masses, (replications, 1))
    drawn = np.zeros((replications, k))
    rows = np.arange(replications)
    for step in range(n_draws):
        probs = remaining * class_weights
        totals = probs.sum(axis=1, keepdims=True)
        cum = np.cumsum(probs, axis=1)
        u = uniforms[:, step, None] * totals
        picks = (cum < u).sum(axis=1)
        picks = np.minimum(picks, k - 1)
        take = np.minimum(1.0, remaining[rows, picks])
        remaining[rows, picks] -= take
        drawn[rows, picks] += take
    return drawn.mean(axis=0)


def _integer_population(
    counts: np.ndarray, pi: np.ndarray, population_size: int
) -> np.ndarray:
    """Scale sample class counts by 1/pi into an integer working population.

    Each class keeps at least its observed count; the remaining
    ``population_size - n`` units are split proportionally to the excess
    implied by the inclusion probabilities (largest-remainder rounding)."""
    n = int(counts.sum())
    spare = population_size - n
    if spare <= 0:
        return counts.astype(float)
    excess = counts / pi - counts
    if excess.sum() <= 0:
        shares = counts / counts.sum() * spare
    else:
        shares = excess / excess.sum() * spare
    base = np.floor(shares).astype(int)
    remainder = spare - base.sum()
    if remainder > 0:
        order = np.argsort(-(shares - base), kind="stable")
        base[order[:remainder]] += 1
    return (counts + base).astype(float)


def ss_inclusion_weights(
    degrees: np.ndarray, cfg: SSConfig
) -> tuple[np.ndarray, bool]:
    """Per-unit inclusion weights from the successive-sampling fixed point.

    Returns (weights aligned with ``degrees``, converged flag).
    """
    n = len(degrees)
    cfg.validate(n)
    classes, counts = np.unique(degrees, return_counts=True)
    k = len(classes)
    if k == 1:
        return np.ones(n), True

    pi = classes / classes.max()  # start at the with-replacement mapping
    root = np.random.SeedSequence(cfg.rng_seed)
    children = root.spawn(cfg.replications * cfg.max_iterations)
    converged = False
    for iteration in range(cfg.max_iterations):
        masses = _integer_population(counts, pi, cfg.population_size)
        mean_drawn = _simulate_class_draws(
            masses,
            classes.astype(float),
            n,
            cfg.replications,
            children[iteration * cfg.replications : (iteration + 1) * cfg.replications],
        )
        new_pi = np.clip(mean_drawn / masses, 1e-12, 1.0)
        w_old = (1.0 / pi) / (1.0 / pi).mean()
        w_new = (1.0 / new_pi) / (1.0 / new_pi).mean()
        delta = np.abs(w_new - w_old).max()
        pi = new_pi
        if delta < cfg.tolerance:
            converged = True
            break
    if not converged:
        warnings.warn(
            "successive-sampling weights did not converge; using last iterate",
            RuntimeWarning,
            stacklevel=2,
        )
    class_index = np.searchsorted(classes, degrees)
    return (1.0 / pi)[class_index], converged


def ss_estimate(
    ds: StudyDataset,
    forest: RecruitmentForest,
    trait: str,
    cfg: SSConfig,
    degree_question: str = DEFAULT_DEGREE_QUESTION,
) -> float:
    """Monte-Carlo successive-sampling prevalence estimate.

    Deterministic given ``cfg.rng_seed``.  Converges to the inverse-degree
    estimate as the population size grows and to the unweighted sample
    proportion in the census limit."""
    members = included_members(ds, forest, trait, degree_question)
    if not members:
        raise EmptySample(f"no included respondents for trait {trait!r}")
    degrees = np.array([r.degree.get(degree_question) for r in members], dtype=float)
    y = np.array([bool(ds.indicator(r, trait)) for r in members], dtype=float)
    weights, _ = ss_inclusion_weights(degrees, cfg)
    return float((weights * y).sum() / weights.sum())


@dataclass(frozen=True)
class SSVHRow:
    trait: str
    scenario_population: int
    vh: float
    ss: float
    difference: float
    flagged: bool


def ss_vh_table(
    ds: StudyDataset,
    forest: RecruitmentForest,
    traits: Sequence[str],
    scenarios: Sequence[SSConfig],
    flag_threshold: float = 0.01,
    degree_question: str = DEFAULT_DEGREE_QUESTION,
) -> list[SSVHRow]:
    """Side-by-side estimator comparison; rows flagged when the absolute
    difference exceeds the threshold."""
    rows = []
    for trait in traits:
        members = included_members(ds, forest, trait, degree_question)
        if not members:
            continue
        vh = vh_estimate(
            (bool(ds.indicator(r, trait)), float(r.degree.get(degree_question)))
            for r in members
        )
        for cfg in scenarios:
            ss = ss_estimate(ds, forest, trait, cfg, degree_question)
            diff = ss - vh
            rows.append(
                SSVHRow(
                    trait=trait,
                    scenario_population=cfg.population_size,
                    vh=vh,
                    ss=ss,
                    difference=diff,
                    flagged=abs(diff) > flag_threshold,
                )
            )
    return rows
