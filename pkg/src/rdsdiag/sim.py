"""Synthetic network generator and RDS process simulator.

The simulator is the verification oracle for the statistical diagnostics:
it produces fully populated StudyDatasets (including synthetic follow-up
answers) from a block-structured population graph whose true prevalences
are known.  Recruit selection is uniform among eligible neighbors, with a
trait-dependent recruit-rate knob to break that assumption deliberately.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .dataset import (
    CouponOutcome,
    DegreeReport,
    FollowUpRecord,
    Respondent,
    StudyDataset,
    TraitSpec,
)
from .errors import UnknownTrait, UnrealizableConfig

REFUSAL_REASON_CATEGORIES = (
    "Too busy",
    "Fear being identified",
    "Not interested",
    "Fear test results",
    "Other",
)
DEFAULT_REFUSAL_PROBS = (0.15, 0.3, 0.25, 0.2, 0.1)

MOTIVATION_CATEGORIES = (
    "For HIV test",
    "Incentive",
    "Recruiter",
    "Study interest",
    "Other",
)
DEFAULT_MOTIVATION_PROBS = (0.7, 0.1, 0.08, 0.1, 0.02)


@dataclass(frozen=True)
class TraitRule:
    """How a node trait is assigned: aligned with a block, independent
    Bernoulli, or the top fraction of nodes by degree."""

    kind: str  # "block" | "bernoulli" | "top_degree"
    block: int = 0
    p: float = 0.5
    fraction: float = 0.3


@dataclass(frozen=True)
class NetworkConfig:
    block_sizes: tuple[int, ...]
    within_block_edge_prob: float
    between_block_edge_prob: float
    traits: Mapping[str, TraitRule] = field(default_factory=dict)

    @property
    def node_count(self) -> int:
        return sum(self.block_sizes)


@dataclass(frozen=True)
class SyntheticNetwork:
    blocks: np.ndarray  # block index per node
    neighbors: tuple[np.ndarray, ...]
    degrees: np.ndarray
    node_traits: dict[str, np.ndarray]  # boolean arrays
    n_connect_edges: int  # edges added to enforce connectivity

    @property
    def node_count(self) -> int:
        return len(self.blocks)


def generate_network(cfg: NetworkConfig, rng_seed: int = 0) -> SyntheticNetwork:
    """Block-structured random graph; connectivity is enforced by linking
    stray components to the largest one (added edges are counted)."""
    for p in (cfg.within_block_edge_prob, cfg.between_block_edge_prob):
        if not 0.0 <= p <= 1.0:
            raise UnrealizableConfig(f"edge probability {p} outside [0, 1]")
    n = cfg.node_count
    if n < 2:
        raise UnrealizableConfig("need at least 2 nodes")
    sizes = np.array(cfg.block_sizes)
    expected_degree = (
        cfg.within_block_edge_prob * (sizes.max() - 1)
        + cfg.between_block_edge_prob * (n - sizes.max())
    )
    if expected_degree < 1.0:
        raise UnrealizableConfig("expected degree below 1; graph would shatter")

    rng = np.random.default_rng(rng_seed)
    blocks = np.repeat(np.arange(len(sizes)), sizes)
    starts = np.concatenate([[0], np.cumsum(sizes)])
    adjacency: list[list[int]] = [[] for _ in range(n)]

    def add_edge(u: int, v: int) -> None:
        adjacency[u].append(v)
        adjacency[v].append(u)

    for bi in range(len(sizes)):
        for bj in range(bi, len(sizes)):
            p = cfg.within_block_edge_prob if bi == bj else cfg.between_block_edge_prob
            if p <= 0.0:
                continue
            ni, nj = sizes[bi], sizes[bj]
            mat = rng.random((ni, nj)) < p
            if bi == bj:
                mat = np.triu(mat, k=1)
            us, vs = np.nonzero(mat)
            for u, v in zip(us + starts[bi], vs + starts[bj]):
                add_edge(int(u), int(v))

    n_connect = _connect_components(adjacency, rng)
    neighbors = tuple(np.array(sorted(set(a)), dtype=int) for a in adjacency)
    degrees = np.array([len(a) for a in neighbors])

    traits: dict[str, np.ndarray] = {}
    for name, rule in cfg.traits.items():
        if rule.kind == "block":
            traits[name] = blocks == rule.block
        elif rule.kind == "bernoulli":
            traits[name] = rng.random(n) < rule.p
        elif rule.kind == "top_degree":
            k = int(round(rule.fraction * n))
            order = np.lexsort((np.arange(n), -degrees))
            mask = np.zeros(n, dtype=bool)
            mask[order[:k]] = True
            traits[name] = mask
        else:
            raise UnrealizableConfig(f"unknown trait rule kind {rule.kind!r}")

    return SyntheticNetwork(
        blocks=blocks,
        neighbors=neighbors,
        degrees=degrees,
        node_traits=traits,
        n_connect_edges=n_connect,
    )


def _connect_components(adjacency: list[list[int]], rng: np.random.Generator) -> int:
    n = len(adjacency)
    component = np.full(n, -1)
    comp_id = 0
    for start in range(n):
        if component[start] >= 0:
            continue
        queue = deque([start])
        component[start] = comp_id
        while queue:
            u = queue.popleft()
            for v in adjacency[u]:
                if component[v] < 0:
                    component[v] = comp_id
                    queue.append(v)
        comp_id += 1
    if comp_id == 1:
        return 0
    counts = np.bincount(component)
    main = int(counts.argmax())
    main_nodes = np.nonzero(component == main)[0]
    added = 0
    for cid in range(comp_id):
        if cid == main:
            continue
        nodes = np.nonzero(component == cid)[0]
        u = int(rng.choice(nodes))
        v = int(rng.choice(main_nodes))
        adjacency[u].append(v)
        adjacency[v].append(u)
        added += 1
    return added


def true_prevalence(net: SyntheticNetwork, trait: str) -> float:
    if trait not in net.node_traits:
        raise UnknownTrait(f"network has no trait {trait!r}")
    return float(net.node_traits[trait].mean())


@dataclass(frozen=True)
class SimConfig:
    target_n: int
    seed_count: int = 6
    coupon_allotment: int = 3
    replacement_mode: str = "without"  # "with" | "without"
    recruit_probs: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4)
    differential_trait: Optional[str] = None
    recruit_probs_if_trait: Optional[tuple[float, ...]] = None
    refusal_prob: float = 0.05
    nonreturn_prob: float = 0.1
    seed_block: Optional[int] = None
    followup_prob: float = 0.43
    retest_sd: float = 0.0
    recip_prob: float = 0.88
    trait_missing_prob: float = 0.0
    employment_trait: Optional[str] = "employed"
    interviews_per_day: int = 10
    motivation_probs: tuple[float, ...] = DEFAULT_MOTIVATION_PROBS
    site_label: str = "sim"
    rng_seed: int = 0

    def validate(self, net: SyntheticNetwork) -> None:
        if self.replacement_mode not in ("with", "without"):
            raise UnrealizableConfig(f"bad replacement_mode {self.replacement_mode!r}")
        if self.seed_count > net.node_count:
            raise UnrealizableConfig("more seeds than nodes")
        if self.replacement_mode == "without" and self.target_n > net.node_count:
            raise UnrealizableConfig("target_n exceeds population in without mode")
        if len(self.recruit_probs) != self.coupon_allotment + 1:
            raise UnrealizableConfig("recruit_probs must cover 0..allotment")
        for p in (self.refusal_prob, self.nonreturn_prob, self.followup_prob):
            if not 0.0 <= p <= 1.0:
                raise UnrealizableConfig("probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class SimulationResult:
    dataset: StudyDataset
    node_of: dict[str, int]
    extinct: bool
    true_prevalences: dict[str, float]


def simulate_rds(net: SyntheticNetwork, cfg: SimConfig) -> SimulationResult:
    """Run the coupon-based recruitment process on a synthetic network.

    Every respondent record carries a full degree report, trait answers and
    (for a random subset) a follow-up record, so that all diagnostics can be
    exercised on the output.  Deterministic given ``cfg.rng_seed``."""
    cfg.validate(net)
    rng = np.random.default_rng(cfg.rng_seed)
    without = cfg.replacement_mode == "without"
    employed_arr = (
        net.node_traits.get(cfg.employment_trait) if cfg.employment_trait else None
    )

    pool = np.arange(net.node_count)
    if cfg.seed_block is not None:
        pool = pool[net.blocks == cfg.seed_block]
        if len(pool) < cfg.seed_count:
            raise UnrealizableConfig("seed block smaller than seed count")
    seeds = rng.choice(pool, size=cfg.seed_count, replace=False)

    queue: deque[tuple[int, Optional[str]]] = deque((int(s), None) for s in seeds)
    committed: set[int] = set(int(s) for s in seeds)  # has a coupon or participated
    interviewed: set[int] = set()
    respondents: list[Respondent] = []
    node_of: dict[str, int] = {}
    coupon_counter = 0
    start_date = date(2008, 3, 1)

    while queue and len(respondents) < cfg.target_n:
        node, coupon_in = queue.popleft()
        order = len(respondents) + 1
        rid = f"R{order:04d}"
        node_of[rid] = node
        nbrs = net.neighbors[node]
        degree = int(net.degrees[node])

        known = sum(1 for v in nbrs if int(v) in interviewed)
        if coupon_in is not None:
            known = max(known - 1, 0)  # recruiter does not count
        interviewed.add(node)

        probs = cfg.recruit_probs
        if (
            cfg.differential_trait is not None
            and cfg.recruit_probs_if_trait is not None
            and bool(net.node_traits[cfg.differential_trait][node])
        ):
            probs = cfg.recruit_probs_if_trait
        k = int(rng.choice(cfg.coupon_allotment + 1, p=np.array(probs) / sum(probs)))

        failed = refused = 0
        distributed: list[tuple[str, int]] = []
        for nbr in rng.permutation(nbrs):
            if len(distributed) == k:
                break
            nbr = int(nbr)
            if without:
                if nbr in interviewed:
                    failed += 1
                    continue
                if nbr in committed:
                    continue  # pending coupon holder; not a failed attempt
            if rng.random() < cfg.refusal_prob:
                refused += 1
                continue
            coupon_counter += 1
            cid = f"C{coupon_counter:05d}"
            distributed.append((cid, nbr))
            if without:
                committed.add(nbr)
            if rng.random() >= cfg.nonreturn_prob:
                queue.append((nbr, cid))

        traits: dict[str, Optional[str]] = {}
        for name, values in net.node_traits.items():
            if cfg.trait_missing_prob > 0 and rng.random() < cfg.trait_missing_prob:
                traits[name] = None
            else:
                traits[name] = "yes" if values[node] else "no"

        reach_week = int(rng.binomial(degree, 0.92))
        reach_day = int(rng.binomial(reach_week, 0.65))
        degree_report = DegreeReport(
            q_know=degree,
            q_province=degree,
            q_age=degree,
            q_seen_week=degree,
            q_reach_day=reach_day,
            q_reach_week=reach_week,
        )

        followup = None
        if rng.random() < cfg.followup_prob:
            followup = _synthesize_followup(
                rng, cfg, node, degree, known, failed, refused, distributed,
                employed_arr, net,
            )

        respondents.append(
            Respondent(
                id=rid,
                coupon_in=coupon_in,
                coupons_out=frozenset(cid for cid, _ in distributed),
                interview_order=order,
                interview_date=start_date
                + timedelta(days=(order - 1) // cfg.interviews_per_day),
                degree=degree_report,
                traits=traits,
                motivation=str(
                    rng.choice(
                        MOTIVATION_CATEGORIES,
                        p=np.array(cfg.motivation_probs) / sum(cfg.motivation_probs),
                    )
                ),
                employed=bool(employed_arr[node]) if employed_arr is not None else None,
                q_recv_week=int(rng.binomial(degree, 0.9)),
                followup=followup,
            )
        )

    extinct = len(respondents) < cfg.target_n
    specs = tuple(TraitSpec(name, "binary", "yes") for name in sorted(net.node_traits))
    ds = StudyDataset(
        site_label=cfg.site_label,
        respondents=tuple(respondents),
        trait_specs=specs,
        target_sample_size=cfg.target_n,
        coupon_allotment=cfg.coupon_allotment,
    )
    prevalences = {name: true_prevalence(net, name) for name in net.node_traits}
    return SimulationResult(
        dataset=ds, node_of=node_of, extinct=extinct, true_prevalences=prevalences
    )


_DAYS_PROBS = np.array([0.5, 0.2, 0.1, 0.07, 0.05, 0.03, 0.02, 0.03])


def _synthesize_followup(
    rng: np.random.Generator,
    cfg: SimConfig,
    node: int,
    degree: int,
    known: int,
    failed: int,
    refused: int,
    distributed: list[tuple[str, int]],
    employed_arr: Optional[np.ndarray],
    net: SyntheticNetwork,
) -> FollowUpRecord:
    if cfg.retest_sd > 0:
        seen = max(1, int(round(degree * float(np.exp(rng.normal(0.0, cfg.retest_sd))))))
    else:
        seen = degree
    base = max(seen, degree)
    retest = DegreeReport(q_know=base, q_province=base, q_age=base, q_seen_week=seen)

    reasons = tuple(
        str(c)
        for c in rng.choice(
            REFUSAL_REASON_CATEGORIES,
            size=min(refused, 5),
            p=np.array(DEFAULT_REFUSAL_PROBS) / sum(DEFAULT_REFUSAL_PROBS),
        )
    )
    coupons = []
    for cid, recipient in distributed:
        coupons.append(
            CouponOutcome(
                coupon_id=cid,
                days_to_distribute=int(rng.choice(len(_DAYS_PROBS), p=_DAYS_PROBS)),
                reciprocation_answer=bool(rng.random() < cfg.recip_prob),
                recipient_employed=(
                    bool(employed_arr[recipient]) if employed_arr is not None else None
                ),
            )
        )
    n_contacts_employed = (
        int(employed_arr[net.neighbors[node]].sum()) if employed_arr is not None else None
    )
    return FollowUpRecord(
        degree_retest=retest,
        n_failed_attempts=failed,
        n_known_participants=known,
        coupons=tuple(coupons),
        n_coupons_distributed=len(distributed),
        n_refusals=refused,
        refusal_reasons=reasons,
        n_contacts_employed=n_contacts_employed,
    )
