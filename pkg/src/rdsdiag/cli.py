"""Command-line interface.

One subcommand per diagnostic family plus `ingest`, `simulate` and the
all-in-one `report`.  Every command prints a JSON document to stdout;
commands that produce figures also write them under ``--out-dir``.  Errors
exit with a stable code per family: 2 ingest, 3 configuration, 4 missing
data, 5 other toolkit errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from .dataset import IngestOptions, load_dataset, save_dataset, validate_dataset
from .errors import RdsError, UnrealizableConfig
from .forest import build_forest
from .report import ALL_SECTIONS, PipelineConfig, ReportBundle, run_pipeline
from .sim import (
    NetworkConfig,
    SimConfig,
    TraitRule,
    generate_network,
    simulate_rds,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdsdiag",
        description="Diagnostics for respondent-driven sampling studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def dataset_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--respondents", required=True, type=Path)
        p.add_argument("--traits", required=True, type=Path)
        p.add_argument("--followup", type=Path, default=None)
        strictness = p.add_mutually_exclusive_group()
        strictness.add_argument("--strict", dest="strict", action="store_true",
                                default=True)
        strictness.add_argument("--lenient", dest="strict", action="store_false")
        p.add_argument("--degree-question", default="q_seen_week")
        p.add_argument("--trait", action="append", default=None,
                       help="restrict analysis to this trait (repeatable)")
        p.add_argument("--config", type=Path, default=None,
                       help="key=value file whose entries override flags")

    def analysis_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out-dir", type=Path, default=Path("rdsdiag-out"))
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tau", type=int, default=50)
        p.add_argument("--epsilon", type=float, default=0.02)
        p.add_argument("--replicates", type=int, default=10_000)
        p.add_argument("--threshold", type=float, default=0.90)
        p.add_argument("--population-size", action="append", type=int,
                       default=None, help="SS scenario population (repeatable)")

    for name, help_text in (
        ("ingest", "load, validate and summarize the input files"),
        ("estimate", "inverse-degree and successive-sampling estimates"),
        ("converge", "cumulative-estimate convergence verdicts"),
        ("bottleneck", "per-tree dispersion permutation tests"),
        ("behavior", "respondent behavior diagnostics"),
        ("degree", "degree measurement diagnostics"),
        ("finitepop", "with-replacement indicator summary"),
        ("report", "run every diagnostic and write the full bundle"),
    ):
        p = sub.add_parser(name, help=help_text)
        dataset_flags(p)
        if name != "ingest":
            analysis_flags(p)

    p = sub.add_parser("simulate", help="generate a synthetic study dataset")
    p.add_argument("--scenario", required=True, type=Path,
                   help="key=value scenario description")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario rng_seed")
    p.add_argument("--config", type=Path, default=None)
    return parser


def _apply_config_file(args: argparse.Namespace) -> None:
    """Key=value config entries override the parsed flags."""
    path = getattr(args, "config", None)
    if path is None:
        return
    for key, raw in _read_kv(path).items():
        dest = key.replace("-", "_")
        if dest == "population_size":
            args.population_size = [int(v) for v in raw.split(",")]
            continue
        if not hasattr(args, dest):
            raise UnrealizableConfig(f"unknown config key {key!r}")
        current = getattr(args, dest)
        if isinstance(current, bool):
            setattr(args, dest, raw.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, dest, int(raw))
        elif isinstance(current, float):
            setattr(args, dest, float(raw))
        elif isinstance(current, Path) or dest in ("respondents", "traits",
                                                   "followup", "out_dir"):
            setattr(args, dest, Path(raw))
        else:
            setattr(args, dest, raw)


def _read_kv(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UnrealizableConfig(f"bad config line {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _pipeline_config(args: argparse.Namespace, sections: Sequence[str]) -> PipelineConfig:
    return PipelineConfig(
        out_dir=args.out_dir,
        respondents_file=args.respondents,
        traits_file=args.traits,
        followup_file=args.followup,
        traits=tuple(args.trait) if args.trait else None,
        degree_question=args.degree_question,
        tau=args.tau,
        epsilon=args.epsilon,
        replicates=args.replicates,
        threshold=args.threshold,
        population_sizes=tuple(args.population_size or ()),
        rng_seed=args.seed,
        strict=args.strict,
        sections=tuple(sections),
    )


def _emit(payload: Any) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n")


def _cmd_ingest(args: argparse.Namespace) -> int:
    ds = load_dataset(
        args.respondents, args.traits, args.followup, IngestOptions(strict=args.strict)
    )
    report = validate_dataset(ds)
    forest = build_forest(report.dataset)
    waves = [forest.wave[r.id] for r in report.dataset.respondents]
    _emit(
        {
            "site": ds.site_label,
            "n": ds.n,
            "n_seeds": len(ds.seeds()),
            "n_trees": len(forest.roots),
            "max_wave": max(waves) if waves else 0,
            "funnel_violations": report.funnel_violations,
            "truncations_applied": report.truncations_applied,
            "inconsistent_reach": report.inconsistent_reach,
            "missing_traits": dict(sorted(report.missing_traits.items())),
            "warnings": report.warnings,
        }
    )
    return 0


_SECTION_COMMANDS = {
    "estimate": ("estimate",),
    "converge": ("converge",),
    "bottleneck": ("bottleneck",),
    "behavior": ("behavior",),
    "degree": ("degree",),
    "finitepop": ("finitepop",),
    "report": ALL_SECTIONS,
}


def _cmd_sections(args: argparse.Namespace) -> int:
    sections = _SECTION_COMMANDS[args.command]
    bundle = run_pipeline(_pipeline_config(args, sections))
    if args.command == "report":
        _emit(
            {
                "out_dir": str(args.out_dir),
                "dataset": bundle.dataset_summary,
                "files": sorted(bundle.manifest),
            }
        )
    else:
        _emit(bundle.sections.get(sections[0], {}))
    return 0


def _parse_trait_rule(raw: str) -> TraitRule:
    kind, _, value = raw.partition(":")
    if kind == "block":
        return TraitRule(kind="block", block=int(value or 0))
    if kind == "bernoulli":
        return TraitRule(kind="bernoulli", p=float(value or 0.5))
    if kind == "top_degree":
        return TraitRule(kind="top_degree", fraction=float(value or 0.3))
    raise UnrealizableConfig(f"unknown trait rule {raw!r}")


def load_scenario(path: Path) -> tuple[NetworkConfig, SimConfig]:
    """Parse a key=value scenario file into network and process configs."""
    kv = _read_kv(path)
    traits = {}
    net_kv: dict[str, str] = {}
    sim_kv: dict[str, str] = {}
    for key, value in kv.items():
        if key.startswith("trait."):
            traits[key[len("trait."):]] = _parse_trait_rule(value)
        elif key in ("blocks", "within_p", "between_p"):
            net_kv[key] = value
        else:
            sim_kv[key] = value
    if "blocks" not in net_kv or "target_n" not in sim_kv:
        raise UnrealizableConfig("scenario needs at least blocks= and target_n=")

    net_cfg = NetworkConfig(
        block_sizes=tuple(int(b) for b in net_kv["blocks"].split(",")),
        within_block_edge_prob=float(net_kv.get("within_p", 0.05)),
        between_block_edge_prob=float(net_kv.get("between_p", 0.01)),
        traits=traits,
    )

    def probs(raw: str) -> tuple[float, ...]:
        return tuple(float(v) for v in raw.split(","))

    sim_cfg = SimConfig(
        target_n=int(sim_kv["target_n"]),
        seed_count=int(sim_kv.get("seed_count", 6)),
        coupon_allotment=int(sim_kv.get("allotment", 3)),
        replacement_mode=sim_kv.get("mode", "without"),
        recruit_probs=probs(sim_kv.get("recruit_probs", "0.1,0.2,0.3,0.4")),
        differential_trait=sim_kv.get("differential_trait"),
        recruit_probs_if_trait=(
            probs(sim_kv["recruit_probs_if_trait"])
            if "recruit_probs_if_trait" in sim_kv
            else None
        ),
        refusal_prob=float(sim_kv.get("refusal_prob", 0.05)),
        nonreturn_prob=float(sim_kv.get("nonreturn_prob", 0.1)),
        seed_block=(int(sim_kv["seed_block"]) if "seed_block" in sim_kv else None),
        followup_prob=float(sim_kv.get("followup_prob", 0.43)),
        retest_sd=float(sim_kv.get("retest_sd", 0.0)),
        recip_prob=float(sim_kv.get("recip_prob", 0.88)),
        trait_missing_prob=float(sim_kv.get("trait_missing_prob", 0.0)),
        employment_trait=sim_kv.get("employment_trait", "employed") or None,
        site_label=sim_kv.get("site", "sim"),
        rng_seed=int(sim_kv.get("rng_seed", 0)),
    )
    return net_cfg, sim_cfg


def _cmd_simulate(args: argparse.Namespace) -> int:
    net_cfg, sim_cfg = load_scenario(args.scenario)
    if args.seed is not None:
        sim_cfg = dataclasses.replace(sim_cfg, rng_seed=args.seed)
    net = generate_network(net_cfg, rng_seed=sim_cfg.rng_seed)
    result = simulate_rds(net, sim_cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(
        result.dataset,
        out / "respondents.csv",
        out / "traits.csv",
        out / "followup.csv",
    )
    _emit(
        {
            "out_dir": str(out),
            "n": result.dataset.n,
            "extinct": result.extinct,
            "true_prevalences": {
                k: float(f"{v:.6g}") for k, v in sorted(result.true_prevalences.items())
            },
            "n_connect_edges": net.n_connect_edges,
        }
    )
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args)
        if args.command == "ingest":
            return _cmd_ingest(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_sections(args)
    except RdsError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
