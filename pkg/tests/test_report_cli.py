import json
import xml.etree.ElementTree as ET

import pytest

from rdsdiag.cli import main
from rdsdiag.report import ALL_SECTIONS, PipelineConfig, run_pipeline
from rdsdiag.sim import NetworkConfig, SimConfig, TraitRule, generate_network, simulate_rds


@pytest.fixture(scope="module")
def sim_dataset():
    net = generate_network(
        NetworkConfig(
            block_sizes=(120, 120),
            within_block_edge_prob=0.06,
            between_block_edge_prob=0.004,
            traits={
                "hiv": TraitRule("block", block=0),
                "employed": TraitRule("bernoulli", p=0.6),
            },
        ),
        rng_seed=3,
    )
    return simulate_rds(
        net, SimConfig(target_n=100, seed_count=6, followup_prob=0.7, rng_seed=3)
    ).dataset


def _cfg(out_dir, ds, **kw):
    base = dict(out_dir=out_dir, dataset=ds, replicates=300, rng_seed=1)
    base.update(kw)
    return PipelineConfig(**base)


def test_pipeline_byte_determinism(sim_dataset, tmp_path):
    run_pipeline(_cfg(tmp_path / "a", sim_dataset))
    run_pipeline(_cfg(tmp_path / "b", sim_dataset))
    files_a = sorted(p.name for p in (tmp_path / "a").iterdir())
    files_b = sorted(p.name for p in (tmp_path / "b").iterdir())
    assert files_a == files_b
    for name in files_a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_pipeline_manifest_covers_outputs(sim_dataset, tmp_path):
    bundle = run_pipeline(_cfg(tmp_path / "out", sim_dataset))
    on_disk = {p.name for p in (tmp_path / "out").iterdir()}
    assert set(bundle.manifest) == on_disk - {"bundle.json"}
    written = json.loads((tmp_path / "out" / "bundle.json").read_text())
    assert written["manifest"] == bundle.manifest
    assert written["schema_version"] == bundle.schema_version


def test_pipeline_sections_subset(sim_dataset, tmp_path):
    bundle = run_pipeline(
        _cfg(tmp_path / "out", sim_dataset, sections=("finitepop",))
    )
    assert set(bundle.sections) == {"finitepop"}
    on_disk = {p.name for p in (tmp_path / "out").iterdir()}
    assert "convergence_flags.csv" not in on_disk
    assert "bundle.json" in on_disk


def test_pipeline_empty_sections(sim_dataset, tmp_path):
    bundle = run_pipeline(_cfg(tmp_path / "out", sim_dataset, sections=()))
    assert bundle.sections == {}


def test_flag_grid_matches_bundle(sim_dataset, tmp_path):
    bundle = run_pipeline(_cfg(tmp_path / "out", sim_dataset))
    svg = (tmp_path / "out" / "flag_grid.svg").read_text()
    root = ET.fromstring(svg)
    ns = "{http://www.w3.org/2000/svg}"
    red_cells = sum(
        1 for r in root.findall(f"{ns}rect") if r.get("fill") == "#c43c39"
    )
    expected = 0
    for section in ("converge", "bottleneck"):
        per_trait = bundle.sections[section].get("per_trait", {})
        for entry in per_trait.values():
            if isinstance(entry, dict) and entry.get("flagged") is True:
                expected += 1
    assert red_cells == expected


def test_pipeline_six_digit_floats(sim_dataset, tmp_path):
    run_pipeline(_cfg(tmp_path / "out", sim_dataset))
    payload = (tmp_path / "out" / "bundle.json").read_text()

    def check(node):
        if isinstance(node, dict):
            for v in node.values():
                check(v)
        elif isinstance(node, list):
            for v in node:
                check(v)
        elif isinstance(node, float):
            assert float(f"{node:.6g}") == node

    check(json.loads(payload))


def test_pipeline_ss_scenarios(sim_dataset, tmp_path):
    bundle = run_pipeline(
        _cfg(
            tmp_path / "out",
            sim_dataset,
            sections=("estimate",),
            population_sizes=(500,),
            ss_replications=100,
        )
    )
    entry = bundle.sections["estimate"]["per_trait"]["hiv"]
    assert "vh" in entry
    assert entry["ss"][0]["population_size"] == 500
    csv_text = (tmp_path / "out" / "estimates.csv").read_text()
    assert csv_text.splitlines()[0] == "trait,population_size,vh,ss,difference,flagged"


# -- CLI ---------------------------------------------------------------------


SCENARIO = """
blocks=100,100
within_p=0.06
between_p=0.005
trait.hiv=block:0
trait.employed=bernoulli:0.6
target_n=80
seed_count=5
followup_prob=0.7
rng_seed=4
site=cli-test
"""


@pytest.fixture(scope="module")
def cli_study(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    scenario = root / "scenario.txt"
    scenario.write_text(SCENARIO)
    out = root / "study"
    assert main(["simulate", "--scenario", str(scenario), "--out-dir", str(out)]) == 0
    return out


def _dataset_args(study):
    return [
        "--respondents", str(study / "respondents.csv"),
        "--traits", str(study / "traits.csv"),
        "--followup", str(study / "followup.csv"),
    ]


def test_cli_simulate_output(cli_study, capsys, tmp_path):
    scenario = cli_study.parent / "scenario.txt"
    assert main(["simulate", "--scenario", str(scenario),
                 "--out-dir", str(tmp_path / "again")]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["n"] == 80
    assert payload["true_prevalences"]["hiv"] == 0.5
    assert (tmp_path / "again" / "respondents.csv").exists()


def test_cli_ingest(cli_study, capsys):
    assert main(["ingest", *_dataset_args(cli_study)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["n"] == 80
    assert payload["n_seeds"] >= 1
    assert "hiv" in payload["missing_traits"] or payload["missing_traits"] == {}


def test_cli_converge(cli_study, capsys, tmp_path):
    assert main([
        "converge", *_dataset_args(cli_study), "--out-dir", str(tmp_path / "o"),
        "--tau", "30", "--epsilon", "0.05",
    ]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["tau"] == 30
    assert "hiv" in payload["per_trait"]


def test_cli_estimate_trait_filter(cli_study, capsys, tmp_path):
    assert main([
        "estimate", *_dataset_args(cli_study), "--out-dir", str(tmp_path / "o"),
        "--trait", "hiv",
    ]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert list(payload["per_trait"]) == ["hiv"]
    assert 0.0 <= payload["per_trait"]["hiv"]["vh"] <= 1.0


def test_cli_report(cli_study, capsys, tmp_path):
    out_dir = tmp_path / "report"
    assert main([
        "report", *_dataset_args(cli_study), "--out-dir", str(out_dir),
        "--replicates", "200",
    ]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["out_dir"] == str(out_dir)
    assert "bundle.json" not in payload["files"]  # manifest excludes itself
    bundle = json.loads((out_dir / "bundle.json").read_text())
    assert set(bundle["sections"]) == set(ALL_SECTIONS)


def test_cli_missing_input_exit_code(tmp_path, capsys):
    code = main([
        "ingest",
        "--respondents", str(tmp_path / "nope.csv"),
        "--traits", str(tmp_path / "nope2.csv"),
    ])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_cli_config_file_overrides(cli_study, capsys, tmp_path):
    config = tmp_path / "cfg.txt"
    config.write_text("tau=25\nepsilon=0.1\n")
    assert main([
        "converge", *_dataset_args(cli_study), "--out-dir", str(tmp_path / "o"),
        "--config", str(config), "--tau", "50",
    ]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["tau"] == 25
    assert payload["epsilon"] == 0.1


def test_cli_bad_config_key(cli_study, capsys, tmp_path):
    config = tmp_path / "cfg.txt"
    config.write_text("nonsense=1\n")
    code = main([
        "converge", *_dataset_args(cli_study), "--out-dir", str(tmp_path / "o"),
        "--config", str(config),
    ])
    assert code == 3
