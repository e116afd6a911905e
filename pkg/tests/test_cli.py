import json
import subprocess
import sys
from pathlib import Path

import pytest

from dqip.cli import main, run_experiment, validate_config
from dqip.errors import ConfigError

GOLDEN = Path(__file__).parent / "golden"


def run_config(config: dict, tmp_path: Path, name: str = "exp"):
    return run_experiment(config, tmp_path / name)


# ---------------------------------------------------------------------------
# Config validation
# ---------------------------------------------------------------------------


def test_schema_rejects_unknown_experiment():
    with pytest.raises(ConfigError) as err:
        validate_config({"experiment": "teleport", "seed": 1})
    assert "experiment" in str(err.value)


def test_schema_rejects_bad_params():
    with pytest.raises(ConfigError) as err:
        validate_config({"experiment": "ghz", "seed": 1, "params": {"nodes": 99, "copies": 1}})
    assert err.value.fields


def test_defaults_resolved():
    resolved = validate_config({"experiment": "ghz", "seed": 1, "params": {"nodes": 3, "copies": 1}})
    assert resolved["mode"] == "exact"
    assert resolved["params"]["epsilon"] == 0.25


def test_schema_in_docs_matches_code():
    from dqip.config_schema import CONFIG_SCHEMA, PARAM_SCHEMAS

    doc = json.loads((Path(__file__).parent.parent / "docs" / "config.schema.json").read_text())
    assert doc["config"] == CONFIG_SCHEMA
    assert doc["params"] == PARAM_SCHEMAS


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def test_ghz_experiment_report(tmp_path):
    config = {"experiment": "ghz", "seed": 7, "params": {"nodes": 3, "copies": 1}}
    json_path, csv_path = run_config(config, tmp_path)
    doc = json.loads(json_path.read_text())
    assert doc["results"]["run"]["acceptance_probability"] >= 1 - 1e-9
    assert doc["results"]["output_ghz_fidelity"] >= 1 - 1e-9
    assert csv_path.read_text().startswith("experiment,metric,value")


def test_dqct_equal_states_experiment(tmp_path):
    config = {"experiment": "dqct", "seed": 3, "params": {"nodes": 2, "states": "equal"}}
    json_path, _ = run_config(config, tmp_path)
    doc = json.loads(json_path.read_text())
    assert doc["results"]["run"]["acceptance_probability"] >= 1 - 1e-9


def test_determinism_byte_identical(tmp_path):
    config = {
        "experiment": "dqct",
        "seed": 11,
        "params": {"nodes": 2, "states": "random"},
        "mode": "sampled",
        "trials": 200,
    }
    a_json, a_csv = run_config(dict(config), tmp_path, "a")
    b_json, b_csv = run_config(dict(config), tmp_path, "b")
    assert a_json.read_bytes() == b_json.read_bytes()
    assert a_csv.read_bytes() == b_csv.read_bytes()


def test_compile_pipeline_experiment(tmp_path):
    config = {
        "experiment": "compile-pipeline",
        "seed": 5,
        "params": {
            "protocol": "coin-parity-echo-private",
            "instance": "yes",
            "pipeline": [{"transform": "pad", "target": 5}, {"transform": "halve-shared"}],
        },
    }
    json_path, _ = run_config(config, tmp_path)
    doc = json.loads(json_path.read_text())
    stages = doc["results"]["stages"]
    assert [s["turns"] for s in stages] == [3, 5, 3]
    assert abs(stages[-1]["honest_acceptance"] - 1.0) <= 1e-9


def test_dam_brute_force_experiment(tmp_path):
    config = {"experiment": "dam-brute-force", "seed": 0, "params": {"protocol": "coin-guess"}}
    json_path, _ = run_config(config, tmp_path)
    doc = json.loads(json_path.read_text())
    assert doc["results"]["completeness_exact"] == "1/4"
    assert doc["results"]["soundness"] == 0.0


def test_qcore_properties_experiment(tmp_path):
    config = {"experiment": "qcore-properties", "seed": 1, "params": {"samples": 50}}
    json_path, _ = run_config(config, tmp_path)
    doc = json.loads(json_path.read_text())
    assert doc["results"]["worst_triple_inequality_slack"] <= 1e-8


def test_csv_is_projection_of_json(tmp_path):
    config = {"experiment": "ghz", "seed": 7, "params": {"nodes": 3, "copies": 1}}
    json_path, csv_path = run_config(config, tmp_path)
    doc = json.loads(json_path.read_text())

    def leaves(value, path=""):
        if isinstance(value, bool) or isinstance(value, (int, float)):
            yield path, float(value)
        elif isinstance(value, dict):
            for key in value:
                yield from leaves(value[key], f"{path}.{key}" if path else key)
        elif isinstance(value, list):
            if value and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
                for i, v in enumerate(value):
                    yield f"{path}[{i}]", float(v)

    json_scalars = dict(leaves(doc["results"]))
    rows = [line.split(",") for line in csv_path.read_text().splitlines()[1:]]
    csv_scalars = {metric: float(value) for _, metric, value in rows}
    assert csv_scalars == {k: v for k, v in json_scalars.items() if k in csv_scalars}
    assert set(csv_scalars) == set(json_scalars)


# ---------------------------------------------------------------------------
# Golden files
# ---------------------------------------------------------------------------


def test_report_golden_file(tmp_path):
    config = {"experiment": "dam-brute-force", "seed": 0, "params": {"protocol": "bipartite-pls"}}
    json_path, _ = run_config(config, tmp_path)
    golden = GOLDEN / "dam-brute-force-report.json"
    assert json_path.read_text() == golden.read_text()


def test_protocol_spec_golden_file():
    from dqip.dam import catalog_entry
    from dqip.protocol import spec_to_json
    from dqip.transforms import dam_to_dqip

    entry = catalog_entry("bipartite-pls")
    compiled = dam_to_dqip(entry.protocol, entry.yes_instance)
    doc = json.dumps(spec_to_json(compiled.spec), sort_keys=True, indent=2) + "\n"
    golden = GOLDEN / "bipartite-spec.json"
    assert doc == golden.read_text()


# ---------------------------------------------------------------------------
# Command-line entry points
# ---------------------------------------------------------------------------


def test_cli_run_and_env_override(tmp_path, monkeypatch, capsys):
    config_path = tmp_path / "cfg.json"
    config_path.write_text(json.dumps({"experiment": "ghz", "seed": 1, "params": {"nodes": 3, "copies": 1}}))
    monkeypatch.setenv("DQIP_OUTPUT_DIR", str(tmp_path / "out"))
    assert main(["run", str(config_path)]) == 0
    assert (tmp_path / "out" / "cfg.json").exists()


def test_cli_config_error_is_machine_readable(tmp_path, capsys):
    config_path = tmp_path / "bad.json"
    config_path.write_text(json.dumps({"experiment": "ghz", "seed": 1, "params": {"copies": 1}}))
    code = main(["run", str(config_path), "--output-dir", str(tmp_path)])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config"


def test_cli_listings(capsys):
    assert main(["list-dam"]) == 0
    out = capsys.readouterr().out
    assert "bipartite-pls" in out and "c=1" in out
    assert main(["list-protocols"]) == 0
    out = capsys.readouterr().out
    assert "ghz-verify" in out and "closeness" in out


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "dqip.cli", "list-dam"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "coin-guess" in proc.stdout
