"""Batch experiment runner.

Commands::

    dqip run <config.json> [--output-dir DIR]
    dqip verify-suite [--output-dir DIR]
    dqip list-protocols
    dqip list-dam

``run`` validates the config against the shipped JSON schema, executes the
named experiment and writes ``<output>.json`` plus a flat ``<output>.csv``
of scalar results.  All randomness is derived from the config seed, so a
config always produces byte-identical reports.  The output directory can be
overridden with the ``DQIP_OUTPUT_DIR`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import qcore
from .config_schema import CONFIG_SCHEMA, PARAM_SCHEMAS
from .dam import brute_force_value, catalog_entry, toy_protocols
from .dqct import build_pdqct, closeness_bound, input_trace_distance, make_instance, soundness_probe
from .errors import ConfigError, DqipError
from .ghz import GhzProtocolParams, all_zero_cheat, build_pghz, ghz_fidelity
from .network import build_network, path_graph
from .prover import OptimizerConfig, seesaw_optimize
from .protocol import execute_exact, execute_sampled
from .reporting import report_document, write_report
from .seeding import substream
from .transforms import (
    dam_to_dqip,
    halve_turns_private,
    halve_turns_shared,
    pad_to_turns,
    parallel_repeat,
    perfect_completeness,
    seven_to_five,
)

DEFAULT_PARAMS = {
    "ghz": {"copies": 1, "epsilon": 0.25, "delta": 0.5, "strategy": "honest", "prover_qubits": 0},
    "dqct": {"copies": 1, "epsilon": 0.25, "delta": 0.5, "probe": False, "prover_qubits": 2,
             "restarts": 5, "sweeps": 50},
    "compile-pipeline": {"optimize": False, "restarts": 4, "sweeps": 60},
    "optimize": {"restarts": 4, "sweeps": 60},
    "dam-brute-force": {},
    "qcore-properties": {"samples": 500},
}


def validate_config(config: dict) -> dict:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
        experiment = config["experiment"]
        params = dict(DEFAULT_PARAMS[experiment])
        params.update(config.get("params", {}))
        jsonschema.validate(params, PARAM_SCHEMAS[experiment])
    except jsonschema.ValidationError as err:
        field = "/".join(str(p) for p in err.absolute_path) or "(root)"
        raise ConfigError(f"config field {field}: {err.message}", fields=[field]) from err
    resolved = dict(config)
    resolved.setdefault("mode", "exact")
    resolved.setdefault("trials", 1000)
    resolved["params"] = params
    return resolved


# ---------------------------------------------------------------------------
# Experiment bodies
# ---------------------------------------------------------------------------


def _graph_from(params: dict, nodes_key: str = "nodes"):
    n = params[nodes_key]
    if "edges" in params:
        return build_network(n, [tuple(e) for e in params["edges"]])
    return path_graph(n)


def _run_or_sample(spec, strategy, config):
    if config["mode"] == "sampled":
        return execute_sampled(spec, strategy, trials=config["trials"], seed=config["seed"])
    return execute_exact(spec, strategy, collect_output=spec.output_registers is not None)


def _experiment_ghz(config: dict) -> dict:
    params = config["params"]
    ghz_params = GhzProtocolParams(
        copies=params["copies"],
        epsilon=params["epsilon"],
        delta=params["delta"],
        seed=config["seed"],
        prover_qubits=params["prover_qubits"],
    )
    compiled = build_pghz(_graph_from(params), ghz_params)
    strategy = compiled.honest
    if params["strategy"] == "all-zero":
        strategy = all_zero_cheat(compiled.spec, ghz_params)
    report = _run_or_sample(compiled.spec, strategy, config)
    results = {
        "run": report,
        "compile_report": compiled.report,
        "fidelity_target": 1 - params["epsilon"],
    }
    if report.output_state is not None:
        results["output_ghz_fidelity"] = ghz_fidelity(report.output_state)
    return results


def _experiment_dqct(config: dict) -> dict:
    params = config["params"]
    graph = _graph_from(params)
    qubits = tuple(params.get("qubits_per_node", [1] * graph.node_count))
    instance = make_instance(graph, qubits, params["states"], seed=config["seed"])
    ghz_params = GhzProtocolParams(
        copies=params["copies"],
        epsilon=params["epsilon"],
        delta=params["delta"],
        seed=config["seed"],
        prover_qubits=params["prover_qubits"],
    )
    compiled = build_pdqct(instance, ghz_params)
    report = _run_or_sample(compiled.spec, compiled.honest, config)
    acc = report.acceptance_probability
    results = {
        "run": report,
        "compile_report": compiled.report,
        "overlap_squared": instance.overlap_squared(),
        "input_trace_distance": input_trace_distance(instance),
        "distance_bound_at_honest": closeness_bound(min(acc, 1.0), params["epsilon"]),
    }
    if params["probe"]:
        probe = soundness_probe(
            instance,
            ghz_params,
            OptimizerConfig(restarts=params["restarts"], sweeps=params["sweeps"], seed=config["seed"]),
        )
        trace = probe.pop("trace")
        results["probe"] = probe
        results["probe"]["sweep_acceptance"] = trace.sweep_acceptance
    return results


def _pipeline_protocol(name: str):
    entry = catalog_entry(name)
    return entry


def _experiment_compile_pipeline(config: dict) -> dict:
    params = config["params"]
    entry = _pipeline_protocol(params["protocol"])
    instance = entry.yes_instance if params["instance"] == "yes" else entry.no_instance
    compiled = dam_to_dqip(entry.protocol, instance)
    c, s = float(entry.completeness), float(entry.soundness)
    stages = [
        {
            "transform": "dam_to_dqip",
            "turns": compiled.spec.num_turns,
            "honest_acceptance": execute_exact(compiled.spec, compiled.honest).acceptance_probability,
            "report": compiled.report,
        }
    ]
    for stage in params["pipeline"]:
        kind = stage["transform"]
        if kind == "pad":
            compiled = pad_to_turns(compiled.spec, compiled.honest, stage["target"])
        elif kind == "halve-shared":
            compiled = halve_turns_shared(compiled.spec, compiled.honest, completeness=c, soundness=s)
        elif kind == "halve-private":
            compiled = halve_turns_private(compiled.spec, compiled.honest, completeness=c, soundness=s)
        elif kind == "seven-to-five":
            compiled = seven_to_five(compiled.spec, compiled.honest, completeness=c, soundness=s)
        elif kind == "perfect-completeness":
            compiled = perfect_completeness(compiled.spec, compiled.honest)
        elif kind == "parallel-repeat":
            compiled = parallel_repeat(
                compiled.spec, compiled.honest, stage["t"], stage.get("repeat_mode", "AND")
            )
        stages.append(
            {
                "transform": kind,
                "turns": compiled.spec.num_turns,
                "honest_acceptance": execute_exact(compiled.spec, compiled.honest).acceptance_probability,
                "report": compiled.report,
            }
        )
    results = {"classical_completeness": c, "classical_soundness": s, "stages": stages}
    if params["optimize"]:
        trace = seesaw_optimize(
            compiled.spec,
            OptimizerConfig(restarts=params["restarts"], sweeps=params["sweeps"], seed=config["seed"]),
            honest=compiled.honest,
        )
        results["seesaw_best"] = trace.best_acceptance
        results["seesaw_sweeps"] = trace.sweep_acceptance
    return results


def _experiment_optimize(config: dict) -> dict:
    params = config["params"]
    entry = _pipeline_protocol(params["protocol"])
    instance = entry.yes_instance if params["instance"] == "yes" else entry.no_instance
    compiled = dam_to_dqip(entry.protocol, instance)
    trace = seesaw_optimize(
        compiled.spec,
        OptimizerConfig(restarts=params["restarts"], sweeps=params["sweeps"], seed=config["seed"]),
        honest=compiled.honest,
    )
    return {
        "best_acceptance": trace.best_acceptance,
        "restarts": trace.restarts,
        "sweep_acceptance": trace.sweep_acceptance,
        "classical_value": float(
            entry.completeness if params["instance"] == "yes" else entry.soundness
        ),
    }


def _experiment_dam(config: dict) -> dict:
    entry = catalog_entry(config["params"]["protocol"])
    yes = brute_force_value(entry.protocol, entry.yes_instance)
    no = brute_force_value(entry.protocol, entry.no_instance)
    return {
        "completeness": float(yes.optimal_acceptance),
        "completeness_exact": str(yes.optimal_acceptance),
        "soundness": float(no.optimal_acceptance),
        "soundness_exact": str(no.optimal_acceptance),
        "enumerated": yes.enumerated + no.enumerated,
    }


def _experiment_qcore(config: dict) -> dict:
    samples = config["params"]["samples"]
    rng = substream(config["seed"], "cli.qcore-properties")
    worst_fvdg_lower = worst_fvdg_upper = worst_triple = -1.0
    for _ in range(samples):
        n = int(rng.integers(1, 4))
        mats = []
        for _ in range(3):
            terms = int(rng.integers(1, 5))
            weights = rng.dirichlet(np.ones(terms))
            dim = 2**n
            mat = np.zeros((dim, dim), dtype=complex)
            for w in weights:
                v = qcore.haar_state(n, rng).amplitudes
                mat += w * np.outer(v, v.conj())
            mats.append(qcore.DensityOperator(n, mat))
        rho, sigma, xi = mats
        f = qcore.fidelity(rho, sigma)
        d = qcore.trace_distance(rho, sigma)
        worst_fvdg_lower = max(worst_fvdg_lower, (1 - f) - d)
        worst_fvdg_upper = max(worst_fvdg_upper, d - float(np.sqrt(max(0.0, 1 - f * f))))
        worst_triple = max(
            worst_triple,
            qcore.fidelity(rho, sigma) ** 2 + qcore.fidelity(xi, sigma) ** 2 - 1 - qcore.fidelity(rho, xi),
        )
    return {
        "samples": samples,
        "worst_fvdg_lower_slack": worst_fvdg_lower,
        "worst_fvdg_upper_slack": worst_fvdg_upper,
        "worst_triple_inequality_slack": worst_triple,
        "tolerance": 1e-8,
    }


EXPERIMENTS = {
    "ghz": _experiment_ghz,
    "dqct": _experiment_dqct,
    "compile-pipeline": _experiment_compile_pipeline,
    "optimize": _experiment_optimize,
    "dam-brute-force": _experiment_dam,
    "qcore-properties": _experiment_qcore,
}


def run_experiment(config: dict, stem: Path) -> tuple[Path, Path]:
    """Validate, execute and write a report; returns (json path, csv path)."""
    resolved = validate_config(config)
    results = EXPERIMENTS[resolved["experiment"]](resolved)
    doc = report_document(resolved["experiment"], resolved, results)
    return write_report(doc, stem)


# ---------------------------------------------------------------------------
# Command-line interface
# ---------------------------------------------------------------------------


def _output_stem(config: dict, config_path: Path, output_dir: str | None) -> Path:
    base = config.get("output") or config_path.stem
    directory = output_dir or os.environ.get("DQIP_OUTPUT_DIR") or "."
    return Path(directory) / base


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dqip", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment config")
    run_p.add_argument("config", type=Path)
    run_p.add_argument("--output-dir", default=None)

    verify_p = sub.add_parser("verify-suite", help="run the acceptance-criteria battery")
    verify_p.add_argument("--output-dir", default=None)

    sub.add_parser("list-protocols", help="list named protocol constructions")
    sub.add_parser("list-dam", help="list the classical protocol catalog")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = json.loads(args.config.read_text())
            stem = _output_stem(config, args.config, args.output_dir)
            json_path, csv_path = run_experiment(config, stem)
            print(f"wrote {json_path} and {csv_path}")
            return 0
        if args.command == "verify-suite":
            from .acceptance import results_document, run_all

            results, total = run_all(printer=print)
            directory = args.output_dir or os.environ.get("DQIP_OUTPUT_DIR")
            if directory:
                doc = results_document(results, total)
                out = Path(directory) / "verify-suite.json"
                out.parent.mkdir(parents=True, exist_ok=True)
                out.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
                print(f"wrote {out}")
            return 0 if all(r.passed for r in results) else 1
        if args.command == "list-protocols":
            print("ghz-verify          5-turn GHZ verification (experiment: ghz)")
            print("closeness           5-turn distributed closeness test (experiment: dqct)")
            for entry in toy_protocols():
                print(f"dqip[{entry.name}]".ljust(36) + "compiled classical protocol (compile-pipeline)")
            return 0
        if args.command == "list-dam":
            for entry in toy_protocols():
                print(
                    f"{entry.name:<28} turns={entry.protocol.turns} "
                    f"c={entry.completeness} s={entry.soundness}"
                )
            return 0
    except ConfigError as err:
        json.dump({"error": "config", "message": str(err), "fields": err.fields}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except DqipError as err:
        json.dump({"error": type(err).__name__, "message": str(err)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
