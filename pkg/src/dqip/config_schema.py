"""JSON schema for experiment configurations (also shipped in docs/)."""

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "dqip experiment configuration",
    "type": "object",
    "required": ["experiment", "seed"],
    "additionalProperties": False,
    "properties": {
        "experiment": {
            "enum": [
                "ghz",
                "dqct",
                "compile-pipeline",
                "optimize",
                "dam-brute-force",
                "qcore-properties",
            ]
        },
        "seed": {"type": "integer", "minimum": 0},
        "mode": {"enum": ["exact", "sampled"], "default": "exact"},
        "trials": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
        "params": {"type": "object"},
    },
}

PARAM_SCHEMAS = {
    "ghz": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "nodes": {"type": "integer", "minimum": 2, "maximum": 5},
            "copies": {"type": "integer", "minimum": 1, "maximum": 3},
            "epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "edges": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
            "strategy": {"enum": ["honest", "all-zero"]},
            "prover_qubits": {"type": "integer", "minimum": 0, "maximum": 4},
        },
        "required": ["nodes", "copies"],
    },
    "dqct": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "nodes": {"type": "integer", "minimum": 2, "maximum": 3},
            "qubits_per_node": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            "states": {"enum": ["equal", "orthogonal", "random"]},
            "copies": {"type": "integer", "minimum": 1, "maximum": 2},
            "epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "probe": {"type": "boolean"},
            "prover_qubits": {"type": "integer", "minimum": 0, "maximum": 4},
            "restarts": {"type": "integer", "minimum": 1},
            "sweeps": {"type": "integer", "minimum": 1},
        },
        "required": ["nodes", "states"],
    },
    "compile-pipeline": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "protocol": {"type": "string"},
            "instance": {"enum": ["yes", "no"]},
            "pipeline": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["transform"],
                    "properties": {
                        "transform": {
                            "enum": [
                                "pad",
                                "halve-shared",
                                "halve-private",
                                "seven-to-five",
                                "perfect-completeness",
                                "parallel-repeat",
                            ]
                        },
                        "target": {"type": "integer"},
                        "t": {"type": "integer", "minimum": 1},
                        "repeat_mode": {"enum": ["AND", "majority"]},
                    },
                },
            },
            "optimize": {"type": "boolean"},
            "restarts": {"type": "integer", "minimum": 1},
            "sweeps": {"type": "integer", "minimum": 1},
        },
        "required": ["protocol", "instance", "pipeline"],
    },
    "optimize": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "protocol": {"type": "string"},
            "instance": {"enum": ["yes", "no"]},
            "restarts": {"type": "integer", "minimum": 1},
            "sweeps": {"type": "integer", "minimum": 1},
        },
        "required": ["protocol", "instance"],
    },
    "dam-brute-force": {
        "type": "object",
        "additionalProperties": False,
        "properties": {"protocol": {"type": "string"}},
        "required": ["protocol"],
    },
    "qcore-properties": {
        "type": "object",
        "additionalProperties": False,
        "properties": {"samples": {"type": "integer", "minimum": 1, "maximum": 5000}},
    },
}
