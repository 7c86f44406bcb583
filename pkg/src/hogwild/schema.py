"""JSON Schema of the reports written by ``hogwild train``."""

RUN_REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "hogwild run report",
    "type": "object",
    "required": ["report", "config", "schedule", "problem", "dataset", "stats"],
    "properties": {
        "report": {
            "type": "object",
            "required": ["scheduler", "threads", "epochs", "mode", "seed", "delay_ns",
                         "wall_seconds", "objectives", "gammas", "train_metric",
                         "updates_performed", "x_sha256"],
            "properties": {
                "scheduler": {"enum": ["hogwild", "serial", "rr", "aig", "avg"]},
                "threads": {"type": "integer", "minimum": 1},
                "epochs": {"type": "integer", "minimum": 1},
                "mode": {"enum": ["without-replacement", "with-replacement"]},
                "seed": {"type": "integer"},
                "delay_ns": {"type": "integer", "minimum": 0},
                "wall_seconds": {"type": "number", "minimum": 0},
                "objectives": {"type": "array", "items": {"type": "number"}},
                "gammas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "train_metric": {"type": "array", "items": {"type": ["number", "null"]}},
                "updates_performed": {"type": "integer", "minimum": 0},
                "x_sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
                "test_metric": {"type": ["number", "null"]},
                "extra": {"type": "object"},
            },
        },
        "config": {
            "type": "object",
            "required": ["threads", "epochs", "mode", "seed", "delay_ns", "scheduler"],
        },
        "schedule": {
            "type": "object",
            "required": ["gamma0", "beta"],
            "properties": {"gamma0": {"type": "number", "exclusiveMinimum": 0},
                           "beta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
        },
        "problem": {"type": "object", "required": ["kind", "n_edges", "dim"]},
        "dataset": {"type": "object", "required": ["format"]},
        "stats": {
            "type": "object",
            "required": ["omega", "delta", "rho", "n", "edges", "exact"],
        },
    },
}
