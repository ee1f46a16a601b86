"""TOML configuration: backend registry and pipeline knobs.

A config file has three sections. ``[backends.<capability>]`` declares
one backend per slot (text, vision, text_to_image, ocr, erase) with a
``kind`` of http, subprocess, or mock plus kind-specific fields; extra
keys are passed to mock backends as options. ``[pipeline]`` holds the
loop budget, threshold, epsilon, style text, skip flags, canvas, and
the root seed. ``[judge]`` holds evaluation defaults. Credentials never
live in the file, only the names of environment variables that hold
them.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ValidationError
from .gateway import Capability, Gateway, HttpBackend, SubprocessBackend
from .mocks import build_mock_backend

DEFAULT_STYLE = "Delicate and cute cartoon comic style, using Morandi color palette"

PIPELINE_DEFAULTS: dict[str, Any] = {
    "iterations": 5,
    "threshold": 8.5,
    "epsilon": 0.05,
    "style": DEFAULT_STYLE,
    "skip_text_refinement": False,
    "seed": 0,
    "canvas": [800, 600],
    "scale": 1.0,
}

JUDGE_DEFAULTS: dict[str, Any] = {"mode": "score", "seed": 0}

BACKEND_KINDS = ("http", "subprocess", "mock")


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> dict[str, Any]:
    """Read the TOML file (if any), apply defaults and CLI overrides, and
    validate. Returns the plain-dict snapshot stored in run manifests."""
    raw: dict[str, Any] = {}
    if path is not None:
        raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    config = {
        "pipeline": {**PIPELINE_DEFAULTS, **raw.get("pipeline", {})},
        "judge": {**JUDGE_DEFAULTS, **raw.get("judge", {})},
        "backends": {cap.value: dict(table) for cap, table in _backend_tables(raw).items()},
    }
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        config["pipeline"][key] = value
    validate_config(config)
    return config


def _backend_tables(raw: dict) -> dict[Capability, dict]:
    tables = {}
    declared = raw.get("backends", {})
    for capability in Capability:
        table = dict(declared.get(capability.value, {"kind": "mock"}))
        table.setdefault("kind", "mock")
        tables[capability] = table
    return tables


def validate_config(config: dict[str, Any]) -> None:
    pipeline = config.get("pipeline", {})
    iterations = pipeline.get("iterations", 0)
    if not isinstance(iterations, int) or iterations < 0:
        raise ValidationError(f"iterations must be a nonnegative integer, got {iterations!r}")
    threshold = pipeline.get("threshold", 8.5)
    if not (0 <= threshold <= 10):
        raise ValidationError(f"threshold must lie in [0, 10], got {threshold!r}")
    epsilon = pipeline.get("epsilon", 0.05)
    if epsilon < 0:
        raise ValidationError(f"epsilon must be nonnegative, got {epsilon!r}")
    if not str(pipeline.get("style", DEFAULT_STYLE)).strip():
        raise ValidationError("style must be non-empty")
    canvas = pipeline.get("canvas", [800, 600])
    if len(canvas) != 2 or canvas[0] <= 0 or canvas[1] <= 0:
        raise ValidationError(f"canvas must be [width, height] positive, got {canvas!r}")
    if pipeline.get("scale", 1.0) <= 0:
        raise ValidationError("scale must be positive")
    for name, table in config.get("backends", {}).items():
        kind = table.get("kind")
        if kind not in BACKEND_KINDS:
            raise ValidationError(f"backend {name}: kind must be one of {BACKEND_KINDS}, got {kind!r}")
        if kind == "http" and not table.get("endpoint"):
            raise ValidationError(f"backend {name}: http kind requires an endpoint")
        if kind == "subprocess" and not table.get("command"):
            raise ValidationError(f"backend {name}: subprocess kind requires a command")
    mode = config.get("judge", {}).get("mode", "score")
    if mode not in ("score", "pairwise", "extended"):
        raise ValidationError(f"judge mode must be score, pairwise, or extended, got {mode!r}")


def build_gateway(
    config: dict[str, Any],
    cache_dir: str | Path | None = None,
    *,
    sleep=time.sleep,
) -> Gateway:
    """Instantiate the gateway with one backend per capability slot."""
    gateway = Gateway(cache_dir=cache_dir, sleep=sleep)
    seed = config.get("pipeline", {}).get("seed", 0)
    for capability in Capability:
        table = dict(config.get("backends", {}).get(capability.value, {"kind": "mock"}))
        kind = table.pop("kind", "mock")
        rate_limit = table.pop("rate_limit_per_min", None)
        if kind == "http":
            backend = HttpBackend(
                table["endpoint"],
                auth_env=table.get("auth_env"),
                model=table.get("model"),
                timeout=table.get("timeout", 120.0),
            )
        elif kind == "subprocess":
            command = table["command"]
            backend = SubprocessBackend(command if isinstance(command, list) else command.split())
        else:
            options = dict(table)
            options.setdefault("seed", seed)
            backend = build_mock_backend(capability, options)
        gateway.register(capability, backend, rate_limit_per_min=rate_limit)
    return gateway
