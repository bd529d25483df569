"""Plain-text model configuration files.

Grammar: one ``key = value`` pair per line, ``#`` starts a comment,
blank lines are ignored. Recognised keys map onto ``ModelConfig``:

    input_size  = 64
    channels    = 32,64,128,256
    cells       = 2,2,1,1
    mask_radius = 2
    iters       = 2
    salrm_k     = 9
    seed        = 0

Unknown or duplicate keys are rejected. Omitted keys keep the model
defaults. ``parse_config(serialize_config(c)) == c`` holds exactly.
"""

from __future__ import annotations

from .network import ModelConfig

__all__ = ["ConfigError", "parse_config", "parse_config_file",
           "serialize_config"]


class ConfigError(Exception):
    """Unparseable or invalid configuration text."""


_TUPLE_KEYS = {"channels": "stage_channels", "cells": "stage_cells"}
_INT_KEYS = {"input_size": "input_size", "mask_radius": "mask_radius",
             "iters": "t", "salrm_k": "salrm_k", "seed": "seed"}


def _parse_int(key: str, text: str) -> int:
    try:
        return int(text, 10)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from exc


def parse_config(text: str) -> ModelConfig:
    """Parse configuration text into a validated ``ModelConfig``."""
    fields: dict[str, object] = {}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        if key in _INT_KEYS:
            fields[_INT_KEYS[key]] = _parse_int(key, value)
        elif key in _TUPLE_KEYS:
            parts = [p.strip() for p in value.split(",") if p.strip()]
            if not parts:
                raise ConfigError(f"line {lineno}: {key} needs values")
            fields[_TUPLE_KEYS[key]] = tuple(_parse_int(key, p)
                                             for p in parts)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    try:
        return ModelConfig(**fields)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config_file(path: str) -> ModelConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text)


def serialize_config(config: ModelConfig) -> str:
    """Render a config as text that parses back to an equal value."""
    lines = [
        f"input_size = {config.input_size}",
        "channels = " + ",".join(str(c) for c in config.stage_channels),
        "cells = " + ",".join(str(p) for p in config.stage_cells),
        f"mask_radius = {config.mask_radius}",
        f"iters = {config.t}",
        f"salrm_k = {config.salrm_k}",
        f"seed = {config.seed}",
    ]
    return "\n".join(lines) + "\n"
