"""Flat ``key = value`` text configs for pipeline runs and synthetic scenes.

Blank lines and ``#`` comments are ignored. Syntax problems raise
``FormatError``; well-formed files with unknown keys or bad values raise
``InvalidConfigError``.
"""
from __future__ import annotations

import dataclasses
import types
import typing
from pathlib import Path

from .errors import FormatError, InvalidConfigError, InvalidInputError
from .pipeline import PipelineConfig
from .synth import Layer, SceneSpec

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}
# layer = <shape> <shape params...> <a> <b> <c>
_LAYER_PARAMS = {"full": 0, "rect": 4, "disc": 3}


def parse_lines(text: str) -> list[tuple[str, str, int]]:
    """``(key, value, line_number)`` for every assignment, in file order."""
    out = []
    offset = 0
    for n, raw in enumerate(text.splitlines(keepends=True), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            if "=" not in line:
                raise FormatError(f"line {n}: expected 'key = value'", offset)
            key, value = (part.strip() for part in line.split("=", 1))
            if not key or not value:
                raise FormatError(f"line {n}: empty key or value", offset)
            out.append((key, value, n))
        offset += len(raw.encode("utf-8"))
    return out


def _convert(value: str, typ, key: str, n: int):
    origin = typing.get_origin(typ)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(typ) if a is not type(None)]
        if value.lower() == "none":
            return None
        return _convert(value, args[0], key, n)
    try:
        if typ is bool:
            low = value.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(value)
        if typ is int:
            return int(value)
        if typ is float:
            return float(value)
        if typ is str:
            return value
    except ValueError:
        raise InvalidConfigError(f"line {n}: bad value {value!r} for {key}") from None
    raise InvalidConfigError(f"line {n}: {key} cannot be set from a config file")


def _unique(pairs):
    seen = {}
    for key, value, n in pairs:
        if key in seen:
            raise InvalidConfigError(f"line {n}: {key} already set on line {seen[key]}")
        seen[key] = n
    return pairs


def parse_run_config(text: str, base: PipelineConfig = PipelineConfig()) -> PipelineConfig:
    hints = typing.get_type_hints(PipelineConfig)
    settable = {f.name for f in dataclasses.fields(PipelineConfig)} - {"stages"}
    updates = {}
    for key, value, n in _unique(parse_lines(text)):
        if key not in settable:
            raise InvalidConfigError(f"line {n}: unknown key {key!r}")
        updates[key] = _convert(value, hints[key], key, n)
    return dataclasses.replace(base, **updates)


def load_run_config(path) -> PipelineConfig:
    return parse_run_config(Path(path).read_text(encoding="utf-8"))


def _layer(value: str, n: int) -> Layer:
    parts = value.split()
    shape = parts[0] if parts else ""
    if shape not in _LAYER_PARAMS:
        raise InvalidConfigError(f"line {n}: layer shape must be one of {sorted(_LAYER_PARAMS)}")
    k = _LAYER_PARAMS[shape]
    if len(parts) != 1 + k + 3:
        raise InvalidConfigError(f"line {n}: '{shape}' layer needs {k} shape values and a b c")
    try:
        nums = [float(p) for p in parts[1:]]
    except ValueError:
        raise InvalidConfigError(f"line {n}: layer values must be numbers") from None
    return Layer(shape, tuple(nums[:k]), tuple(nums[k:]))


def parse_scene_spec(text: str) -> SceneSpec:
    """Scene file: scalar keys of ``SceneSpec`` plus one ``layer`` line per layer.

    Layers are listed nearest first; the last one must cover the frame.
    """
    hints = typing.get_type_hints(SceneSpec)
    scalars = {f.name for f in dataclasses.fields(SceneSpec)} - {"layers"}
    pairs = parse_lines(text)
    layers = [_layer(v, n) for k, v, n in pairs if k == "layer"]
    updates = {}
    for key, value, n in _unique([p for p in pairs if p[0] != "layer"]):
        if key not in scalars:
            raise InvalidConfigError(f"line {n}: unknown key {key!r}")
        updates[key] = _convert(value, hints[key], key, n)
    if not layers:
        raise InvalidConfigError("scene needs at least one 'layer' line")
    spec = SceneSpec(layers=tuple(layers), **updates)
    try:
        spec.validate()
    except InvalidInputError as exc:
        raise InvalidConfigError(str(exc)) from None
    return spec


def load_scene_spec(path) -> SceneSpec:
    return parse_scene_spec(Path(path).read_text(encoding="utf-8"))


def format_scene_spec(spec: SceneSpec) -> str:
    lines = [f"{f.name} = {getattr(spec, f.name)}" for f in dataclasses.fields(SceneSpec)
             if f.name != "layers"]
    for layer in spec.layers:
        nums = " ".join(repr(float(v)) for v in tuple(layer.params) + tuple(layer.plane))
        lines.append(f"layer = {layer.shape} {nums}")
    return "\n".join(lines) + "\n"
