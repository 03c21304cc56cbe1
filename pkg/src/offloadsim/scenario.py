"""Scenario documents: model + hardware + schedule variant + planner options.

A scenario is YAML or JSON (JSON is valid YAML, so one loader covers both)::

    schema_version: 1
    model: gpt3-13b                  # preset name, or a mapping
    hardware:
      preset: a100-12ssd             # preset plus overrides
      n_ssd: 6
    variant: OVERLAPPED              # SERIAL | PIPELINED | OVERLAPPED
    planner: {mode: fixed_coefficient, value: 0.4}   # or "auto"
    seed: 0
    simulation: {granularity: layer}

The optional ``simulation`` mapping also takes ``optimizer_group_blocks``,
``inbound_share`` (fraction of the GPU queue budget given to prefetches) and
``checkpoint_placement`` (auto, cpu or ssd; auto keeps checkpoints in CPU
memory when they fit there).

Unknown keys are rejected so that a typo cannot silently change a sweep.
"""

from __future__ import annotations

import dataclasses
import json
import re
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .hardware import HardwareConfig, hardware_preset, validate
from .memory import GRANULARITIES, INBOUND_SHARE
from .schedule import PLACEMENTS, ScheduleVariant
from .workload import MODEL_PRESETS, ModelConfig, model_preset

SCHEMA_VERSION = 1
PLANNER_MODES = ("auto", "fixed_coefficient", "fixed_d_f")

_TOP_KEYS = {"schema_version", "model", "hardware", "variant", "planner", "seed", "simulation"}
_REQUIRED = ("schema_version", "model", "hardware")
_MODEL_FIELDS = {f.name: f for f in dataclasses.fields(ModelConfig)}
_HW_FIELDS = {f.name: f for f in dataclasses.fields(HardwareConfig)}
_INT_MODEL = {"num_layers", "num_heads", "hidden_dim", "batch_size", "seq_len",
              "param_elem_bytes", "activation_elem_bytes"}


@dataclass(frozen=True)
class PlannerSpec:
    mode: str = "auto"
    value: float | None = None


@dataclass(frozen=True)
class SimulationOptions:
    granularity: str = "layer"
    optimizer_group_blocks: int = 1
    optimizer_buffers: int = 2
    inbound_share: float = INBOUND_SHARE
    checkpoint_placement: str = "auto"


@dataclass(frozen=True)
class Scenario:
    model: ModelConfig
    hardware: HardwareConfig
    variant: ScheduleVariant = ScheduleVariant.OVERLAPPED
    planner: PlannerSpec = field(default_factory=PlannerSpec)
    seed: int = 0
    simulation: SimulationOptions = field(default_factory=SimulationOptions)
    schema_version: int = SCHEMA_VERSION
    name: str = field(default="", compare=False)


class _Lines:
    """Line numbers of mapping keys, looked up by key path."""

    def __init__(self, text: str | None):
        self.lines: dict[tuple, int] = {}
        if text is not None:
            try:
                self._walk(yaml.compose(text), ())
            except yaml.YAMLError:
                pass

    def _walk(self, node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = path + (k.value,)
                self.lines[key] = k.start_mark.line + 1
                self._walk(v, key)

    def where(self, *path) -> str:
        while path:
            if path in self.lines:
                return f"line {self.lines[path]}: "
            path = path[:-1]
        return ""


def _err(lines: _Lines, path: tuple, msg: str) -> ConfigError:
    return ConfigError(f"{lines.where(*path)}{msg}")


def _check_keys(data: Mapping, allowed, lines: _Lines, path: tuple, what: str):
    for key in data:
        if key not in allowed:
            raise _err(lines, path + (key,), f"unknown key {key!r} in {what}")


def _number(value, lines, path, integer=False):
    if isinstance(value, bool):
        raise _err(lines, path, f"{path[-1]!r} must be a number, got {value!r}")
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            raise _err(lines, path, f"{path[-1]!r} must be a number, got {value!r}") from None
    if not isinstance(value, (int, float)):
        raise _err(lines, path, f"{path[-1]!r} must be a number, got {value!r}")
    if integer:
        if float(value) != int(value):
            raise _err(lines, path, f"{path[-1]!r} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _resolve_model(spec, lines: _Lines) -> ModelConfig:
    path = ("model",)
    if isinstance(spec, str):
        spec = {"preset": spec}
    if not isinstance(spec, Mapping):
        raise _err(lines, path, "'model' must be a preset name or a mapping")
    _check_keys(spec, set(_MODEL_FIELDS) | {"preset"}, lines, path, "model")
    values = {}
    for key, raw in spec.items():
        if key in ("preset", "name"):
            values[key] = str(raw)
        else:
            values[key] = _number(raw, lines, path + (key,), integer=key in _INT_MODEL)
    try:
        if "preset" in values:
            preset = values.pop("preset")
            label = values.pop("name", None)
            try:
                cfg = model_preset(preset, **values)
            except KeyError:
                raise _err(lines, path + ("preset",),
                           f"unknown model preset {preset!r}; known: {', '.join(MODEL_PRESETS)}") from None
            return dataclasses.replace(cfg, name=label) if label else cfg
        missing = [k for k in ("name", "num_layers", "num_heads", "hidden_dim") if k not in values]
        if missing:
            raise _err(lines, path, f"model mapping without 'preset' is missing {', '.join(missing)}")
        return ModelConfig(**values)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise _err(lines, path, f"invalid model: {exc}") from None


def _resolve_hardware(spec, lines: _Lines) -> HardwareConfig:
    path = ("hardware",)
    if isinstance(spec, str):
        spec = {"preset": spec}
    if not isinstance(spec, Mapping):
        raise _err(lines, path, "'hardware' must be a preset name or a mapping")
    _check_keys(spec, set(_HW_FIELDS) | {"preset"}, lines, path, "hardware")
    values = {}
    for key, raw in spec.items():
        if key in ("preset", "name"):
            values[key] = str(raw)
        else:
            values[key] = _number(raw, lines, path + (key,), integer=key == "n_ssd")
    if "preset" in values:
        preset = values.pop("preset")
        try:
            hw = hardware_preset(preset, **values)
        except KeyError as exc:
            raise _err(lines, path + ("preset",), str(exc.args[0])) from None
    else:
        missing = [k for k in _HW_FIELDS if k not in values]
        if missing:
            raise _err(lines, path, f"hardware mapping without 'preset' is missing {', '.join(missing)}")
        hw = HardwareConfig(**values)
    report = validate(hw)
    if not report.ok:
        raise _err(lines, path, "; ".join(report.errors))
    return hw


def _resolve_planner(spec, lines: _Lines) -> PlannerSpec:
    path = ("planner",)
    if spec is None or spec == "auto":
        return PlannerSpec()
    if isinstance(spec, str):
        raise _err(lines, path, f"planner must be 'auto' or a mapping, got {spec!r}")
    if not isinstance(spec, Mapping):
        raise _err(lines, path, "planner must be 'auto' or a mapping")
    _check_keys(spec, {"mode", "value"}, lines, path, "planner")
    mode = spec.get("mode", "auto")
    if mode not in PLANNER_MODES:
        raise _err(lines, path + ("mode",), f"planner mode must be one of {PLANNER_MODES}, got {mode!r}")
    if mode == "auto":
        if spec.get("value") is not None:
            raise _err(lines, path + ("value",), "planner mode 'auto' takes no value")
        return PlannerSpec()
    if "value" not in spec:
        raise _err(lines, path, f"planner mode {mode!r} needs a 'value'")
    value = _number(spec["value"], lines, path + ("value",))
    if mode == "fixed_coefficient" and not 0 <= value <= 1:
        raise _err(lines, path + ("value",), "swap coefficient must be within [0, 1]")
    if mode == "fixed_d_f" and value < 0:
        raise _err(lines, path + ("value",), "d_f must be >= 0")
    return PlannerSpec(mode, value)


def _resolve_simulation(spec, lines: _Lines) -> SimulationOptions:
    path = ("simulation",)
    if spec is None:
        return SimulationOptions()
    if not isinstance(spec, Mapping):
        raise _err(lines, path, "'simulation' must be a mapping")
    _check_keys(spec, {f.name for f in dataclasses.fields(SimulationOptions)}, lines, path, "simulation")
    opts = {}
    if "granularity" in spec:
        if spec["granularity"] not in GRANULARITIES:
            raise _err(lines, path + ("granularity",), f"granularity must be one of {GRANULARITIES}")
        opts["granularity"] = spec["granularity"]
    for key in ("optimizer_group_blocks", "optimizer_buffers"):
        if key in spec:
            opts[key] = _number(spec[key], lines, path + (key,), integer=True)
            if opts[key] < 1:
                raise _err(lines, path + (key,), f"{key} must be >= 1")
    if "checkpoint_placement" in spec:
        if spec["checkpoint_placement"] not in PLACEMENTS:
            raise _err(lines, path + ("checkpoint_placement",),
                       f"checkpoint_placement must be one of {PLACEMENTS}")
        opts["checkpoint_placement"] = spec["checkpoint_placement"]
    if "inbound_share" in spec:
        opts["inbound_share"] = _number(spec["inbound_share"], lines, path + ("inbound_share",))
        if not 0 < opts["inbound_share"] < 1:
            raise _err(lines, path + ("inbound_share",), "inbound_share must be in (0, 1)")
    return SimulationOptions(**opts)


def from_mapping(data, text: str | None = None, name: str = "") -> Scenario:
    """Resolve an already-parsed document; ``text`` only feeds line numbers into errors."""
    lines = _Lines(text)
    if not isinstance(data, Mapping):
        raise ConfigError("scenario document must be a mapping at the top level")
    _check_keys(data, _TOP_KEYS, lines, (), "scenario")
    for key in _REQUIRED:
        if key not in data:
            raise ConfigError(f"missing required key {key!r}")
    version = data["schema_version"]
    if isinstance(version, bool) or version != SCHEMA_VERSION:
        raise _err(lines, ("schema_version",),
                   f"unsupported schema_version {version!r} (this build reads {SCHEMA_VERSION})")
    variant = data.get("variant", ScheduleVariant.OVERLAPPED.value)
    try:
        variant = ScheduleVariant(str(variant).upper())
    except ValueError:
        raise _err(lines, ("variant",),
                   f"variant must be one of {[v.value for v in ScheduleVariant]}, got {variant!r}") from None
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise _err(lines, ("seed",), f"seed must be an integer, got {seed!r}")
    return Scenario(
        model=_resolve_model(data["model"], lines),
        hardware=_resolve_hardware(data["hardware"], lines),
        variant=variant,
        planner=_resolve_planner(data.get("planner"), lines),
        seed=seed,
        simulation=_resolve_simulation(data.get("simulation"), lines),
        schema_version=SCHEMA_VERSION,
        name=name,
    )


def load_scenario(document, name: str = "") -> Scenario:
    """Parse a scenario from YAML/JSON text or an already-loaded mapping."""
    if isinstance(document, Mapping):
        return from_mapping(document, None, name)
    if not isinstance(document, str):
        raise ConfigError("scenario document must be text or a mapping")
    try:
        data = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{where}parse error: {problem}") from None
    return from_mapping(data, document, name)


def load_scenario_file(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror}") from None
    try:
        return load_scenario(text, name=path.stem)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def to_document(sc: Scenario) -> dict:
    """Fully expanded document (no presets) that loads back to an equal Scenario."""
    planner = "auto" if sc.planner.mode == "auto" else {"mode": sc.planner.mode, "value": sc.planner.value}
    return {
        "schema_version": sc.schema_version,
        "model": dataclasses.asdict(sc.model),
        "hardware": dataclasses.asdict(sc.hardware),
        "variant": sc.variant.value,
        "planner": planner,
        "seed": sc.seed,
        "simulation": dataclasses.asdict(sc.simulation),
    }


def dumps(sc: Scenario) -> str:
    return json.dumps(to_document(sc), sort_keys=True, indent=2) + "\n"


# ---- presets

_PRESET_RE = re.compile(r"^(?P<size>\d+b)-(?P<gpu>a100|4090)-(?P<n>\d+)ssd-b(?P<batch>\d+)$")


def scenario_preset(name: str, variant=ScheduleVariant.OVERLAPPED) -> Scenario:
    """Presets named ``<size>-<gpu>-<N>ssd-b<batch>``, e.g. ``13b-a100-12ssd-b32``."""
    m = _PRESET_RE.match(name.lower())
    if not m:
        raise ConfigError(f"unknown scenario preset {name!r}; expected e.g. 13b-a100-12ssd-b32")
    model_name = f"gpt3-{m['size']}"
    if model_name not in MODEL_PRESETS:
        raise ConfigError(f"unknown model size {m['size']!r} in preset {name!r}")
    n = int(m["n"])
    batch = int(m["batch"])
    if n < 1 or batch < 1:
        raise ConfigError(f"preset {name!r} needs at least one SSD and batch size >= 1")
    return Scenario(
        model=model_preset(model_name, batch_size=batch),
        hardware=hardware_preset(f"{m['gpu']}-{n}ssd"),
        variant=ScheduleVariant(variant),
        name=name.lower(),
    )


def _bundled():
    names = []
    for gpu in ("a100", "4090"):
        for b in (8, 16, 32, 64, 80):
            names.append(f"13b-{gpu}-12ssd-b{b}")
    for gpu in ("a100", "4090"):
        for n in (2, 4, 6, 12):
            names.append(f"175b-{gpu}-{n}ssd-b64")
    names += ["175b-4090-12ssd-b8", "175b-4090-12ssd-b16", "805b-a100-12ssd-b1", "276b-4090-12ssd-b1"]
    return tuple(names)


SCENARIO_PRESETS = _bundled()
