"""Deterministic scenario harness.

A scenario JSON declares the system prompt, simulated tools, scripted model
rules, timed utterances, and config; the harness replays it on the virtual
clock. Identical scenario + seed must yield byte-identical traces.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import jsonschema

from .dispatcher import ModelRule, ScriptedModel
from .environment import RuntimeConfig, World
from .ledger import serialize
from .toolkit import RESERVED_TOOLS, ToolDef, ToolRegistry
from .trace import Trace, TraceDivergence, diff_traces, parse_jsonl

SCENARIO_FORMAT = 1

_RULE_SCHEMA = {
    "type": "object",
    "required": ["trigger", "output"],
    "additionalProperties": False,
    "properties": {
        "trigger": {"type": "string", "minLength": 1},
        "output": {"type": "string"},
        "token_delay_ms": {"type": "integer", "minimum": 0},
    },
}

_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "user_priority": {"type": "integer"},
        "assistant_priority": {"type": "integer"},
        "default_tool_priority": {"type": "integer"},
        "chars_per_second": {"type": "integer", "minimum": 1},
        "tick_interval_ms": {"type": ["integer", "null"]},
        "coalesce_time_passage": {"type": "boolean"},
        "depth_limit": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "prompt_template": {"type": "string"},
        "child_system_prompt": {"type": "string"},
        "interrupt_user_below": {"type": ["integer", "null"]},
    },
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["format"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": SCENARIO_FORMAT},
        "name": {"type": "string"},
        "system_prompt": {"type": "string"},
        "tools": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "priority": {"type": "integer"},
                    "latency_ms": {"type": "integer", "minimum": 0},
                    "response": {"type": "string"},
                    "script": {"type": "string"},
                    "echo_args": {"type": "boolean"},
                    "args_schema": {"type": "object"},
                },
            },
        },
        "model_rules": {"type": "array", "items": _RULE_SCHEMA},
        "models": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": _RULE_SCHEMA},
        },
        "utterances": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["start_ms", "end_ms", "text"],
                "additionalProperties": False,
                "properties": {
                    "start_ms": {"type": "integer", "minimum": 0},
                    "end_ms": {"type": "integer", "minimum": 0},
                    "text": {"type": "string"},
                },
            },
        },
        "config": _CONFIG_SCHEMA,
        "max_virtual_time_ms": {"type": "integer", "minimum": 0},
        "golden_trace": {"type": "string"},
    },
}


class ScenarioError(ValueError):
    """Scenario document failed validation."""


@dataclass
class Utterance:
    start_ms: int
    end_ms: int
    text: str


@dataclass
class Scenario:
    name: str = "scenario"
    system_prompt: str = ""
    tools: list[ToolDef] = field(default_factory=list)
    model_rules: list[ModelRule] = field(default_factory=list)
    models: dict[str, list[ModelRule]] = field(default_factory=dict)
    utterances: list[Utterance] = field(default_factory=list)
    config: RuntimeConfig = field(default_factory=RuntimeConfig)
    max_virtual_time_ms: int = 60000
    golden_trace: Optional[str] = None
    base_dir: str = "."


def _format_schema_error(exc: jsonschema.ValidationError) -> str:
    path = ""
    for part in exc.absolute_path:
        path = f"{path}[{part}]" if isinstance(part, int) else (
            f"{path}.{part}" if path else part)
    return f"{path or 'document'}: {exc.message}"


def scenario_from_dict(doc: dict, base_dir: str = ".") -> Scenario:
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ScenarioError(_format_schema_error(exc)) from None
    tools = []
    seen = set()
    for i, raw in enumerate(doc.get("tools", [])):
        name = raw["name"]
        if name in RESERVED_TOOLS:
            raise ScenarioError(f"tools[{i}].name: {name!r} is reserved")
        if name in seen:
            raise ScenarioError(f"tools[{i}].name: duplicate tool {name!r}")
        seen.add(name)
        tools.append(ToolDef(
            name=name,
            priority=raw.get("priority"),
            latency_ms=raw.get("latency_ms", 0),
            response=raw.get("response"),
            script=raw.get("script"),
            echo_args=raw.get("echo_args", False),
            args_schema=raw.get("args_schema"),
        ))
    utterances = []
    prev_end = -1
    for i, raw in enumerate(doc.get("utterances", [])):
        utt = Utterance(start_ms=raw["start_ms"], end_ms=raw["end_ms"], text=raw["text"])
        if utt.end_ms <= utt.start_ms:
            raise ScenarioError(f"utterances[{i}]: end_ms must be after start_ms")
        if utt.start_ms <= prev_end:
            raise ScenarioError(f"utterances[{i}]: overlaps or is out of order")
        prev_end = utt.end_ms
        utterances.append(utt)

    def rules_of(raw_rules) -> list[ModelRule]:
        return [ModelRule(trigger=r["trigger"], output=r["output"],
                          token_delay_ms=r.get("token_delay_ms", 20)) for r in raw_rules]

    try:
        config = RuntimeConfig.from_dict(doc.get("config", {}))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"config: {exc}") from None
    return Scenario(
        name=doc.get("name", "scenario"),
        system_prompt=doc.get("system_prompt", ""),
        tools=tools,
        model_rules=rules_of(doc.get("model_rules", [])),
        models={name: rules_of(rules) for name, rules in doc.get("models", {}).items()},
        utterances=utterances,
        config=config,
        max_virtual_time_ms=doc.get("max_virtual_time_ms", 60000),
        golden_trace=doc.get("golden_trace"),
        base_dir=base_dir,
    )


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    return scenario_from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def build_world(scenario: Scenario, seed: Optional[int] = None, frames=None) -> World:
    registry = ToolRegistry()
    for tool in scenario.tools:
        registry.register(tool)
    models = {"default": ScriptedModel(scenario.model_rules)}
    for name, rules in scenario.models.items():
        models[name] = ScriptedModel(rules)
    config = scenario.config
    if seed is not None:
        config = RuntimeConfig(**{**config.__dict__, "seed": seed})
    world = World(config, registry, models, system_prompt=scenario.system_prompt, frames=frames)
    for utt in scenario.utterances:
        world.timeline.schedule(utt.start_ms, lambda t: world.root.speech_start(t))
        world.timeline.schedule(
            utt.end_ms, lambda t, text=utt.text: world.root.speech_end(t, text))
    return world


@dataclass
class RunResult:
    world: World
    trace: Trace
    outcome: str

    def trace_jsonl(self) -> str:
        return self.trace.to_jsonl()

    def ledger_json(self) -> str:
        return serialize(self.world.root.ledger)


def run_scenario(scenario: Scenario, seed: Optional[int] = None) -> RunResult:
    world = build_world(scenario, seed=seed)
    outcome = world.run(scenario.max_virtual_time_ms)
    return RunResult(world=world, trace=world.trace, outcome=outcome)


def check_golden(result: RunResult, scenario: Scenario) -> Optional[TraceDivergence]:
    """Compare the run's trace against the scenario's golden trace file."""
    if scenario.golden_trace is None:
        return None
    path = os.path.join(scenario.base_dir, scenario.golden_trace)
    with open(path, "r", encoding="utf-8") as fh:
        golden_text = fh.read()
    got = result.trace_jsonl()
    if got == golden_text:
        return None
    divergence = diff_traces(parse_jsonl(golden_text), parse_jsonl(got))
    if divergence is None:
        # Same records, different bytes (should not happen with our writer).
        return TraceDivergence(index=-1, field_diffs=["byte-level difference"],
                               left=None, right=None)
    return divergence
