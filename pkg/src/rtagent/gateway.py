"""Streaming session gateway: one live environment per WebSocket client.

The deterministic core runs unchanged; the gateway paces its action timeline
against the wall clock and injects client frames (typed utterances, kill
requests) through the same entry points the speech peripherals use. Server
frames leave in exactly the order the world emits them. The rule book a
session selects becomes that session's default model; other configured books
stay reachable by name for fork/spawn.
"""

from __future__ import annotations

import asyncio
import itertools
import json
from dataclasses import dataclass, field
from typing import Optional

import jsonschema
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response

from .dispatcher import ModelRule, ScriptedModel
from .environment import RuntimeConfig, World
from .harness import _RULE_SCHEMA, _format_schema_error
from .ledger import ToolRef, message_to_json, serialize
from .toolkit import RESERVED_TOOLS, ToolDef, ToolRegistry

PROTOCOL_VERSION = 1

# Outbound frames queued beyond this bound close the session (slow client).
FRAME_BUFFER_LIMIT = 1024

_CLOSE = object()

_TOOL_SCHEMA = {
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
        "url": {"type": "string", "minLength": 1},
    },
}

GATEWAY_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {"type": "string", "minLength": 1},
        "models": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": _RULE_SCHEMA},
        },
        "tools": {"type": "array", "items": _TOOL_SCHEMA},
        "priorities": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "user": {"type": "integer"},
                "assistant": {"type": "integer"},
                "tool_default": {"type": "integer"},
            },
        },
        "tick_interval_ms": {"type": ["integer", "null"]},
        "chars_per_second": {"type": "integer", "minimum": 1},
        "system_prompt": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "depth_limit": {"type": "integer", "minimum": 0},
        "child_system_prompt": {"type": "string"},
        "interrupt_user_below": {"type": ["integer", "null"]},
        "port": {"type": "integer", "minimum": 1, "maximum": 65535},
    },
}

DEFAULT_GATEWAY_DOC = {
    "system_prompt": "You are a helpful real-time assistant.",
    "tools": [
        {"name": "lookup", "latency_ms": 1500,
         "response": "Lookup complete: 3 results."},
    ],
    "models": {
        "default": [
            {"trigger": "Hello",
             "output": "<|chat|>Hello there. How can I help you today?",
             "token_delay_ms": 60},
            {"trigger": "look it up",
             "output": "<|function|>{\"name\": \"lookup\", \"args\": {}}"
                       "<|chat|>One moment while I look that up.",
             "token_delay_ms": 60},
            {"trigger": "Lookup complete: 3 results.",
             "output": "<|chat|>Found three results for you.",
             "token_delay_ms": 60},
        ],
    },
}


class GatewayConfigError(ValueError):
    """Gateway config document failed validation."""


class UnknownModelError(ValueError):
    """Session asked for a model name the config does not define."""


@dataclass
class GatewayConfig:
    model: str = "default"
    models: dict[str, list[ModelRule]] = field(default_factory=dict)
    tools: list[ToolDef] = field(default_factory=list)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    system_prompt: str = ""
    port: int = 8765


def gateway_config_from_dict(doc: dict) -> GatewayConfig:
    try:
        jsonschema.validate(doc, GATEWAY_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise GatewayConfigError(_format_schema_error(exc)) from None
    tools = []
    seen = set()
    for i, raw in enumerate(doc.get("tools", [])):
        name = raw["name"]
        if name in RESERVED_TOOLS:
            raise GatewayConfigError(f"tools[{i}].name: {name!r} is reserved")
        if name in seen:
            raise GatewayConfigError(f"tools[{i}].name: duplicate tool {name!r}")
        seen.add(name)
        tools.append(ToolDef(
            name=name,
            priority=raw.get("priority"),
            latency_ms=raw.get("latency_ms", 0),
            response=raw.get("response"),
            script=raw.get("script"),
            echo_args=raw.get("echo_args", False),
            args_schema=raw.get("args_schema"),
            url=raw.get("url"),
        ))
    models = {
        name: [ModelRule(trigger=r["trigger"], output=r["output"],
                         token_delay_ms=r.get("token_delay_ms", 20))
               for r in rules]
        for name, rules in doc.get("models", {}).items()
    }
    if not models:
        models = {"default": []}
    default_name = doc.get("model", "default")
    if default_name not in models:
        raise GatewayConfigError(f"model: {default_name!r} is not a configured model")
    priorities = doc.get("priorities", {})
    runtime_raw = {
        k: doc[k] for k in (
            "tick_interval_ms", "chars_per_second", "seed", "depth_limit",
            "child_system_prompt", "interrupt_user_below") if k in doc
    }
    if "user" in priorities:
        runtime_raw["user_priority"] = priorities["user"]
    if "assistant" in priorities:
        runtime_raw["assistant_priority"] = priorities["assistant"]
    if "tool_default" in priorities:
        runtime_raw["default_tool_priority"] = priorities["tool_default"]
    try:
        runtime = RuntimeConfig.from_dict(runtime_raw)
    except (TypeError, ValueError) as exc:
        raise GatewayConfigError(f"config: {exc}") from None
    return GatewayConfig(
        model=default_name,
        models=models,
        tools=tools,
        runtime=runtime,
        system_prompt=doc.get("system_prompt", ""),
        port=doc.get("port", 8765),
    )


def load_gateway_config(path: Optional[str]) -> GatewayConfig:
    if path is None:
        return gateway_config_from_dict(DEFAULT_GATEWAY_DOC)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise GatewayConfigError(f"cannot read gateway config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise GatewayConfigError(f"gateway config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise GatewayConfigError("gateway config must be a JSON object")
    return gateway_config_from_dict(doc)


class GatewaySession:
    """Live environment bound to one client connection.

    The runner task executes timeline actions when the wall clock reaches
    their virtual due time and applies injected client frames at the wall
    time they arrive, so virtual timestamps track real time while staying
    integral and monotone.
    """

    def __init__(self, config: GatewayConfig, model_name: str, sid: str) -> None:
        if model_name not in config.models:
            raise UnknownModelError(f"unknown model {model_name!r}")
        registry = ToolRegistry()
        for tool in config.tools:
            registry.register(tool)
        books = {name: ScriptedModel(rules) for name, rules in config.models.items()}
        books["default"] = ScriptedModel(config.models[model_name])
        self.sid = sid
        self.world = World(config.runtime, registry, books,
                           system_prompt=config.system_prompt)
        self.world.async_tool_runner = self._launch_url_tool
        self.buffer_limit = FRAME_BUFFER_LIMIT
        self.outbox: asyncio.Queue = asyncio.Queue()
        self.inbox: asyncio.Queue = asyncio.Queue()
        self.closed = asyncio.Event()
        self.overflowed = False
        self._anchor: Optional[float] = None

    # --- outbound ----------------------------------------------------------

    def snapshot_frames(self) -> list[dict]:
        return (
            [{"kind": "session_open", "session": self.sid,
              "protocol": PROTOCOL_VERSION},
             {"kind": "state_change", "state": self.world.root.ds.state.value}]
            + [{"kind": "ledger_append", "message": message_to_json(m)}
               for m in self.world.root.ledger]
            + [{"kind": "process_tree", "processes": self.world.procs.snapshot()},
               {"kind": "clock", "now_ms": self.world.now}]
        )

    def start_streaming(self) -> None:
        """Queue the opening snapshot, then forward world frames live."""
        for frame in self.snapshot_frames():
            self.outbox.put_nowait(frame)
        self.world.frames = self._push_frame

    def _push_frame(self, kind: str, body: dict) -> None:
        if self.overflowed:
            return
        if self.outbox.qsize() >= self.buffer_limit:
            self.overflowed = True
            while not self.outbox.empty():
                self.outbox.get_nowait()
            self.outbox.put_nowait(
                {"kind": "error", "detail": "frame buffer overflow; closing session"})
            self.close()
            return
        self.outbox.put_nowait({"kind": kind, **body})

    async def send_loop(self, ws) -> None:
        while True:
            frame = await self.outbox.get()
            if frame is _CLOSE:
                break
            try:
                await ws.send_json(frame)
            except Exception:
                break

    # --- inbound -----------------------------------------------------------

    def receive_client_text(self, raw: str) -> None:
        """Validate one client frame; queue it or report it, never crash."""
        try:
            frame = json.loads(raw)
        except json.JSONDecodeError:
            self._push_frame("error", {"detail": "frame is not valid JSON"})
            return
        if not isinstance(frame, dict):
            self._push_frame("error", {"detail": "frame must be a JSON object"})
            return
        kind = frame.get("kind")
        if kind == "utterance_start":
            self.inbox.put_nowait({"kind": "utterance_start"})
        elif kind == "utterance_end":
            text = frame.get("text")
            if not isinstance(text, str):
                self._push_frame("error", {"detail": "utterance_end requires string text"})
                return
            self.inbox.put_nowait({"kind": "utterance_end", "text": text})
        elif kind == "kill":
            pid = frame.get("pid")
            if isinstance(pid, bool) or not isinstance(pid, int):
                self._push_frame("error", {"detail": "kill requires an integer pid"})
                return
            self.inbox.put_nowait({"kind": "kill", "pid": pid})
        else:
            self._push_frame("error", {"detail": f"unknown frame kind: {kind!r}"})

    # --- execution ---------------------------------------------------------

    def now_ms(self) -> int:
        return int((asyncio.get_running_loop().time() - self._anchor) * 1000)

    async def run(self) -> None:
        self._anchor = asyncio.get_running_loop().time()
        self.world.drain_all()
        while not self.closed.is_set():
            wall = self.now_ms()
            due = self.world.timeline.next_due()
            stepped = False
            while due is not None and due <= wall:
                self.world.run_step()
                stepped = True
                due = self.world.timeline.next_due()
            if stepped:
                self._push_frame("clock", {"now_ms": self.world.now})
            timeout = None if due is None else max(due - self.now_ms(), 0) / 1000.0
            try:
                item = await asyncio.wait_for(self.inbox.get(), timeout)
            except asyncio.TimeoutError:
                continue
            if item is _CLOSE:
                break
            self._apply(item)

    def _apply(self, item) -> None:
        world = self.world
        now = max(self.now_ms(), world.now)
        world.now = now
        if isinstance(item, tuple):  # ("tool_response", env, tool, name, rid, data)
            _, env, tool, name, rid, data = item
            env.toolkit.pending -= 1
            priority = (tool.priority if tool.priority is not None
                        else world.config.default_tool_priority)
            env.toolkit.push_response(ToolRef(name, rid), priority, data, now)
        elif item["kind"] == "utterance_start":
            world.root.speech_start(now)
        elif item["kind"] == "utterance_end":
            if not world.root.speech_end(now, item["text"]):
                self._push_frame(
                    "error", {"detail": "utterance_end without utterance_start"})
        elif item["kind"] == "kill":
            error = world.procs.kill(0, item["pid"], now)
            if error is not None:
                self._push_frame("error", {"detail": f"kill failed: {error}"})
        world.drain_all()
        self._push_frame("clock", {"now_ms": world.now})

    def close(self) -> None:
        if self.closed.is_set():
            return
        self.closed.set()
        self.inbox.put_nowait(_CLOSE)
        self.outbox.put_nowait(_CLOSE)

    # --- live HTTP tools -----------------------------------------------------

    def _launch_url_tool(self, env, tool, rid: str, payload: dict) -> None:
        name = payload.get("name")
        args = payload.get("args", {})
        asyncio.get_running_loop().create_task(
            self._call_url_tool(env, tool, name, rid, args))

    async def _call_url_tool(self, env, tool, name: str, rid: str, args: dict) -> None:
        import httpx

        try:
            async with httpx.AsyncClient(timeout=30.0) as client:
                response = await client.post(
                    tool.url, json={"name": name, "args": args, "request_id": rid})
                response.raise_for_status()
                data = response.text
        except Exception as exc:
            data = f"Error: tool '{name}' failed: {exc}"
        if not self.closed.is_set():
            self.inbox.put_nowait(("tool_response", env, tool, name, rid, data))


def create_app(config: Optional[GatewayConfig] = None) -> FastAPI:
    if config is None:
        config = gateway_config_from_dict(DEFAULT_GATEWAY_DOC)
    app = FastAPI(title="agent gateway")
    app.state.config = config
    app.state.sessions = {}
    counter = itertools.count(1)

    @app.websocket("/session")
    async def session_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        model_name = ws.query_params.get("model", config.model)
        try:
            session = GatewaySession(config, model_name, sid=f"s{next(counter)}")
        except (UnknownModelError, ValueError) as exc:
            await ws.send_json({"kind": "error", "detail": str(exc)})
            await ws.close()
            return
        app.state.sessions[session.sid] = session
        session.start_streaming()
        sender = asyncio.create_task(session.send_loop(ws))
        runner = asyncio.create_task(session.run())
        try:
            while True:
                session.receive_client_text(await ws.receive_text())
        except WebSocketDisconnect:
            pass
        finally:
            session.close()
            await asyncio.gather(runner, sender, return_exceptions=True)

    @app.get("/debug/sessions/{sid}/ledger")
    def session_ledger(sid: str):
        session = app.state.sessions.get(sid)
        if session is None:
            return JSONResponse(status_code=404, content={"detail": "unknown session"})
        return Response(content=serialize(session.world.root.ledger),
                        media_type="application/json")

    return app
