"""Tool registry and asynchronous invocation lifecycle.

Every dispatched call gets a session-unique 11-hex-char request id, a
request-sent notification at dispatch time, and exactly one response
notification later, matched by id. Reserved names (fork, spawn, kill) route
to the process tree instead of a handler.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import jsonschema

from .events import Event, EventKind
from .ledger import SYSTEM_SOURCE, FunctionCall, NotificationContent, Role, ToolRef

RESERVED_TOOLS = ("fork", "spawn", "kill")

_ID_BITS = 44
_ID_MASK = (1 << _ID_BITS) - 1
_LCG_A = 25214903917  # a % 4 == 1 and odd c give a full-period generator mod 2^44
_LCG_C = 11


class RequestIdGenerator:
    """Seeded full-period 44-bit LCG rendered as 11 lowercase hex chars.

    The first id of a session is the seed itself (mod 2^44), and the full
    period guarantees no repeats within a session.
    """

    def __init__(self, seed: int) -> None:
        self._state = seed & _ID_MASK

    def next(self) -> str:
        rid = format(self._state, "011x")
        self._state = (_LCG_A * self._state + _LCG_C) & _ID_MASK
        return rid


@dataclass
class ToolDef:
    name: str
    priority: Optional[int] = None  # None means the configured default
    latency_ms: int = 0
    response: Optional[str] = None
    script: Optional[str] = None  # format template over the call args
    echo_args: bool = False
    args_schema: Optional[dict] = None
    url: Optional[str] = None  # live-mode HTTP tool
    handler: Optional[Callable[[dict], str]] = None


class ToolRegistry:
    def __init__(self) -> None:
        self._defs: dict[str, ToolDef] = {}

    def register(self, tool: ToolDef) -> None:
        if not tool.name or not isinstance(tool.name, str):
            raise ValueError("tool name must be a non-empty string")
        if tool.name in RESERVED_TOOLS:
            raise ValueError(f"tool name {tool.name!r} is reserved")
        if tool.name in self._defs:
            raise ValueError(f"tool {tool.name!r} is already registered")
        if tool.latency_ms < 0:
            raise ValueError("tool latency must be >= 0")
        self._defs[tool.name] = tool

    def get(self, name: str) -> Optional[ToolDef]:
        return self._defs.get(name)

    def names(self) -> list[str]:
        return sorted(self._defs)


def request_sent_data(name: str, rid: str, args: Optional[dict], echo: bool) -> str:
    base = f"Request sent for: {name}. ID: {rid}."
    if echo and args is not None:
        base += " Args: " + json.dumps(args, separators=(",", ":"), ensure_ascii=False) + "."
    return base


class Toolkit:
    """Per-process invocation front end over the shared registry."""

    def __init__(self, env, registry: ToolRegistry) -> None:
        self.env = env
        self.registry = registry
        self.pending = 0

    def invoke(self, call: FunctionCall, now: int) -> Optional[str]:
        """Dispatch one parsed function call; returns its request id, or
        None when the call was rejected before dispatch."""
        env = self.env
        payload = call.payload
        name = payload.get("name")
        default_p = env.world.config.default_tool_priority
        if not isinstance(name, str) or not name:
            self._respond_error(now, default_p, "Error: function payload is missing a tool name.")
            return None
        if name in RESERVED_TOOLS:
            return self._invoke_reserved(call, name, now)
        tool = self.registry.get(name)
        if tool is None:
            self._respond_error(now, default_p, f"Error: unknown tool '{name}'.")
            return None
        priority = tool.priority if tool.priority is not None else default_p
        args = payload.get("args", {})
        if not isinstance(args, dict):
            self._respond_error(now, priority, f"Error: arguments for '{name}' must be an object.")
            return None
        if tool.args_schema is not None:
            try:
                jsonschema.validate(args, tool.args_schema)
            except jsonschema.ValidationError as exc:
                self._respond_error(
                    now, priority, f"Error: invalid arguments for '{name}': {exc.message}")
                return None
        rid = env.world.ids.next()
        call.request_id = rid
        self._push_request_sent(name, rid, args if tool.echo_args else None, now)
        if tool.url is not None and env.world.async_tool_runner is not None:
            self.pending += 1
            env.world.async_tool_runner(env, tool, rid, payload)
            return rid
        self.pending += 1

        def complete(at: int, tool=tool, rid=rid, args=args, name=name) -> None:
            self.pending -= 1
            data = self._resolve(tool, name, args)
            self.push_response(ToolRef(name, rid), priority, data, at)

        env.world.timeline.schedule(now + tool.latency_ms, complete, env.pid)
        return rid

    def _invoke_reserved(self, call: FunctionCall, name: str, now: int) -> Optional[str]:
        env = self.env
        payload = call.payload
        priority = env.world.config.default_tool_priority
        if name in ("fork", "spawn"):
            instructions = payload.get("instructions")
            if not isinstance(instructions, str) or not instructions:
                self._respond_error(
                    now, priority, f"Error: {name} requires non-empty string instructions.")
                return None
            model = payload.get("model")
            if model is not None and not isinstance(model, str):
                self._respond_error(now, priority, f"Error: {name} model must be a string.")
                return None
            rid = env.world.ids.next()
            call.request_id = rid
            self._push_request_sent(name, rid, None, now)
            error = env.world.procs.create_child(env, name, instructions, model, rid, now)
            if error is not None:
                self.push_response(ToolRef(name, rid), priority, f"Error: {error}", now)
            return rid
        # kill
        pid = payload.get("pid")
        if isinstance(pid, bool) or not isinstance(pid, int):
            self._respond_error(now, priority, "Error: kill requires an integer pid.")
            return None
        rid = env.world.ids.next()
        call.request_id = rid
        self._push_request_sent(name, rid, None, now)
        error = env.world.procs.kill(env.pid, pid, now)
        if error is None:
            data = f"Process {pid} killed."
        else:
            data = f"Error: {error}"
        self.push_response(ToolRef(name, rid), priority, data, now)
        return rid

    def _resolve(self, tool: ToolDef, name: str, args: dict) -> str:
        if tool.handler is not None:
            try:
                return str(tool.handler(args))
            except Exception as exc:
                return f"Error: tool '{name}' failed: {exc}"
        if tool.url is not None:
            return f"Error: tool '{name}' requires a live session."
        if tool.script is not None:
            try:
                return tool.script.format(**args)
            except (KeyError, IndexError) as exc:
                return f"Error: tool '{name}' script needs argument {exc}."
        if tool.response is not None:
            return tool.response
        return ""

    def _push_request_sent(self, name: str, rid: str, args: Optional[dict], now: int) -> None:
        data = request_sent_data(name, rid, args, args is not None)
        content = NotificationContent(source=SYSTEM_SOURCE, timestamp=now, data=data)
        self.env.queue.push(
            Event(EventKind.TOOL_REQUEST_SENT, message=(Role.NOTIFICATION, content)), now)

    def push_response(self, source: ToolRef, priority: int, data: str, now: int) -> None:
        content = NotificationContent(source=source, timestamp=now, data=data)
        self.env.queue.push(
            Event(EventKind.TOOL_RESPONSE_RECEIVED, priority=priority,
                  message=(Role.NOTIFICATION, content)), now)

    def _respond_error(self, now: int, priority: int, data: str) -> None:
        content = NotificationContent(source=SYSTEM_SOURCE, timestamp=now, data=data)
        self.env.queue.push(
            Event(EventKind.TOOL_RESPONSE_RECEIVED, priority=priority,
                  message=(Role.NOTIFICATION, content)), now)
